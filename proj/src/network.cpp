#include "nestfuse/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "nestfuse/error.hpp"

namespace nestfuse {

using topology::LayerId;

namespace {

constexpr std::array<LayerId, 4> kEncoderFirst = {LayerId::kEcb10a, LayerId::kEcb20a,
                                                  LayerId::kEcb30a, LayerId::kEcb40a};

LayerId second(LayerId first) { return static_cast<LayerId>(static_cast<int>(first) + 1); }

template <std::size_t N>
void conv(const NetworkState& s, LayerId id, const std::array<const FeatureMap*, N>& parts,
          FeatureMap& out) {
  conv_forward(s.layer(id), parts, out, Activation::kRelu);
}

// Two 3x3 ReLU convolutions through the block's internal width.
template <std::size_t N>
void block(const NetworkState& s, LayerId first, const std::array<const FeatureMap*, N>& parts,
           FeatureMap& mid, FeatureMap& out) {
  conv(s, first, parts, mid);
  conv(s, second(first), std::array<const FeatureMap*, 1>{&mid}, out);
}

void run_encoder(const Image& image, const NetworkState& s, ForwardTrace& t) {
  require_single_channel(image, "encode");
  if (image.height() % topology::kSizeMultiple != 0 || image.width() % topology::kSizeMultiple != 0) {
    fail(ErrorCode::kSize, "encode: input " + image.shape_string() +
                               " must have height and width divisible by 16");
  }
  t.input = image;
  conv(s, LayerId::kStem, std::array<const FeatureMap*, 1>{&t.input}, t.stem);
  const FeatureMap* x = &t.stem;
  for (std::size_t m = 0; m < 4; ++m) {
    block(s, kEncoderFirst[m], std::array<const FeatureMap*, 1>{x}, t.encoder_mid[m],
          t.features.scales[m]);
    if (m < 3) {
      t.pooled[m] = max_pool2x2(t.features.scales[m]);
      x = &t.pooled[m];
    }
  }
}

void run_decoder(const MultiScaleFeatures& f, const NetworkState& s, OutputMode mode,
                 ForwardTrace& t) {
  f.validate();
  const auto& [phi1, phi2, phi3, phi4] = f.scales;
  t.up_phi4 = upsample2x(phi4);
  block(s, LayerId::kDcb31a, std::array<const FeatureMap*, 2>{&phi3, &t.up_phi4}, t.mid31, t.x31);
  t.up_phi3 = upsample2x(phi3);
  block(s, LayerId::kDcb21a, std::array<const FeatureMap*, 2>{&phi2, &t.up_phi3}, t.mid21, t.x21);
  t.up_phi2 = upsample2x(phi2);
  block(s, LayerId::kDcb11a, std::array<const FeatureMap*, 2>{&phi1, &t.up_phi2}, t.mid11, t.x11);
  t.up_x31 = upsample2x(t.x31);
  block(s, LayerId::kDcb22a, std::array<const FeatureMap*, 3>{&phi2, &t.x21, &t.up_x31}, t.mid22,
        t.x22);
  t.up_x21 = upsample2x(t.x21);
  block(s, LayerId::kDcb12a, std::array<const FeatureMap*, 3>{&phi1, &t.x11, &t.up_x21}, t.mid12,
        t.x12);
  t.up_x22 = upsample2x(t.x22);
  block(s, LayerId::kDcb13a, std::array<const FeatureMap*, 4>{&phi1, &t.x11, &t.x12, &t.up_x22},
        t.mid13, t.x13);

  if (mode == OutputMode::kMain) {
    conv(s, LayerId::kOutput, std::array<const FeatureMap*, 1>{&t.x13}, t.output);
    return;
  }
  if (!s.deep_supervision()) {
    fail(ErrorCode::kConfiguration, "deep-supervised decoding requires the three output heads");
  }
  const std::array<const FeatureMap*, 3> taps = {&t.x11, &t.x12, &t.x13};
  const std::array<LayerId, 3> heads = {LayerId::kHead1, LayerId::kHead2, LayerId::kHead3};
  for (std::size_t q = 0; q < 3; ++q) {
    conv(s, heads[q], std::array<const FeatureMap*, 1>{taps[q]}, t.heads[q]);
  }
}

Image clamped(const FeatureMap& raw) {
  Image out = raw;
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

FeatureMap zeros_like(const FeatureMap& f) {
  return FeatureMap(f.channels(), f.height(), f.width());
}

class Backprop {
 public:
  Backprop(const NetworkState& s, NetworkState& grads) : s_(s), grads_(grads) {}

  void conv_layer(LayerId id, std::span<const FeatureMap* const> parts, const FeatureMap& out,
                  const FeatureMap& grad_out, std::span<FeatureMap* const> grad_parts) {
    conv_backward(s_.layer(id), parts, out, grad_out, grad_parts, grads_.layer(id),
                  Activation::kRelu);
  }

  template <std::size_t N>
  void block(LayerId first, const std::array<const FeatureMap*, N>& parts, const FeatureMap& mid,
             const FeatureMap& out, const FeatureMap& grad_out,
             const std::array<FeatureMap*, N>& grad_parts) {
    FeatureMap grad_mid = zeros_like(mid);
    const std::array<const FeatureMap*, 1> mid_parts = {&mid};
    const std::array<FeatureMap*, 1> grad_mid_parts = {&grad_mid};
    conv_layer(second(first), mid_parts, out, grad_out, grad_mid_parts);
    conv_layer(first, parts, mid, grad_mid, grad_parts);
  }

 private:
  const NetworkState& s_;
  NetworkState& grads_;
};

}  // namespace

NetworkState NetworkState::zeros(bool deep_supervision) {
  NetworkState state;
  const int count = topology::layer_count(deep_supervision);
  state.layers_.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto& spec = topology::kLayers[static_cast<std::size_t>(i)];
    ConvParams p;
    p.name = std::string(spec.name);
    p.in_channels = spec.in_channels;
    p.out_channels = spec.out_channels;
    p.kernel = spec.kernel;
    p.weight.assign(static_cast<std::size_t>(spec.out_channels) * p.fan_in(), 0.0f);
    p.bias.assign(static_cast<std::size_t>(spec.out_channels), 0.0f);
    state.layers_.push_back(std::move(p));
  }
  return state;
}

ConvParams& NetworkState::layer(LayerId id) {
  const auto i = static_cast<std::size_t>(id);
  if (i >= layers_.size()) {
    fail(ErrorCode::kConfiguration,
         "network state has no layer " + std::string(topology::spec(id).name));
  }
  return layers_[i];
}

const ConvParams& NetworkState::layer(LayerId id) const {
  return const_cast<NetworkState*>(this)->layer(id);
}

const ConvParams* NetworkState::find(std::string_view name) const noexcept {
  for (const auto& p : layers_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void NetworkState::validate() const {
  if (layers_.size() != static_cast<std::size_t>(topology::kNumCoreLayers) &&
      layers_.size() != static_cast<std::size_t>(topology::kNumLayersWithHeads)) {
    fail(ErrorCode::kTopology, "network state has " + std::to_string(layers_.size()) + " layers");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = topology::kLayers[i];
    const auto& p = layers_[i];
    if (p.name != spec.name || p.in_channels != spec.in_channels ||
        p.out_channels != spec.out_channels || p.kernel != spec.kernel ||
        p.weight.size() != static_cast<std::size_t>(spec.out_channels) * p.fan_in() ||
        p.bias.size() != static_cast<std::size_t>(spec.out_channels)) {
      fail(ErrorCode::kTopology, "layer " + std::to_string(i) + " (" + p.name +
                                     ") does not match topology entry " + std::string(spec.name));
    }
  }
}

void NetworkState::drop_heads() { layers_.resize(static_cast<std::size_t>(topology::kNumCoreLayers)); }

std::size_t NetworkState::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : layers_) n += p.weight.size() + p.bias.size();
  return n;
}

NetworkState init_network(std::uint64_t seed, bool deep_supervision) {
  NetworkState state = NetworkState::zeros(deep_supervision);
  std::mt19937_64 rng(seed);
  for (ConvParams& p : state.layers()) {
    std::normal_distribution<float> dist(0.0f,
                                         std::sqrt(2.0f / static_cast<float>(p.fan_in())));
    for (float& w : p.weight) w = dist(rng);
  }
  return state;
}

MultiScaleFeatures encode(const Image& image, const NetworkState& state) {
  ForwardTrace t;
  run_encoder(image, state, t);
  return std::move(t.features);
}

Image decode(const MultiScaleFeatures& features, const NetworkState& state) {
  ForwardTrace t;
  run_decoder(features, state, OutputMode::kMain, t);
  return clamped(t.output);
}

std::array<Image, 3> decode_deep_supervised(const MultiScaleFeatures& features,
                                            const NetworkState& state) {
  ForwardTrace t;
  run_decoder(features, state, OutputMode::kDeepSupervision, t);
  return {clamped(t.heads[0]), clamped(t.heads[1]), clamped(t.heads[2])};
}

Image reconstruct(const Image& image, const NetworkState& state) {
  return decode(encode(image, state), state);
}

void forward_train(const Image& image, const NetworkState& state, OutputMode mode,
                   ForwardTrace& trace) {
  run_encoder(image, state, trace);
  run_decoder(trace.features, state, mode, trace);
}

void backward_train(const ForwardTrace& t, const NetworkState& state, OutputMode mode,
                    std::span<const FeatureMap> grad_outputs, NetworkState& grads) {
  const std::size_t expected = mode == OutputMode::kMain ? 1 : 3;
  if (grad_outputs.size() != expected) {
    fail(ErrorCode::kConfiguration, "backward_train: expected " + std::to_string(expected) +
                                        " output gradients, got " +
                                        std::to_string(grad_outputs.size()));
  }
  Backprop bp(state, grads);
  const auto& [phi1, phi2, phi3, phi4] = t.features.scales;

  FeatureMap g_x13 = zeros_like(t.x13), g_x12 = zeros_like(t.x12), g_x11 = zeros_like(t.x11);
  FeatureMap g_x22 = zeros_like(t.x22), g_x21 = zeros_like(t.x21), g_x31 = zeros_like(t.x31);
  std::array<FeatureMap, 4> g_phi = {zeros_like(phi1), zeros_like(phi2), zeros_like(phi3),
                                     zeros_like(phi4)};

  if (mode == OutputMode::kMain) {
    const std::array<const FeatureMap*, 1> parts = {&t.x13};
    const std::array<FeatureMap*, 1> gparts = {&g_x13};
    bp.conv_layer(LayerId::kOutput, parts, t.output, grad_outputs[0], gparts);
  } else {
    const std::array<const FeatureMap*, 3> taps = {&t.x11, &t.x12, &t.x13};
    const std::array<FeatureMap*, 3> gtaps = {&g_x11, &g_x12, &g_x13};
    const std::array<LayerId, 3> heads = {LayerId::kHead1, LayerId::kHead2, LayerId::kHead3};
    for (std::size_t q = 0; q < 3; ++q) {
      const std::array<const FeatureMap*, 1> parts = {taps[q]};
      const std::array<FeatureMap*, 1> gparts = {gtaps[q]};
      bp.conv_layer(heads[q], parts, t.heads[q], grad_outputs[q], gparts);
    }
  }

  {
    FeatureMap g_up = zeros_like(t.up_x22);
    bp.block(LayerId::kDcb13a, std::array<const FeatureMap*, 4>{&phi1, &t.x11, &t.x12, &t.up_x22},
             t.mid13, t.x13, g_x13, std::array<FeatureMap*, 4>{&g_phi[0], &g_x11, &g_x12, &g_up});
    upsample2x_backward(g_up, g_x22);
  }
  {
    FeatureMap g_up = zeros_like(t.up_x21);
    bp.block(LayerId::kDcb12a, std::array<const FeatureMap*, 3>{&phi1, &t.x11, &t.up_x21}, t.mid12,
             t.x12, g_x12, std::array<FeatureMap*, 3>{&g_phi[0], &g_x11, &g_up});
    upsample2x_backward(g_up, g_x21);
  }
  {
    FeatureMap g_up = zeros_like(t.up_x31);
    bp.block(LayerId::kDcb22a, std::array<const FeatureMap*, 3>{&phi2, &t.x21, &t.up_x31}, t.mid22,
             t.x22, g_x22, std::array<FeatureMap*, 3>{&g_phi[1], &g_x21, &g_up});
    upsample2x_backward(g_up, g_x31);
  }
  {
    FeatureMap g_up = zeros_like(t.up_phi2);
    bp.block(LayerId::kDcb11a, std::array<const FeatureMap*, 2>{&phi1, &t.up_phi2}, t.mid11, t.x11,
             g_x11, std::array<FeatureMap*, 2>{&g_phi[0], &g_up});
    upsample2x_backward(g_up, g_phi[1]);
  }
  {
    FeatureMap g_up = zeros_like(t.up_phi3);
    bp.block(LayerId::kDcb21a, std::array<const FeatureMap*, 2>{&phi2, &t.up_phi3}, t.mid21, t.x21,
             g_x21, std::array<FeatureMap*, 2>{&g_phi[1], &g_up});
    upsample2x_backward(g_up, g_phi[2]);
  }
  {
    FeatureMap g_up = zeros_like(t.up_phi4);
    bp.block(LayerId::kDcb31a, std::array<const FeatureMap*, 2>{&phi3, &t.up_phi4}, t.mid31, t.x31,
             g_x31, std::array<FeatureMap*, 2>{&g_phi[2], &g_up});
    upsample2x_backward(g_up, g_phi[3]);
  }

  // Encoder, deepest scale first; each pooled copy routes back into the
  // previous scale's feature gradient.
  for (int m = 3; m >= 0; --m) {
    const auto mi = static_cast<std::size_t>(m);
    const FeatureMap& block_in = m == 0 ? t.stem : t.pooled[mi - 1];
    FeatureMap g_in = zeros_like(block_in);
    bp.block(kEncoderFirst[mi], std::array<const FeatureMap*, 1>{&block_in}, t.encoder_mid[mi],
             t.features.scales[mi], g_phi[mi], std::array<FeatureMap*, 1>{&g_in});
    if (m > 0) {
      max_pool2x2_backward(t.features.scales[mi - 1], g_in, g_phi[mi - 1]);
    } else {
      const std::array<const FeatureMap*, 1> parts = {&t.input};
      bp.conv_layer(LayerId::kStem, parts, t.stem, g_in, std::span<FeatureMap* const>{});
    }
  }
}

}  // namespace nestfuse
