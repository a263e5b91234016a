#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nestfuse/layers.hpp"
#include "nestfuse/tensor.hpp"
#include "nestfuse/topology.hpp"

namespace nestfuse {

/// All convolution parameters of the auto-encoder, in topology order.
///
/// The three deep-supervision heads are present only when the state was
/// created with `deep_supervision = true`.
class NetworkState {
 public:
  /// Every tensor shaped per the topology and filled with zeros.
  static NetworkState zeros(bool deep_supervision);

  bool deep_supervision() const noexcept {
    return layers_.size() == static_cast<std::size_t>(topology::kNumLayersWithHeads);
  }

  std::span<ConvParams> layers() noexcept { return layers_; }
  std::span<const ConvParams> layers() const noexcept { return layers_; }

  ConvParams& layer(topology::LayerId id);
  const ConvParams& layer(topology::LayerId id) const;

  const ConvParams* find(std::string_view name) const noexcept;

  /// Throws Error(kTopology) unless every tensor matches the channel plan.
  void validate() const;

  /// Removes the deep-supervision heads, if any.
  void drop_heads();

  std::size_t parameter_count() const noexcept;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;

 private:
  std::vector<ConvParams> layers_;
};

/// Kaiming fan-in normal kernels, zero biases; deterministic for a seed.
NetworkState init_network(std::uint64_t seed, bool deep_supervision);

/// Encoder: image (1xHxW, H and W multiples of 16) -> four feature scales.
MultiScaleFeatures encode(const Image& image, const NetworkState& state);

/// Nest-connection decoder; output clamped to [0, 1].
Image decode(const MultiScaleFeatures& features, const NetworkState& state);

/// Outputs of the three deep-supervision heads (on X11, X12, X13), clamped.
std::array<Image, 3> decode_deep_supervised(const MultiScaleFeatures& features,
                                            const NetworkState& state);

/// decode(encode(image)).
Image reconstruct(const Image& image, const NetworkState& state);

/// Activations kept by a training forward pass.
struct ForwardTrace {
  // encoder
  FeatureMap input;
  FeatureMap stem;
  std::array<FeatureMap, 4> encoder_mid;
  std::array<FeatureMap, 3> pooled;
  MultiScaleFeatures features;
  // decoder
  FeatureMap up_phi2, up_phi3, up_phi4, up_x21, up_x22, up_x31;
  FeatureMap mid31, x31, mid21, x21, mid22, x22;
  FeatureMap mid11, x11, mid12, x12, mid13, x13;
  FeatureMap output;              // final 1x1 conv + ReLU, unclamped
  std::array<FeatureMap, 3> heads;  // deep-supervision outputs, unclamped
};

/// Which outputs a training pass drives.
enum class OutputMode { kMain, kDeepSupervision };

/// Forward pass retaining activations. Outputs are post-ReLU and unclamped.
void forward_train(const Image& image, const NetworkState& state, OutputMode mode,
                   ForwardTrace& trace);

/// Accumulates parameter gradients into `grads` (shaped like `state`).
/// `grad_outputs` holds dL/d(output) for kMain (one entry) or dL/d(head q)
/// for kDeepSupervision (three entries).
void backward_train(const ForwardTrace& trace, const NetworkState& state, OutputMode mode,
                    std::span<const FeatureMap> grad_outputs, NetworkState& grads);

}  // namespace nestfuse
