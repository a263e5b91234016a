#include "nestfuse/layers.hpp"

#include <algorithm>
#include <cstdint>

#include "nestfuse/error.hpp"
#include "nestfuse/kernels/kernels.hpp"

namespace nestfuse {
namespace {

struct Geometry {
  int in_channels;
  int out_channels;
  int height;
  int width;
  int kernel;
  int pad;
  std::size_t padded_width;
  std::size_t plane;  // padded plane size
  std::size_t n;      // flat output columns: height * padded_width
};

struct Workspace {
  std::vector<float> padded;
  std::vector<float> flat;
  std::vector<float> packing;
  std::vector<float> grad_rows;
  std::vector<float> flipped;
  std::vector<std::int32_t> offsets;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

Geometry geometry(const ConvParams& p, std::span<const FeatureMap* const> inputs) {
  if (inputs.empty() || inputs.front() == nullptr) {
    fail(ErrorCode::kTopology, p.name + ": no input");
  }
  const int h = inputs.front()->height();
  const int w = inputs.front()->width();
  int channels = 0;
  for (const FeatureMap* f : inputs) {
    if (f == nullptr || f->height() != h || f->width() != w) {
      fail(ErrorCode::kTopology, p.name + ": concatenated inputs disagree in spatial size");
    }
    channels += f->channels();
  }
  if (channels != p.in_channels) {
    fail(ErrorCode::kTopology, p.name + ": concatenated input has " + std::to_string(channels) +
                                   " channels, layer expects " + std::to_string(p.in_channels));
  }
  if (p.weight.size() != static_cast<std::size_t>(p.out_channels) * p.fan_in() ||
      p.bias.size() != static_cast<std::size_t>(p.out_channels)) {
    fail(ErrorCode::kTopology, p.name + ": parameter tensors do not match the layer shape");
  }
  Geometry g{};
  g.in_channels = channels;
  g.out_channels = p.out_channels;
  g.height = h;
  g.width = w;
  g.kernel = p.kernel;
  g.pad = p.kernel / 2;
  g.padded_width = static_cast<std::size_t>(w + 2 * g.pad);
  g.plane = static_cast<std::size_t>(h + 2 * g.pad) * g.padded_width;
  g.n = static_cast<std::size_t>(h) * g.padded_width;
  return g;
}

std::size_t padded_size(const Geometry& g, int channels) {
  return static_cast<std::size_t>(channels) * g.plane + kernels::kSourceSlack + 8;
}

// Copies the concatenation of `maps` into zero-bordered planes.
void fill_padded(std::span<const FeatureMap* const> maps, const Geometry& g, std::vector<float>& dst) {
  int total = 0;
  for (const FeatureMap* f : maps) total += f->channels();
  dst.assign(padded_size(g, total), 0.0f);
  std::size_t c_out = 0;
  for (const FeatureMap* f : maps) {
    for (int c = 0; c < f->channels(); ++c, ++c_out) {
      const float* src = f->channel(c).data();
      float* plane = dst.data() + c_out * g.plane;
      for (int y = 0; y < g.height; ++y) {
        std::copy_n(src + static_cast<std::size_t>(y) * g.width, g.width,
                    plane + static_cast<std::size_t>(y + g.pad) * g.padded_width + g.pad);
      }
    }
  }
}

void build_offsets(const Geometry& g, int channels, std::vector<std::int32_t>& offsets) {
  offsets.resize(static_cast<std::size_t>(channels) * g.kernel * g.kernel);
  std::size_t i = 0;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx)
        offsets[i++] = static_cast<std::int32_t>(static_cast<std::size_t>(c) * g.plane +
                                                 static_cast<std::size_t>(ky) * g.padded_width +
                                                 static_cast<std::size_t>(kx));
}

}  // namespace

void conv_forward(const ConvParams& params, std::span<const FeatureMap* const> inputs,
                  FeatureMap& out, Activation act) {
  const Geometry g = geometry(params, inputs);
  Workspace& ws = workspace();
  fill_padded(inputs, g, ws.padded);
  build_offsets(g, g.in_channels, ws.offsets);
  const int k = static_cast<int>(params.fan_in());
  ws.flat.resize(static_cast<std::size_t>(g.out_channels) * g.n);
  ws.packing.resize(kernels::workspace_floats(g.out_channels, k));

  kernels::ShiftedGemm gemm;
  gemm.m = g.out_channels;
  gemm.k = k;
  gemm.n = g.n;
  gemm.a = params.weight.data();
  gemm.bias = params.bias.data();
  gemm.src = ws.padded.data();
  gemm.offsets = ws.offsets.data();
  gemm.c = ws.flat.data();
  gemm.ldc = g.n;
  gemm.workspace = ws.packing.data();
  kernels::active().shifted_gemm(gemm);

  if (out.channels() != g.out_channels || out.height() != g.height || out.width() != g.width) {
    out = FeatureMap(g.out_channels, g.height, g.width);
  }
  for (int c = 0; c < g.out_channels; ++c) {
    float* dst = out.channel(c).data();
    const float* row = ws.flat.data() + static_cast<std::size_t>(c) * g.n;
    for (int y = 0; y < g.height; ++y) {
      const float* src = row + static_cast<std::size_t>(y) * g.padded_width;
      float* d = dst + static_cast<std::size_t>(y) * g.width;
      if (act == Activation::kRelu) {
        for (int x = 0; x < g.width; ++x) d[x] = src[x] > 0.0f ? src[x] : 0.0f;
      } else {
        std::copy_n(src, g.width, d);
      }
    }
  }
}

void conv_backward(const ConvParams& params, std::span<const FeatureMap* const> inputs,
                   const FeatureMap& out, const FeatureMap& grad_out,
                   std::span<FeatureMap* const> grad_inputs, ConvParams& grad, Activation act) {
  const Geometry g = geometry(params, inputs);
  require_same_shape(out, grad_out, "conv_backward");
  if (out.channels() != g.out_channels || out.height() != g.height || out.width() != g.width) {
    fail(ErrorCode::kTopology, params.name + ": output gradient shape " + grad_out.shape_string());
  }
  if (grad.weight.size() != params.weight.size() || grad.bias.size() != params.bias.size()) {
    fail(ErrorCode::kTopology, params.name + ": gradient buffer shape mismatch");
  }
  if (!grad_inputs.empty() && grad_inputs.size() != inputs.size()) {
    fail(ErrorCode::kTopology, params.name + ": grad_inputs must match inputs one to one");
  }
  Workspace& ws = workspace();
  const int k = static_cast<int>(params.fan_in());

  // Masked output gradient laid out like the forward flat output, junk
  // columns and the rounding tail zeroed.
  const std::size_t ldy = (g.n + kernels::kGradPad - 1) / kernels::kGradPad * kernels::kGradPad;
  ws.grad_rows.assign(static_cast<std::size_t>(g.out_channels) * ldy, 0.0f);
  for (int c = 0; c < g.out_channels; ++c) {
    const float* go = grad_out.channel(c).data();
    const float* o = out.channel(c).data();
    float* row = ws.grad_rows.data() + static_cast<std::size_t>(c) * ldy;
    double bias_acc = 0.0;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
        const float d = (act == Activation::kRelu && !(o[i] > 0.0f)) ? 0.0f : go[i];
        row[static_cast<std::size_t>(y) * g.padded_width + x] = d;
        bias_acc += d;
      }
    }
    grad.bias[static_cast<std::size_t>(c)] += static_cast<float>(bias_acc);
  }

  fill_padded(inputs, g, ws.padded);
  build_offsets(g, g.in_channels, ws.offsets);
  kernels::ShiftedGemmGrad wgrad;
  wgrad.m = g.out_channels;
  wgrad.k = k;
  wgrad.n = g.n;
  wgrad.dy = ws.grad_rows.data();
  wgrad.ldy = ldy;
  wgrad.src = ws.padded.data();
  wgrad.offsets = ws.offsets.data();
  wgrad.grad = grad.weight.data();
  kernels::active().shifted_gemm_grad(wgrad);

  // Input gradient: correlation of the padded output gradient with the
  // spatially flipped, channel-transposed kernel.
  int lo = g.in_channels;
  int hi = 0;
  {
    int c0 = 0;
    for (std::size_t i = 0; i < grad_inputs.size(); ++i) {
      const int c1 = c0 + inputs[i]->channels();
      if (grad_inputs[i] != nullptr) {
        if (!grad_inputs[i]->same_shape(*inputs[i])) {
          fail(ErrorCode::kTopology, params.name + ": grad_inputs shape mismatch");
        }
        lo = std::min(lo, c0);
        hi = std::max(hi, c1);
      }
      c0 = c1;
    }
  }
  if (lo >= hi) return;

  const int ks = g.kernel;
  const int kt = g.out_channels * ks * ks;
  ws.flipped.resize(static_cast<std::size_t>(hi - lo) * static_cast<std::size_t>(kt));
  for (int ci = lo; ci < hi; ++ci) {
    float* dst = ws.flipped.data() + static_cast<std::size_t>(ci - lo) * kt;
    for (int co = 0; co < g.out_channels; ++co)
      for (int ky = 0; ky < ks; ++ky)
        for (int kx = 0; kx < ks; ++kx) {
          const std::size_t src_index =
              ((static_cast<std::size_t>(co) * g.in_channels + ci) * ks + (ks - 1 - ky)) * ks +
              (ks - 1 - kx);
          dst[(static_cast<std::size_t>(co) * ks + ky) * ks + kx] = params.weight[src_index];
        }
  }

  ws.padded.assign(padded_size(g, g.out_channels), 0.0f);
  for (int c = 0; c < g.out_channels; ++c) {
    const float* row = ws.grad_rows.data() + static_cast<std::size_t>(c) * ldy;
    float* plane = ws.padded.data() + static_cast<std::size_t>(c) * g.plane;
    for (int y = 0; y < g.height; ++y) {
      std::copy_n(row + static_cast<std::size_t>(y) * g.padded_width, g.width,
                  plane + static_cast<std::size_t>(y + g.pad) * g.padded_width + g.pad);
    }
  }
  build_offsets(g, g.out_channels, ws.offsets);
  ws.flat.resize(static_cast<std::size_t>(hi - lo) * g.n);
  ws.packing.resize(kernels::workspace_floats(hi - lo, kt));

  kernels::ShiftedGemm gemm;
  gemm.m = hi - lo;
  gemm.k = kt;
  gemm.n = g.n;
  gemm.a = ws.flipped.data();
  gemm.bias = nullptr;
  gemm.src = ws.padded.data();
  gemm.offsets = ws.offsets.data();
  gemm.c = ws.flat.data();
  gemm.ldc = g.n;
  gemm.workspace = ws.packing.data();
  kernels::active().shifted_gemm(gemm);

  int c0 = 0;
  for (std::size_t i = 0; i < grad_inputs.size(); ++i) {
    FeatureMap* gi = grad_inputs[i];
    const int channels = inputs[i]->channels();
    if (gi != nullptr) {
      for (int c = 0; c < channels; ++c) {
        const float* row = ws.flat.data() + static_cast<std::size_t>(c0 + c - lo) * g.n;
        float* dst = gi->channel(c).data();
        for (int y = 0; y < g.height; ++y) {
          const float* src = row + static_cast<std::size_t>(y) * g.padded_width;
          float* d = dst + static_cast<std::size_t>(y) * g.width;
          for (int x = 0; x < g.width; ++x) d[x] += src[x];
        }
      }
    }
    c0 += channels;
  }
}

FeatureMap max_pool2x2(const FeatureMap& in) {
  if (in.height() % 2 != 0 || in.width() % 2 != 0) {
    fail(ErrorCode::kSize, "max_pool2x2: odd spatial size " + in.shape_string());
  }
  FeatureMap out(in.channels(), in.height() / 2, in.width() / 2);
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        const float a = in.at(c, 2 * y, 2 * x);
        const float b = in.at(c, 2 * y, 2 * x + 1);
        const float d = in.at(c, 2 * y + 1, 2 * x);
        const float e = in.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = std::max(std::max(a, b), std::max(d, e));
      }
  return out;
}

void max_pool2x2_backward(const FeatureMap& in, const FeatureMap& grad_out, FeatureMap& grad_in) {
  require_same_shape(in, grad_in, "max_pool2x2_backward");
  if (grad_out.channels() != in.channels() || grad_out.height() * 2 != in.height() ||
      grad_out.width() * 2 != in.width()) {
    fail(ErrorCode::kShapeMismatch, "max_pool2x2_backward: gradient shape " + grad_out.shape_string());
  }
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int x = 0; x < grad_out.width(); ++x) {
        int by = 2 * y;
        int bx = 2 * x;
        float best = in.at(c, by, bx);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const float v = in.at(c, 2 * y + dy, 2 * x + dx);
            if (v > best) {
              best = v;
              by = 2 * y + dy;
              bx = 2 * x + dx;
            }
          }
        grad_in.at(c, by, bx) += grad_out.at(c, y, x);
      }
}

FeatureMap upsample2x(const FeatureMap& in) {
  FeatureMap out(in.channels(), in.height() * 2, in.width() * 2);
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
  return out;
}

void upsample2x_backward(const FeatureMap& grad_out, FeatureMap& grad_in) {
  if (grad_out.channels() != grad_in.channels() || grad_out.height() != grad_in.height() * 2 ||
      grad_out.width() != grad_in.width() * 2) {
    fail(ErrorCode::kShapeMismatch, "upsample2x_backward: " + grad_out.shape_string() + " vs " +
                                        grad_in.shape_string());
  }
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int x = 0; x < grad_out.width(); ++x) grad_in.at(c, y / 2, x / 2) += grad_out.at(c, y, x);
}

}  // namespace nestfuse
