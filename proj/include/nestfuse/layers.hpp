#pragma once

#include <span>
#include <string>
#include <vector>

#include "nestfuse/tensor.hpp"

namespace nestfuse {

/// Weights and bias of one convolution, stride 1, zero padding kernel/2.
struct ConvParams {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  std::vector<float> weight;  // out x in x kernel x kernel
  std::vector<float> bias;    // out

  std::size_t fan_in() const noexcept {
    return static_cast<std::size_t>(in_channels) * static_cast<std::size_t>(kernel) *
           static_cast<std::size_t>(kernel);
  }

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

enum class Activation { kNone, kRelu };

/// Convolution over the channel-wise concatenation of `inputs` (in order).
/// All inputs must share height and width, and their channels must sum to
/// `params.in_channels`; otherwise Error(kTopology).
void conv_forward(const ConvParams& params, std::span<const FeatureMap* const> inputs,
                  FeatureMap& out, Activation act);

/// Backward pass of conv_forward. `out` is the forward output (used for the
/// ReLU mask). Gradients are accumulated: `grad` receives dW/db, and every
/// non-null `grad_inputs[i]` (shaped like `inputs[i]`) receives dX.
void conv_backward(const ConvParams& params, std::span<const FeatureMap* const> inputs,
                   const FeatureMap& out, const FeatureMap& grad_out,
                   std::span<FeatureMap* const> grad_inputs, ConvParams& grad, Activation act);

/// 2x2 stride-2 max pooling; height and width must be even.
FeatureMap max_pool2x2(const FeatureMap& in);

/// Routes each pooled gradient to the first maximal element of its window.
void max_pool2x2_backward(const FeatureMap& in, const FeatureMap& grad_out, FeatureMap& grad_in);

/// Nearest-neighbour x2 upsampling: every value becomes a 2x2 block.
FeatureMap upsample2x(const FeatureMap& in);

/// Sums each 2x2 block of `grad_out` into `grad_in`.
void upsample2x_backward(const FeatureMap& grad_out, FeatureMap& grad_in);

}  // namespace nestfuse
