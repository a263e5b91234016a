#pragma once

#include <span>

#include "nestfuse/tensor.hpp"

namespace nestfuse {

/// SSIM settings: Gaussian window of side min(11, H) x min(11, W), sigma 1.5,
/// renormalised; K1 = 0.01, K2 = 0.03, dynamic range 1; valid filtering.
namespace ssim_params {
inline constexpr int kWindow = 11;
inline constexpr double kSigma = 1.5;
inline constexpr double kC1 = 0.01 * 0.01;
inline constexpr double kC2 = 0.03 * 0.03;
}  // namespace ssim_params

/// Squared Frobenius norm of (output - target).
double pixel_loss(const Image& output, const Image& target);

/// grad += scale * d pixel_loss / d output.
void pixel_loss_grad(const Image& output, const Image& target, double scale, FeatureMap& grad);

/// Mean local SSIM of two single-channel images, in [-1, 1].
double ssim_index(const Image& a, const Image& b);

/// SSIM index, adding scale * d SSIM / d a into `grad_a`.
double ssim_index_grad(const Image& a, const Image& b, double scale, FeatureMap& grad_a);

/// 1 - ssim_index(output, target).
double ssim_loss(const Image& output, const Image& target);

struct LossBreakdown {
  double pixel = 0.0;
  double ssim = 0.0;  // 1 - SSIM
  double total = 0.0;
  double lambda = 0.0;
};

/// pixel + lambda * ssim.
LossBreakdown total_loss(const Image& output, const Image& target, double lambda);

/// total_loss, adding scale * d total / d output into `grad`.
LossBreakdown total_loss_grad(const Image& output, const Image& target, double lambda,
                              double scale, FeatureMap& grad);

/// Mean of total_loss over the three deep-supervision outputs.
/// Throws Error(kInvalidArgument) unless exactly three outputs are given.
LossBreakdown deep_supervised_loss(const Image& target, std::span<const Image> outputs,
                                   double lambda);

/// Componentwise mean of breakdowns, total recomputed as pixel + lambda * ssim.
LossBreakdown mean_breakdown(std::span<const LossBreakdown> parts);

}  // namespace nestfuse
