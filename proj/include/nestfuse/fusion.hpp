#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nestfuse/tensor.hpp"

// Two-source attention fusion of deep features: a spatial stage weighting
// every position by the l1 norm of its channel vector, a channel stage
// weighting whole channels by a global pooling scalar, and their average.
namespace nestfuse {

enum class PoolingKind { kAvg, kMax, kNuclear };

std::string_view to_string(PoolingKind kind) noexcept;
std::optional<PoolingKind> parse_pooling(std::string_view name) noexcept;

/// Per-position weights of the two sources, each 1xHxW.
struct SpatialWeights {
  FeatureMap first;
  FeatureMap second;
};

/// Per-channel weights of the two sources.
struct ChannelWeights {
  std::vector<float> first;
  std::vector<float> second;
};

/// beta_k = |phi_k(x,y)|_1 / sum_i |phi_i(x,y)|_1; 0.5/0.5 where both norms vanish.
SpatialWeights spatial_weight_maps(const FeatureMap& a, const FeatureMap& b);

/// beta_1 * a + beta_2 * b, position by position.
FeatureMap spatial_fuse(const FeatureMap& a, const FeatureMap& b);

/// Mean, maximum or nuclear norm of one HxW channel (row-major).
/// Throws Error(kNumerical) on non-finite data or SVD failure.
double global_pool(std::span<const float> channel, int height, int width, PoolingKind kind);

/// alpha_k(n) = P(a_k(n)) / sum_i P(a_i(n)); 0.5/0.5 where the sum vanishes.
ChannelWeights channel_weights(const FeatureMap& a, const FeatureMap& b, PoolingKind kind);

/// alpha_1(n) * a(n) + alpha_2(n) * b(n), channel by channel.
FeatureMap channel_fuse(const FeatureMap& a, const FeatureMap& b, PoolingKind kind);

/// (spatial + channel) * 0.5.
FeatureMap combine(const FeatureMap& spatial, const FeatureMap& channel);

/// combine(spatial_fuse, channel_fuse) at every scale independently.
MultiScaleFeatures fuse_multiscale(const MultiScaleFeatures& a, const MultiScaleFeatures& b,
                                   PoolingKind kind);

}  // namespace nestfuse
