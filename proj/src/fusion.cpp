#include "nestfuse/fusion.hpp"

#include <Eigen/Dense>
#include <lapacke.h>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nestfuse/error.hpp"
#include "nestfuse/kernels/kernels.hpp"

namespace nestfuse {
namespace {

// Above this many elements the nuclear norm comes from the Gram matrix spectrum.
constexpr std::size_t kDirectSvdLimit = 512u * 512u;

void require_pair(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (a.empty()) fail(ErrorCode::kShapeMismatch, std::string(what) + ": empty feature map");
  require_same_shape(a, b, what);
}

float share(float mine, float other) {
  const float total = mine + other;
  return total > 0.0f ? mine / total : 0.5f;
}

float share(double mine, double other) {
  const double total = mine + other;
  return total > 0.0 ? static_cast<float>(mine / total) : 0.5f;
}

double nuclear_norm(std::span<const float> channel, int height, int width) {
  if (channel.size() <= kDirectSvdLimit) {
    // Singular values only (bidiagonal QR); LAPACK overwrites its input.
    std::vector<double> a(channel.begin(), channel.end());
    std::vector<double> sv(static_cast<std::size_t>(std::min(height, width)));
    std::vector<double> superb(sv.size());
    const lapack_int info = LAPACKE_dgesvd(LAPACK_ROW_MAJOR, 'N', 'N', height, width, a.data(), width,
                                           sv.data(), nullptr, 1, nullptr, 1, superb.data());
    if (info != 0) return std::nan("");
    double total = 0.0;
    for (double v : sv) total += v;
    return total;
  }
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Matrix m = Eigen::Map<const RowMajor>(channel.data(), height, width).cast<double>();
  const Matrix gram = height <= width ? Matrix(m * m.transpose()) : Matrix(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return std::nan("");
  double total = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    total += std::sqrt(std::max(0.0, eig.eigenvalues()[i]));
  }
  return total;
}

std::vector<double> pool_channels(const FeatureMap& f, PoolingKind kind) {
  std::vector<double> out(static_cast<std::size_t>(f.channels()));
  for (int c = 0; c < f.channels(); ++c) {
    try {
      out[static_cast<std::size_t>(c)] = global_pool(f.channel(c), f.height(), f.width(), kind);
    } catch (const Error& e) {
      fail(e.code(), "channel " + std::to_string(c) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(PoolingKind kind) noexcept {
  switch (kind) {
    case PoolingKind::kAvg: return "avg";
    case PoolingKind::kMax: return "max";
    case PoolingKind::kNuclear: return "nuclear";
  }
  return "unknown";
}

std::optional<PoolingKind> parse_pooling(std::string_view name) noexcept {
  for (PoolingKind k : {PoolingKind::kAvg, PoolingKind::kMax, PoolingKind::kNuclear}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

SpatialWeights spatial_weight_maps(const FeatureMap& a, const FeatureMap& b) {
  require_pair(a, b, "spatial_weight_maps");
  const auto& k = kernels::active();
  const std::size_t n = a.plane_size();
  SpatialWeights w{FeatureMap(1, a.height(), a.width()), FeatureMap(1, a.height(), a.width())};
  std::vector<float> norm_a(n, 0.0f);
  std::vector<float> norm_b(n, 0.0f);
  for (int c = 0; c < a.channels(); ++c) {
    k.abs_accumulate(norm_a.data(), a.channel(c).data(), n);
    k.abs_accumulate(norm_b.data(), b.channel(c).data(), n);
  }
  float* wa = w.first.data().data();
  float* wb = w.second.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    wa[i] = share(norm_a[i], norm_b[i]);
    wb[i] = share(norm_b[i], norm_a[i]);
  }
  return w;
}

FeatureMap spatial_fuse(const FeatureMap& a, const FeatureMap& b) {
  const SpatialWeights w = spatial_weight_maps(a, b);
  const auto& k = kernels::active();
  FeatureMap out(a.channels(), a.height(), a.width());
  for (int c = 0; c < a.channels(); ++c) {
    k.weighted_sum(out.channel(c).data(), a.channel(c).data(), w.first.data().data(),
                   b.channel(c).data(), w.second.data().data(), a.plane_size());
  }
  return out;
}

double global_pool(std::span<const float> channel, int height, int width, PoolingKind kind) {
  if (height <= 0 || width <= 0 ||
      channel.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    fail(ErrorCode::kShapeMismatch, "global_pool: channel size does not match height x width");
  }
  // max() would silently skip NaN, so every kind checks up front.
  for (float v : channel) {
    if (!std::isfinite(v)) fail(ErrorCode::kNumerical, "non-finite value in pooled channel");
  }
  const auto& k = kernels::active();
  double value = 0.0;
  switch (kind) {
    case PoolingKind::kAvg:
      value = k.sum(channel.data(), channel.size()) / static_cast<double>(channel.size());
      break;
    case PoolingKind::kMax:
      value = k.max(channel.data(), channel.size());
      break;
    case PoolingKind::kNuclear:
      value = nuclear_norm(channel, height, width);
      break;
  }
  if (!std::isfinite(value)) {
    fail(ErrorCode::kNumerical, std::string(to_string(kind)) + " pooling did not produce a finite value");
  }
  return value;
}

ChannelWeights channel_weights(const FeatureMap& a, const FeatureMap& b, PoolingKind kind) {
  require_pair(a, b, "channel_weights");
  const std::vector<double> pa = pool_channels(a, kind);
  const std::vector<double> pb = pool_channels(b, kind);
  ChannelWeights w;
  w.first.resize(pa.size());
  w.second.resize(pa.size());
  for (std::size_t c = 0; c < pa.size(); ++c) {
    w.first[c] = share(pa[c], pb[c]);
    w.second[c] = share(pb[c], pa[c]);
  }
  return w;
}

FeatureMap channel_fuse(const FeatureMap& a, const FeatureMap& b, PoolingKind kind) {
  const ChannelWeights w = channel_weights(a, b, kind);
  const auto& k = kernels::active();
  FeatureMap out(a.channels(), a.height(), a.width());
  for (int c = 0; c < a.channels(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    k.scaled_sum(out.channel(c).data(), a.channel(c).data(), w.first[i], b.channel(c).data(),
                 w.second[i], a.plane_size());
  }
  return out;
}

FeatureMap combine(const FeatureMap& spatial, const FeatureMap& channel) {
  require_pair(spatial, channel, "combine");
  FeatureMap out(spatial.channels(), spatial.height(), spatial.width());
  kernels::active().average(out.data().data(), spatial.data().data(), channel.data().data(),
                            out.size());
  return out;
}

MultiScaleFeatures fuse_multiscale(const MultiScaleFeatures& a, const MultiScaleFeatures& b,
                                   PoolingKind kind) {
  a.validate();
  b.validate();
  MultiScaleFeatures out;
  for (int m = 0; m < kNumScales; ++m) {
    const FeatureMap& fa = a.scales[static_cast<std::size_t>(m)];
    const FeatureMap& fb = b.scales[static_cast<std::size_t>(m)];
    if (!fa.same_shape(fb)) {
      fail(ErrorCode::kTopology, "scale " + std::to_string(m + 1) + ": " + fa.shape_string() +
                                     " vs " + fb.shape_string());
    }
    try {
      out.scales[static_cast<std::size_t>(m)] =
          combine(spatial_fuse(fa, fb), channel_fuse(fa, fb, kind));
    } catch (const Error& e) {
      fail(e.code(), "scale " + std::to_string(m + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace nestfuse
