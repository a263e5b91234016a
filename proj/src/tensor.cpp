#include "nestfuse/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "nestfuse/error.hpp"
#include "nestfuse/topology.hpp"

namespace nestfuse {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kSize: return "size error";
    case ErrorCode::kTopology: return "topology error";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kConfiguration: return "configuration error";
    case ErrorCode::kNumerical: return "numerical error";
    case ErrorCode::kDecode: return "decode error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kChecksum: return "checksum failure";
    case ErrorCode::kCheckpointTopology: return "checkpoint topology mismatch";
    case ErrorCode::kEmptyCorpus: return "empty corpus";
    case ErrorCode::kInvalidArgument: return "invalid argument";
  }
  return "unknown error";
}

FeatureMap::FeatureMap(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    fail(ErrorCode::kSize, "feature map dimensions must be positive, got " +
                               std::to_string(channels) + "x" + std::to_string(height) + "x" +
                               std::to_string(width));
  }
  data_.assign(static_cast<std::size_t>(channels) * plane_size(), fill);
}

std::string FeatureMap::shape_string() const {
  return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
}

void FeatureMap::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool FeatureMap::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void MultiScaleFeatures::validate() const {
  const auto& first = scales[0];
  if (first.empty()) fail(ErrorCode::kTopology, "multi-scale features: scale 1 is empty");
  for (int m = 0; m < kNumScales; ++m) {
    const auto& f = scales[static_cast<std::size_t>(m)];
    const int expected_channels = topology::kScaleChannels[static_cast<std::size_t>(m)];
    const int expected_h = first.height() >> m;
    const int expected_w = first.width() >> m;
    if (f.channels() != expected_channels || f.height() != expected_h ||
        f.width() != expected_w || expected_h == 0 || expected_w == 0) {
      fail(ErrorCode::kTopology, "multi-scale features: scale " + std::to_string(m + 1) +
                                     " has shape " + f.shape_string() + ", expected " +
                                     std::to_string(expected_channels) + "x" +
                                     std::to_string(expected_h) + "x" +
                                     std::to_string(expected_w));
    }
  }
}

float max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "max_abs_diff");
  float worst = 0.0f;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) worst = std::max(worst, std::fabs(da[i] - db[i]));
  return worst;
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kShapeMismatch,
         std::string(what) + ": shapes differ (" + a.shape_string() + " vs " + b.shape_string() + ")");
  }
}

void require_single_channel(const FeatureMap& img, const char* what) {
  if (img.channels() != 1 || img.empty()) {
    fail(ErrorCode::kShapeMismatch,
         std::string(what) + ": expected a single-channel image, got " + img.shape_string());
  }
}

}  // namespace nestfuse
