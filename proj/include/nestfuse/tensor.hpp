#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nestfuse {

/// Dense C x H x W float tensor, row-major within each channel plane.
///
/// This is the unit of every network and fusion computation. Single-channel
/// maps double as grayscale images with values nominally in [0, 1].
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, float fill = 0.0f);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<float> channel(int c) noexcept {
    return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
  }
  std::span<const float> channel(int c) const noexcept {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(),
                                                 plane_size());
  }

  float& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  bool same_shape(const FeatureMap& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  /// "CxHxW", used in error messages.
  std::string shape_string() const;

  void fill(float value);

  /// True when every element is finite.
  bool all_finite() const noexcept;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Grayscale image; by convention a FeatureMap with one channel.
using Image = FeatureMap;

inline constexpr int kNumScales = 4;

/// Encoder output: one feature map per scale, channels [64, 112, 160, 208],
/// each scale half the spatial size of the previous one.
struct MultiScaleFeatures {
  std::array<FeatureMap, kNumScales> scales;

  /// Throws Error(kTopology) unless the channel plan and halving rule hold.
  void validate() const;
};

/// Largest absolute elementwise difference; shapes must match.
float max_abs_diff(const FeatureMap& a, const FeatureMap& b);

/// Throws Error(kShapeMismatch) naming `what` when shapes differ.
void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what);

/// Throws Error(kShapeMismatch) unless `img` has exactly one channel.
void require_single_channel(const FeatureMap& img, const char* what);

}  // namespace nestfuse
