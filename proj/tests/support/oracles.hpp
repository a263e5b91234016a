#pragma once

#include <vector>

#include "nestfuse/fusion.hpp"
#include "nestfuse/layers.hpp"
#include "nestfuse/tensor.hpp"

// Straightforward reference implementations used as test oracles. They share
// no code with the library.
namespace nftest::oracle {

using nestfuse::FeatureMap;
using nestfuse::Image;

/// Direct zero-padded convolution over the concatenated inputs, in double.
FeatureMap conv(const nestfuse::ConvParams& p, const std::vector<const FeatureMap*>& inputs, bool relu);

/// Singular values by one-sided Jacobi rotations (rows x cols, row-major).
std::vector<double> singular_values(std::vector<double> a, int rows, int cols);

double pool(const FeatureMap& f, int c, nestfuse::PoolingKind kind);

FeatureMap spatial_fuse(const FeatureMap& a, const FeatureMap& b);
FeatureMap channel_fuse(const FeatureMap& a, const FeatureMap& b, nestfuse::PoolingKind kind);
FeatureMap combine(const FeatureMap& a, const FeatureMap& b);

/// 8-bit level as the metrics define it.
int level(float v);

double entropy(const Image& img);
double std_dev(const Image& img);
double mutual_information(const Image& a, const Image& b);

/// Mean SSIM with an explicit 2-D Gaussian window, valid positions only.
double ssim(const Image& a, const Image& b);

}  // namespace nftest::oracle
