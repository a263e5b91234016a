#pragma once

#include "nestfuse/fusion.hpp"
#include "nestfuse/network.hpp"

// Image-level inference for arbitrary sizes (reflect padding to a multiple
// of 16, cropped back afterwards).
namespace nestfuse {

/// Which decoder output produces the image: the main 1x1 convolution (0) or
/// deep-supervision head 1..3.
struct OutputSelect {
  int head = 0;
};

Image reconstruct_image(const Image& image, const NetworkState& state, OutputSelect out = {});

/// Encodes both sources, fuses every scale and decodes.
/// Throws Error(kShapeMismatch) when the sources differ in size.
Image fuse_images(const Image& a, const Image& b, const NetworkState& state, PoolingKind kind,
                  OutputSelect out = {});

}  // namespace nestfuse
