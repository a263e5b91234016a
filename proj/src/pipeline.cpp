#include "nestfuse/pipeline.hpp"

#include <string>

#include "nestfuse/error.hpp"
#include "nestfuse/image_io.hpp"

namespace nestfuse {
namespace {

Image decode_with(const MultiScaleFeatures& f, const NetworkState& state, OutputSelect out) {
  if (out.head == 0) return decode(f, state);
  if (out.head < 1 || out.head > 3) {
    fail(ErrorCode::kInvalidArgument, "output head must be 1, 2 or 3, got " + std::to_string(out.head));
  }
  auto heads = decode_deep_supervised(f, state);
  return std::move(heads[static_cast<std::size_t>(out.head - 1)]);
}

}  // namespace

Image reconstruct_image(const Image& image, const NetworkState& state, OutputSelect out) {
  require_single_channel(image, "reconstruct_image");
  return pad_crop_wrap(image, [&](const Image& padded) {
    return decode_with(encode(padded, state), state, out);
  });
}

Image fuse_images(const Image& a, const Image& b, const NetworkState& state, PoolingKind kind,
                  OutputSelect out) {
  require_single_channel(a, "fuse_images");
  require_single_channel(b, "fuse_images");
  if (!a.same_shape(b)) {
    fail(ErrorCode::kShapeMismatch,
         "source images differ in size: " + a.shape_string() + " vs " + b.shape_string());
  }
  const Image pb = pad_to_multiple(b, topology::kSizeMultiple);
  const Image fused = pad_crop_wrap(a, [&](const Image& pa) {
    return decode_with(fuse_multiscale(encode(pa, state), encode(pb, state), kind), state, out);
  });
  return fused;
}

}  // namespace nestfuse
