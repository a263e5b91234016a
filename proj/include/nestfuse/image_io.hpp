#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nestfuse/tensor.hpp"

namespace nestfuse {

/// Decodes PNG/JPEG (any bit depth) into a 1xHxW image in [0, 1].
/// Colour is reduced to luminance 0.299 R + 0.587 G + 0.114 B; alpha is dropped.
/// Throws Error(kDecode) naming the path.
Image load_image(const std::filesystem::path& path);

/// Decodes an in-memory encoded image; `what` names it in errors.
Image decode_image(std::span<const std::uint8_t> bytes, const std::string& what);

/// Clamps to [0, 1] and quantises with floor(v * 255 + 0.5).
std::vector<std::uint8_t> to_8bit(const Image& img);

/// 8-bit grayscale PNG, written atomically.
void save_image(const Image& img, const std::filesystem::path& path);

/// Bilinear resampling to height x width.
Image resize_bilinear(const Image& img, int height, int width);

/// Reflect-101 padding on the bottom and right up to the next multiple of `multiple`.
Image pad_to_multiple(const Image& img, int multiple);

/// Top-left height x width window.
Image crop(const Image& img, int height, int width);

/// Reflect-pads (bottom/right) to the next multiple of 16, applies `f`, and
/// crops the result back to the input size.
Image pad_crop_wrap(const Image& img, const std::function<Image(const Image&)>& f);

/// Writes `bytes` to a temporary sibling and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Whole file contents. Throws Error(kIo).
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// True for the extensions load_image accepts (.png, .jpg, .jpeg; any case).
bool is_image_file(const std::filesystem::path& path);

}  // namespace nestfuse
