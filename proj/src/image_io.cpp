#include "nestfuse/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <system_error>

#include <unistd.h>

#include "nestfuse/error.hpp"
#include "nestfuse/topology.hpp"

namespace nestfuse {
namespace {

double depth_scale(int depth) {
  switch (depth) {
    case CV_8U: return 1.0 / 255.0;
    case CV_16U: return 1.0 / 65535.0;
    case CV_8S: return 1.0 / 127.0;
    case CV_16S: return 1.0 / 32767.0;
    default: return 1.0;  // floating point data is taken as already normalised
  }
}

Image from_mat(const cv::Mat& raw, const std::string& what) {
  if (raw.empty() || raw.rows <= 0 || raw.cols <= 0) {
    fail(ErrorCode::kDecode, what + ": could not decode image");
  }
  cv::Mat m;
  raw.convertTo(m, CV_64F, depth_scale(raw.depth()));
  Image img(1, m.rows, m.cols);
  const int ch = m.channels();
  for (int y = 0; y < m.rows; ++y) {
    const double* row = m.ptr<double>(y);
    for (int x = 0; x < m.cols; ++x) {
      const double* px = row + static_cast<std::ptrdiff_t>(x) * ch;
      double v = px[0];
      if (ch >= 3) v = 0.299 * px[2] + 0.587 * px[1] + 0.114 * px[0];  // BGR(A)
      img.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::kDecode, e.what());
  }
  return decode_image(bytes, path.string());
}

Image decode_image(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.empty()) fail(ErrorCode::kDecode, what + ": empty file");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat raw;
  try {
    raw = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    raw.release();
  }
  return from_mat(raw, what);
}

std::vector<std::uint8_t> to_8bit(const Image& img) {
  std::vector<std::uint8_t> out(img.size());
  const auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = std::clamp(static_cast<double>(d[i]), 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return out;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  require_single_channel(img, "save_image");
  std::vector<std::uint8_t> px = to_8bit(img);
  const cv::Mat m(img.height(), img.width(), CV_8U, px.data());
  std::vector<std::uint8_t> encoded;
  if (!cv::imencode(".png", m, encoded)) {
    fail(ErrorCode::kIo, path.string() + ": PNG encoding failed");
  }
  atomic_write(path, encoded);
}

Image resize_bilinear(const Image& img, int height, int width) {
  require_single_channel(img, "resize_bilinear");
  if (height <= 0 || width <= 0) fail(ErrorCode::kSize, "resize_bilinear: non-positive target size");
  if (img.height() == height && img.width() == width) return img;
  const cv::Mat src(img.height(), img.width(), CV_32F, const_cast<float*>(img.data().data()));
  Image out(1, height, width);
  cv::Mat dst(height, width, CV_32F, out.data().data());
  cv::resize(src, dst, dst.size(), 0.0, 0.0, cv::INTER_LINEAR);
  return out;
}

Image pad_to_multiple(const Image& img, int multiple) {
  require_single_channel(img, "pad_to_multiple");
  const int h = img.height();
  const int w = img.width();
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return img;
  Image padded(1, ph, pw);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect101(y, h);
    for (int x = 0; x < pw; ++x) padded.at(0, y, x) = img.at(0, sy, reflect101(x, w));
  }
  return padded;
}

Image crop(const Image& img, int height, int width) {
  if (height > img.height() || width > img.width()) {
    fail(ErrorCode::kShapeMismatch, "crop: window larger than the image");
  }
  if (height == img.height() && width == img.width()) return img;
  Image out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      std::copy_n(img.channel(c).data() + static_cast<std::size_t>(y) * img.width(), width,
                  out.channel(c).data() + static_cast<std::size_t>(y) * width);
    }
  return out;
}

Image pad_crop_wrap(const Image& img, const std::function<Image(const Image&)>& f) {
  const Image padded = pad_to_multiple(img, topology::kSizeMultiple);
  const Image full = f(padded);
  if (!full.same_shape(padded)) {
    fail(ErrorCode::kShapeMismatch, "pad_crop_wrap: wrapped function changed the image size");
  }
  return crop(full, img.height(), img.width());
}

void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::kIo, tmp.string() + ": cannot open for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) {
      os.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      fail(ErrorCode::kIo, tmp.string() + ": write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    fail(ErrorCode::kIo, path.string() + ": rename failed: " + ec.message());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) fail(ErrorCode::kIo, path.string() + ": read failed");
  return bytes;
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace nestfuse
