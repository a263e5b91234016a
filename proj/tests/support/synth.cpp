#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <unistd.h>

namespace nftest {
namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise with a lattice spacing of `cell` pixels.
std::vector<double> value_noise(int h, int w, double cell, std::mt19937_64& rng) {
  const int gh = static_cast<int>(h / cell) + 2;
  const int gw = static_cast<int>(w / cell) + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
  for (double& v : lattice) v = u(rng);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double fy = y / cell;
    const int iy = static_cast<int>(fy);
    const double ty = smoothstep(fy - iy);
    for (int x = 0; x < w; ++x) {
      const double fx = x / cell;
      const int ix = static_cast<int>(fx);
      const double tx = smoothstep(fx - ix);
      auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
      const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
      const double bot = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
      out[static_cast<std::size_t>(y) * w + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

struct Shape {
  int kind;  // 0 disc, 1 rectangle
  double cy, cx, ry, rx, level;
  bool hot;
};

struct Layout {
  std::vector<double> base;     // low-frequency terrain
  std::vector<double> detail;   // mid/high-frequency texture
  std::vector<Shape> shapes;
  double grating_angle, grating_freq, grating_amp;
};

Layout layout(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Layout l;
  const double s = std::max(h, w);
  l.base = value_noise(h, w, s / 2.5, rng);
  const auto mid = value_noise(h, w, s / 8.0, rng);
  const auto fine = value_noise(h, w, std::max(2.0, s / 32.0), rng);
  l.detail.resize(mid.size());
  for (std::size_t i = 0; i < mid.size(); ++i) l.detail[i] = 0.65 * mid[i] + 0.35 * fine[i];
  const int n = 3 + static_cast<int>(u(rng) * 5);
  for (int i = 0; i < n; ++i) {
    Shape sh;
    sh.kind = u(rng) < 0.5 ? 0 : 1;
    sh.cy = u(rng) * h;
    sh.cx = u(rng) * w;
    sh.ry = (0.05 + 0.2 * u(rng)) * h;
    sh.rx = (0.05 + 0.2 * u(rng)) * w;
    sh.level = u(rng);
    sh.hot = u(rng) < 0.4;
    l.shapes.push_back(sh);
  }
  l.grating_angle = u(rng) * std::numbers::pi;
  l.grating_freq = 2.0 * std::numbers::pi / (4.0 + 12.0 * u(rng));
  l.grating_amp = 0.1 * u(rng);
  return l;
}

bool inside(const Shape& s, int y, int x) {
  const double dy = (y - s.cy) / s.ry;
  const double dx = (x - s.cx) / s.rx;
  return s.kind == 0 ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Image scene(int height, int width, std::uint64_t seed) {
  const Layout l = layout(height, width, seed);
  Image img(1, height, width);
  const double ca = std::cos(l.grating_angle);
  const double sa = std::sin(l.grating_angle);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      double v = 0.55 * l.base[i] + 0.45 * l.detail[i];
      for (const Shape& s : l.shapes) {
        if (inside(s, y, x)) v = 0.5 * v + 0.5 * s.level;
      }
      v += l.grating_amp * std::sin(l.grating_freq * (ca * x + sa * y));
      img.at(0, y, x) = static_cast<float>(clamp01((v - 0.5) * 1.6 + 0.5));
    }
  }
  return img;
}

SourcePair source_pair(int height, int width, std::uint64_t seed) {
  const Layout l = layout(height, width, seed);
  SourcePair p{Image(1, height, width), Image(1, height, width)};
  const double ca = std::cos(l.grating_angle);
  const double sa = std::sin(l.grating_angle);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      // visible: reflectance texture, shapes at their own grey level
      double vis = 0.45 * l.base[i] + 0.55 * l.detail[i];
      // infrared: cool smooth background, hot targets
      double ir = 0.15 + 0.35 * l.base[i];
      for (const Shape& s : l.shapes) {
        if (!inside(s, y, x)) continue;
        vis = 0.4 * vis + 0.6 * s.level;
        ir = s.hot ? 0.75 + 0.2 * l.detail[i] : 0.7 * ir + 0.1 * s.level;
      }
      vis += l.grating_amp * std::sin(l.grating_freq * (ca * x + sa * y));
      p.vis.at(0, y, x) = static_cast<float>(clamp01((vis - 0.5) * 1.7 + 0.5));
      p.ir.at(0, y, x) = static_cast<float>(clamp01(ir));
    }
  }
  return p;
}

FeatureMap random_map(int channels, int height, int width, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  FeatureMap f(channels, height, width);
  for (float& v : f.data()) v = u(rng);
  return f;
}

nestfuse::NetworkState random_state(std::uint64_t seed, bool deep_supervision) {
  nestfuse::NetworkState s = nestfuse::init_network(seed, deep_supervision);
  std::mt19937_64 rng(seed * 7919 + 3);
  std::uniform_real_distribution<float> u(-0.05f, 0.05f);
  for (auto& layer : s.layers())
    for (float& b : layer.bias) b = u(rng);
  return s;
}

std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("nestfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace nftest
