#include "nestfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "nestfuse/error.hpp"
#include "nestfuse/image_io.hpp"
#include "nestfuse/loss.hpp"

namespace nestfuse {
namespace {

constexpr int kBins = 256;

double entropy_of_counts(std::span<const std::uint64_t> counts, double total) {
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

// Entropies H(x), H(y), H(x, y) of two equally long 8-bit sequences.
struct JointEntropy {
  double hx, hy, hxy;
};

JointEntropy joint_entropy(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  std::vector<std::uint64_t> cx(kBins, 0), cy(kBins, 0), cxy(kBins * kBins, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++cx[x[i]];
    ++cy[y[i]];
    ++cxy[static_cast<std::size_t>(x[i]) * kBins + y[i]];
  }
  const double n = static_cast<double>(x.size());
  return {entropy_of_counts(cx, n), entropy_of_counts(cy, n), entropy_of_counts(cxy, n)};
}

std::vector<std::uint8_t> quantize_features(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<std::uint8_t> q(v.size(), 0);
  const double range = *hi - *lo;
  if (!(range > 0.0)) return q;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = std::floor((v[i] - *lo) / range * kBins);
    q[i] = static_cast<std::uint8_t>(std::clamp(t, 0.0, static_cast<double>(kBins - 1)));
  }
  return q;
}

void check_triple(const Image& f, const Image& a, const Image& b, const char* what) {
  require_single_channel(f, what);
  require_same_shape(f, a, what);
  require_same_shape(f, b, what);
}

// ---- VIF helpers ---------------------------------------------------------

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

std::vector<double> gauss1d(int n, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - (n - 1) * 0.5;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& x : g) x /= total;
  return g;
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Separable filtering; `same` keeps the size with reflect-101 borders,
// otherwise only the valid region is returned.
Plane filter(const Plane& in, const std::vector<double>& g, bool same) {
  const int n = static_cast<int>(g.size());
  const int r = n / 2;
  const int ow = same ? in.w : in.w - n + 1;
  const int oh = same ? in.h : in.h - n + 1;
  Plane rows{in.h, ow, std::vector<double>(static_cast<std::size_t>(in.h) * ow)};
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const int sx = same ? reflect101(x + i - r, in.w) : x + i;
        acc += g[static_cast<std::size_t>(i)] * in.at(y, sx);
      }
      rows.at(y, x) = acc;
    }
  }
  Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const int sy = same ? reflect101(y + i - r, in.h) : y + i;
        acc += g[static_cast<std::size_t>(i)] * rows.at(sy, x);
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

Plane downsample(const Plane& in) {
  Plane out{(in.h + 1) / 2, (in.w + 1) / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out.at(y, x) = in.at(2 * y, 2 * x);
  return out;
}

Plane times(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane to_255(const Image& img) {
  Plane p{img.height(), img.width(), std::vector<double>(img.size())};
  const auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) p.v[i] = static_cast<double>(d[i]) * 255.0;
  return p;
}

constexpr double kVifNoise = 2.0;   // sigma_n^2 of the HVS noise model
constexpr double kVifEps = 1e-10;
constexpr int kVifMinSize = 32;

}  // namespace

double entropy(const Image& img) {
  const auto q = to_8bit(img);
  std::vector<std::uint64_t> counts(kBins, 0);
  for (std::uint8_t v : q) ++counts[v];
  return entropy_of_counts(counts, static_cast<double>(q.size()));
}

double std_dev(const Image& img) {
  const auto q = to_8bit(img);
  double mean = 0.0;
  for (std::uint8_t v : q) mean += v;
  mean /= static_cast<double>(q.size());
  double var = 0.0;
  for (std::uint8_t v : q) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(q.size()));
}

double mutual_information(const Image& a, const Image& b) {
  require_same_shape(a, b, "mutual_information");
  const JointEntropy h = joint_entropy(to_8bit(a), to_8bit(b));
  return h.hx + h.hy - h.hxy;
}

double fusion_mi(const Image& fused, const Image& a, const Image& b) {
  check_triple(fused, a, b, "fusion_mi");
  return mutual_information(fused, a) + mutual_information(fused, b);
}

std::vector<double> fmi_features(const Image& img, FmiFeature feature) {
  require_single_channel(img, "fmi_features");
  const int h = img.height();
  const int w = img.width();
  std::vector<double> out;
  if (feature == FmiFeature::kDct) {
    constexpr int B = 8;
    if (h < B || w < B) fail(ErrorCode::kSize, "FMI (dct) needs at least 8x8 pixels");
    double basis[B][B];
    for (int u = 0; u < B; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / B) : std::sqrt(2.0 / B);
      for (int x = 0; x < B; ++x) basis[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / (2.0 * B));
    }
    const int by = h / B;
    const int bx = w / B;
    out.reserve(static_cast<std::size_t>(by) * bx * B * B);
    for (int j = 0; j < by; ++j) {
      for (int i = 0; i < bx; ++i) {
        double tmp[B][B];  // row transform
        for (int y = 0; y < B; ++y)
          for (int u = 0; u < B; ++u) {
            double acc = 0.0;
            for (int x = 0; x < B; ++x) acc += basis[u][x] * img.at(0, j * B + y, i * B + x);
            tmp[y][u] = acc;
          }
        for (int v = 0; v < B; ++v)
          for (int u = 0; u < B; ++u) {
            double acc = 0.0;
            for (int y = 0; y < B; ++y) acc += basis[v][y] * tmp[y][u];
            out.push_back(std::abs(acc));
          }
      }
    }
  } else {
    if (h < 2 || w < 2) fail(ErrorCode::kSize, "FMI (wavelet) needs at least 2x2 pixels");
    const int oh = h / 2;
    const int ow = w / 2;
    const std::size_t band = static_cast<std::size_t>(oh) * ow;
    out.assign(3 * band, 0.0);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double a = img.at(0, 2 * y, 2 * x);
        const double b = img.at(0, 2 * y, 2 * x + 1);
        const double c = img.at(0, 2 * y + 1, 2 * x);
        const double d = img.at(0, 2 * y + 1, 2 * x + 1);
        const std::size_t i = static_cast<std::size_t>(y) * ow + x;
        out[i] = std::abs(a + b - c - d) * 0.5;
        out[band + i] = std::abs(a - b + c - d) * 0.5;
        out[2 * band + i] = std::abs(a - b - c + d) * 0.5;
      }
    }
  }
  return out;
}

double normalized_mi(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    fail(ErrorCode::kShapeMismatch, "normalized_mi: feature lengths differ");
  }
  const JointEntropy h = joint_entropy(quantize_features(x), quantize_features(y));
  const double denom = h.hx + h.hy;
  if (!(denom > 0.0)) return 1.0;
  return std::clamp(2.0 * (h.hx + h.hy - h.hxy) / denom, 0.0, 1.0);
}

double fmi(const Image& fused, const Image& a, const Image& b, FmiFeature feature) {
  check_triple(fused, a, b, "fmi");
  const auto ff = fmi_features(fused, feature);
  return 0.5 * (normalized_mi(ff, fmi_features(a, feature)) + normalized_mi(ff, fmi_features(b, feature)));
}

double ssim_a(const Image& fused, const Image& a, const Image& b) {
  check_triple(fused, a, b, "ssim_a");
  return (ssim_index(fused, a) + ssim_index(fused, b)) * 0.5;
}

double vif_single(const Image& reference, const Image& distorted) {
  require_single_channel(reference, "vif");
  require_same_shape(reference, distorted, "vif");
  if (reference.height() < kVifMinSize || reference.width() < kVifMinSize) {
    fail(ErrorCode::kSize, "VIF needs at least 32x32 pixels");
  }
  Plane ref = to_255(reference);
  Plane dist = to_255(distorted);
  double num = 0.0;
  double den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const int n = (1 << (4 - scale + 1)) + 1;
    const auto g = gauss1d(n, n / 5.0);
    if (scale > 1) {
      ref = downsample(filter(ref, g, true));
      dist = downsample(filter(dist, g, true));
    }
    const Plane mu1 = filter(ref, g, false);
    const Plane mu2 = filter(dist, g, false);
    const Plane e11 = filter(times(ref, ref), g, false);
    const Plane e22 = filter(times(dist, dist), g, false);
    const Plane e12 = filter(times(ref, dist), g, false);
    for (std::size_t i = 0; i < mu1.v.size(); ++i) {
      double s1 = std::max(0.0, e11.v[i] - mu1.v[i] * mu1.v[i]);
      const double s2 = std::max(0.0, e22.v[i] - mu2.v[i] * mu2.v[i]);
      const double s12 = e12.v[i] - mu1.v[i] * mu2.v[i];
      double gain = s12 / (s1 + kVifEps);
      double sv = s2 - gain * s12;
      if (s1 < kVifEps) {
        gain = 0.0;
        sv = s2;
        s1 = 0.0;
      }
      if (s2 < kVifEps) {
        gain = 0.0;
        sv = 0.0;
      }
      if (gain < 0.0) {
        sv = s2;
        gain = 0.0;
      }
      sv = std::max(sv, kVifEps);
      num += std::log10(1.0 + gain * gain * s1 / (sv + kVifNoise));
      den += std::log10(1.0 + s1 / kVifNoise);
    }
  }
  if (!(den > 0.0)) return reference == distorted ? 1.0 : 0.0;
  return num / den;
}

double vif(const Image& fused, const Image& a, const Image& b) {
  check_triple(fused, a, b, "vif");
  return 0.5 * (vif_single(a, fused) + vif_single(b, fused));
}

MetricsReport evaluate_pair(const std::string& id, const Image& fused, const Image& a, const Image& b) {
  try {
    check_triple(fused, a, b, "evaluate_pair");
    MetricsReport r;
    r.id = id;
    r.en = entropy(fused);
    r.sd = std_dev(fused);
    r.mi = fusion_mi(fused, a, b);
    r.fmi_dct = fmi(fused, a, b, FmiFeature::kDct);
    r.fmi_w = fmi(fused, a, b, FmiFeature::kWavelet);
    r.ssim_a = ssim_a(fused, a, b);
    r.vif = vif(fused, a, b);
    return r;
  } catch (const Error& e) {
    fail(e.code(), id + ": " + e.what());
  }
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  MetricsReport r;
  r.id = "AVERAGE";
  if (reports.empty()) return r;
  for (const MetricsReport& x : reports) {
    r.en += x.en;
    r.sd += x.sd;
    r.mi += x.mi;
    r.fmi_dct += x.fmi_dct;
    r.fmi_w += x.fmi_w;
    r.ssim_a += x.ssim_a;
    r.vif += x.vif;
  }
  const double n = static_cast<double>(reports.size());
  r.en /= n;
  r.sd /= n;
  r.mi /= n;
  r.fmi_dct /= n;
  r.fmi_w /= n;
  r.ssim_a /= n;
  r.vif /= n;
  return r;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5f", v);
  return buf;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsReport> reports) {
  os << "pair";
  for (const char* name : kMetricNames) os << ',' << name;
  os << '\n';
  auto row = [&os](const MetricsReport& r) {
    os << r.id;
    for (double v : r.values()) os << ',' << format_metric(v);
    os << '\n';
  };
  for (const MetricsReport& r : reports) row(r);
  row(aggregate(reports));
}

}  // namespace nestfuse
