#include "nestfuse/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nestfuse/error.hpp"

namespace nestfuse {
namespace {

using Plane = std::vector<double>;

std::vector<double> gaussian(int size) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double center = (size - 1) * 0.5;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * ssim_params::kSigma * ssim_params::kSigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable Gaussian filter, valid region only.
struct Window {
  int h, w;        // image size
  int wy, wx;      // window size
  int oh, ow;      // output size
  std::vector<double> gy, gx;

  Window(int height, int width)
      : h(height),
        w(width),
        wy(std::min(ssim_params::kWindow, height)),
        wx(std::min(ssim_params::kWindow, width)),
        oh(height - wy + 1),
        ow(width - wx + 1),
        gy(gaussian(wy)),
        gx(gaussian(wx)) {}

  Plane filter(const Plane& in) const {
    Plane rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
      const double* src = in.data() + static_cast<std::size_t>(y) * w;
      double* dst = rows.data() + static_cast<std::size_t>(y) * ow;
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int i = 0; i < wx; ++i) acc += gx[static_cast<std::size_t>(i)] * src[x + i];
        dst[x] = acc;
      }
    }
    Plane out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y) {
      double* dst = out.data() + static_cast<std::size_t>(y) * ow;
      for (int i = 0; i < wy; ++i) {
        const double g = gy[static_cast<std::size_t>(i)];
        const double* src = rows.data() + static_cast<std::size_t>(y + i) * ow;
        for (int x = 0; x < ow; ++x) dst[x] += g * src[x];
      }
    }
    return out;
  }

  // Adjoint of filter(): spreads an oh x ow map back over h x w.
  Plane spread(const Plane& in) const {
    Plane rows(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < oh; ++y) {
      const double* src = in.data() + static_cast<std::size_t>(y) * ow;
      for (int i = 0; i < wy; ++i) {
        const double g = gy[static_cast<std::size_t>(i)];
        double* dst = rows.data() + static_cast<std::size_t>(y + i) * ow;
        for (int x = 0; x < ow; ++x) dst[x] += g * src[x];
      }
    }
    Plane out(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y) {
      const double* src = rows.data() + static_cast<std::size_t>(y) * ow;
      double* dst = out.data() + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < ow; ++x) {
        for (int i = 0; i < wx; ++i) dst[x + i] += gx[static_cast<std::size_t>(i)] * src[x];
      }
    }
    return out;
  }
};

Plane to_plane(const Image& img) { return Plane(img.data().begin(), img.data().end()); }

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

void check_pair(const Image& a, const Image& b, const char* what) {
  require_single_channel(a, what);
  require_same_shape(a, b, what);
}

double ssim_impl(const Image& a_img, const Image& b_img, double scale, FeatureMap* grad) {
  check_pair(a_img, b_img, "ssim");
  const Window win(a_img.height(), a_img.width());
  const Plane a = to_plane(a_img);
  const Plane b = to_plane(b_img);
  const Plane mu_a = win.filter(a);
  const Plane mu_b = win.filter(b);
  const Plane e_aa = win.filter(product(a, a));
  const Plane e_bb = win.filter(product(b, b));
  const Plane e_ab = win.filter(product(a, b));

  const std::size_t np = mu_a.size();
  const double inv_n = 1.0 / static_cast<double>(np);
  Plane g_mu, g_aa, g_ab;
  if (grad != nullptr) {
    g_mu.resize(np);
    g_aa.resize(np);
    g_ab.resize(np);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    const double ma = mu_a[p];
    const double mb = mu_b[p];
    const double va = e_aa[p] - ma * ma;
    const double vb = e_bb[p] - mb * mb;
    const double cov = e_ab[p] - ma * mb;
    const double a1 = 2.0 * ma * mb + ssim_params::kC1;
    const double a2 = 2.0 * cov + ssim_params::kC2;
    const double b1 = ma * ma + mb * mb + ssim_params::kC1;
    const double b2 = va + vb + ssim_params::kC2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (grad != nullptr) {
      const double d_mu = 2.0 * mb * a2 / (b1 * b2) - 2.0 * ma * s / b1;
      const double d_var = -s / b2;
      const double d_cov = 2.0 * a1 / (b1 * b2);
      g_mu[p] = (d_mu - 2.0 * ma * d_var - mb * d_cov) * inv_n;
      g_aa[p] = 2.0 * d_var * inv_n;
      g_ab[p] = d_cov * inv_n;
    }
  }
  if (grad != nullptr) {
    require_same_shape(*grad, a_img, "ssim gradient");
    const Plane s_mu = win.spread(g_mu);
    const Plane s_aa = win.spread(g_aa);
    const Plane s_ab = win.spread(g_ab);
    float* g = grad->data().data();
    for (std::size_t q = 0; q < a.size(); ++q) {
      g[q] += static_cast<float>(scale * (s_mu[q] + a[q] * s_aa[q] + b[q] * s_ab[q]));
    }
  }
  return total * inv_n;
}

}  // namespace

double pixel_loss(const Image& output, const Image& target) {
  require_same_shape(output, target, "pixel_loss");
  const auto o = output.data();
  const auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double d = static_cast<double>(o[i]) - static_cast<double>(t[i]);
    total += d * d;
  }
  return total;
}

void pixel_loss_grad(const Image& output, const Image& target, double scale, FeatureMap& grad) {
  require_same_shape(output, target, "pixel_loss_grad");
  require_same_shape(output, grad, "pixel_loss_grad");
  const auto o = output.data();
  const auto t = target.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    g[i] += static_cast<float>(scale * 2.0 * (static_cast<double>(o[i]) - static_cast<double>(t[i])));
  }
}

double ssim_index(const Image& a, const Image& b) { return ssim_impl(a, b, 0.0, nullptr); }

double ssim_index_grad(const Image& a, const Image& b, double scale, FeatureMap& grad_a) {
  return ssim_impl(a, b, scale, &grad_a);
}

double ssim_loss(const Image& output, const Image& target) {
  return 1.0 - ssim_index(output, target);
}

LossBreakdown total_loss(const Image& output, const Image& target, double lambda) {
  LossBreakdown r;
  r.lambda = lambda;
  r.pixel = pixel_loss(output, target);
  r.ssim = ssim_loss(output, target);
  r.total = r.pixel + lambda * r.ssim;
  return r;
}

LossBreakdown total_loss_grad(const Image& output, const Image& target, double lambda,
                              double scale, FeatureMap& grad) {
  LossBreakdown r;
  r.lambda = lambda;
  r.pixel = pixel_loss(output, target);
  pixel_loss_grad(output, target, scale, grad);
  // d(1 - SSIM) = -dSSIM
  r.ssim = 1.0 - ssim_index_grad(output, target, -scale * lambda, grad);
  r.total = r.pixel + lambda * r.ssim;
  return r;
}

LossBreakdown deep_supervised_loss(const Image& target, std::span<const Image> outputs,
                                   double lambda) {
  if (outputs.size() != 3) {
    fail(ErrorCode::kInvalidArgument,
         "deep-supervised loss expects 3 outputs, got " + std::to_string(outputs.size()));
  }
  LossBreakdown parts[3];
  for (std::size_t q = 0; q < 3; ++q) parts[q] = total_loss(outputs[q], target, lambda);
  return mean_breakdown(parts);
}

LossBreakdown mean_breakdown(std::span<const LossBreakdown> parts) {
  LossBreakdown r;
  if (parts.empty()) return r;
  r.lambda = parts.front().lambda;
  for (const LossBreakdown& p : parts) {
    r.pixel += p.pixel;
    r.ssim += p.ssim;
  }
  r.pixel /= static_cast<double>(parts.size());
  r.ssim /= static_cast<double>(parts.size());
  r.total = r.pixel + r.lambda * r.ssim;
  return r;
}

}  // namespace nestfuse
