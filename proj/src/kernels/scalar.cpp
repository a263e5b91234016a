#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace nestfuse::kernels::scalar {

void shifted_gemm(const ShiftedGemm& g) {
  for (int i = 0; i < g.m; ++i) {
    float* crow = g.c + static_cast<std::size_t>(i) * g.ldc;
    const float b = g.bias ? g.bias[i] : 0.0f;
    for (std::size_t j = 0; j < g.n; ++j) crow[j] = b;
    const float* arow = g.a + static_cast<std::size_t>(i) * static_cast<std::size_t>(g.k);
    for (int k = 0; k < g.k; ++k) {
      const float w = arow[k];
      const float* s = g.src + g.offsets[k];
      for (std::size_t j = 0; j < g.n; ++j) crow[j] += w * s[j];
    }
  }
}

void shifted_gemm_grad(const ShiftedGemmGrad& g) {
  for (int i = 0; i < g.m; ++i) {
    const float* dy = g.dy + static_cast<std::size_t>(i) * g.ldy;
    float* grow = g.grad + static_cast<std::size_t>(i) * static_cast<std::size_t>(g.k);
    for (int k = 0; k < g.k; ++k) {
      const float* s = g.src + g.offsets[k];
      float acc = 0.0f;
      for (std::size_t j = 0; j < g.n; ++j) acc += dy[j] * s[j];
      grow[k] += acc;
    }
  }
}

void abs_accumulate(float* acc, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += std::fabs(x[i]);
}

void weighted_sum(float* out, const float* x, const float* wx, const float* y, const float* wy,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = wx[i] * x[i] + wy[i] * y[i];
}

void scaled_sum(float* out, const float* x, float wx, const float* y, float wy, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = wx * x[i] + wy * y[i];
}

void average(float* out, const float* x, const float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] + y[i]) * 0.5f;
}

double sum(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

float max(const float* x, std::size_t n) {
  float best = x[0];
  for (std::size_t i = 1; i < n; ++i) best = std::max(best, x[i]);
  return best;
}

}  // namespace nestfuse::kernels::scalar
