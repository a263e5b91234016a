#include <immintrin.h>

#include "kernels_impl.hpp"

namespace nestfuse::kernels::avx512 {
namespace {

struct Vec {
  using reg = __m512;
  static constexpr int kLanes = 16;
  static constexpr int kGemmRows = 8;
  static constexpr int kGemmCols = 48;

  static reg zero() { return _mm512_setzero_ps(); }
  static reg load(const float* p) { return _mm512_loadu_ps(p); }
  static void store(float* p, reg v) { _mm512_storeu_ps(p, v); }
  static reg set1(float x) { return _mm512_set1_ps(x); }
  static reg bcast(const float* p) { return _mm512_set1_ps(*p); }
  static reg fmadd(reg a, reg b, reg c) { return _mm512_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm512_add_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm512_mul_ps(a, b); }
  static reg abs(reg v) { return _mm512_abs_ps(v); }
  static reg max(reg a, reg b) { return _mm512_max_ps(a, b); }
  static float hsum(reg v) { return _mm512_reduce_add_ps(v); }
  static float hmax(reg v) { return _mm512_reduce_max_ps(v); }
  static double sum_to_double(const float* p) {
    const __m512 v = _mm512_loadu_ps(p);
    const __m512d lo = _mm512_cvtps_pd(_mm512_castps512_ps256(v));
    const __m512d hi = _mm512_cvtps_pd(_mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(v), 1)));
    return _mm512_reduce_add_pd(_mm512_add_pd(lo, hi));
  }
};

}  // namespace

#include "simd_body.inl"

}  // namespace nestfuse::kernels::avx512
