// Shared body of the vector kernels. Included inside an ISA namespace after a
// `Vec` traits struct has been defined:
//
//   struct Vec {
//     using reg;  static constexpr int kLanes;
//     static constexpr int kGemmRows;   // register tile height (output channels)
//     static constexpr int kGemmCols;   // register tile width, multiple of kLanes
//     zero(), load(p), store(p, v), set1(x), bcast(p), fmadd(a, b, c),
//     add(a, b), mul(a, b), abs(v), max(a, b), hsum(v) -> float, hmax(v) -> float,
//     sum_to_double(p) -> double  (sum of kLanes floats starting at p)
//   };
//
// No standard-library templates are allowed here; see kernels_impl.hpp.

namespace detail {

constexpr int kGemmDepth = 256;  // k-block kept hot in L1 per register tile

inline void pack_rows(const ShiftedGemm& g, int rows_per_panel) {
  const int panels = (g.m + rows_per_panel - 1) / rows_per_panel;
  for (int p = 0; p < panels; ++p) {
    float* dst = g.workspace + static_cast<std::size_t>(p) * static_cast<std::size_t>(g.k) *
                                   static_cast<std::size_t>(rows_per_panel);
    for (int k = 0; k < g.k; ++k) {
      for (int r = 0; r < rows_per_panel; ++r) {
        const int i = p * rows_per_panel + r;
        dst[static_cast<std::size_t>(k) * rows_per_panel + r] =
            i < g.m ? g.a[static_cast<std::size_t>(i) * static_cast<std::size_t>(g.k) + k] : 0.0f;
      }
    }
  }
}

// One MR x NR register tile over a k-block. Rows past `rows` are computed from
// zero-padded weights and discarded; columns past `cols` read slack memory.
template <int MR, int NV>
inline void tile(int kc, const float* a, const float* b, const std::int32_t* off, float* c,
                 std::size_t ldc, int rows, int cols, bool first, const float* bias) {
  constexpr int NR = NV * Vec::kLanes;
  typename Vec::reg acc[MR][NV];
#pragma GCC unroll 16
  for (int r = 0; r < MR; ++r)
#pragma GCC unroll 4
    for (int v = 0; v < NV; ++v) acc[r][v] = Vec::zero();

  for (int kk = 0; kk < kc; ++kk) {
    const float* bp = b + off[kk];
    typename Vec::reg bv[NV];
#pragma GCC unroll 4
    for (int v = 0; v < NV; ++v) bv[v] = Vec::load(bp + v * Vec::kLanes);
    const float* ap = a + static_cast<std::size_t>(kk) * MR;
#pragma GCC unroll 16
    for (int r = 0; r < MR; ++r) {
      const typename Vec::reg av = Vec::bcast(ap + r);
#pragma GCC unroll 4
      for (int v = 0; v < NV; ++v) acc[r][v] = Vec::fmadd(av, bv[v], acc[r][v]);
    }
  }

  if (rows == MR && cols == NR) {
#pragma GCC unroll 16
    for (int r = 0; r < MR; ++r) {
      float* cr = c + static_cast<std::size_t>(r) * ldc;
#pragma GCC unroll 4
      for (int v = 0; v < NV; ++v) {
        typename Vec::reg base;
        if (first) {
          base = bias ? Vec::set1(bias[r]) : Vec::zero();
        } else {
          base = Vec::load(cr + v * Vec::kLanes);
        }
        Vec::store(cr + v * Vec::kLanes, Vec::add(base, acc[r][v]));
      }
    }
    return;
  }

  alignas(64) float scratch[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) Vec::store(&scratch[r][v * Vec::kLanes], acc[r][v]);
  for (int r = 0; r < rows; ++r) {
    float* cr = c + static_cast<std::size_t>(r) * ldc;
    const float b0 = bias ? bias[r] : 0.0f;
    for (int j = 0; j < cols; ++j) cr[j] = (first ? b0 : cr[j]) + scratch[r][j];
  }
}

}  // namespace detail

void shifted_gemm(const ShiftedGemm& g) {
  constexpr int MR = Vec::kGemmRows;
  constexpr int NV = Vec::kGemmCols / Vec::kLanes;
  constexpr int NR = Vec::kGemmCols;
  if (g.m <= 0 || g.n == 0) return;
  detail::pack_rows(g, MR);
  const int panels = (g.m + MR - 1) / MR;
  for (std::size_t j0 = 0; j0 < g.n; j0 += NR) {
    const int cols = g.n - j0 < static_cast<std::size_t>(NR) ? static_cast<int>(g.n - j0) : NR;
    for (int k0 = 0; k0 < g.k; k0 += detail::kGemmDepth) {
      const int kc = g.k - k0 < detail::kGemmDepth ? g.k - k0 : detail::kGemmDepth;
      for (int p = 0; p < panels; ++p) {
        const int rows = g.m - p * MR < MR ? g.m - p * MR : MR;
        const float* ap = g.workspace + (static_cast<std::size_t>(p) * static_cast<std::size_t>(g.k) +
                                         static_cast<std::size_t>(k0)) * MR;
        detail::tile<MR, NV>(kc, ap, g.src + j0, g.offsets + k0,
                             g.c + static_cast<std::size_t>(p) * MR * g.ldc + j0, g.ldc, rows, cols,
                             k0 == 0, g.bias ? g.bias + p * MR : nullptr);
      }
    }
  }
}

void shifted_gemm_grad(const ShiftedGemmGrad& g) {
  constexpr int RB = 4;  // dy rows per register block
  constexpr int KB = 3;  // source rows per register block (the three kx taps)
  const std::size_t n_round = (g.n + Vec::kLanes - 1) / Vec::kLanes * Vec::kLanes;
  for (int i0 = 0; i0 < g.m; i0 += RB) {
    const int rows = g.m - i0 < RB ? g.m - i0 : RB;
    const float* dy[RB];
    for (int r = 0; r < RB; ++r)
      dy[r] = g.dy + static_cast<std::size_t>(i0 + (r < rows ? r : 0)) * g.ldy;
    for (int k0 = 0; k0 < g.k; k0 += KB) {
      const int ks = g.k - k0 < KB ? g.k - k0 : KB;
      const float* s[KB];
      for (int q = 0; q < KB; ++q) s[q] = g.src + g.offsets[k0 + (q < ks ? q : 0)];
      typename Vec::reg acc[RB][KB];
#pragma GCC unroll 4
      for (int r = 0; r < RB; ++r)
#pragma GCC unroll 3
        for (int q = 0; q < KB; ++q) acc[r][q] = Vec::zero();
      for (std::size_t j = 0; j < n_round; j += Vec::kLanes) {
        typename Vec::reg sv[KB];
#pragma GCC unroll 3
        for (int q = 0; q < KB; ++q) sv[q] = Vec::load(s[q] + j);
#pragma GCC unroll 4
        for (int r = 0; r < RB; ++r) {
          const typename Vec::reg d = Vec::load(dy[r] + j);
#pragma GCC unroll 3
          for (int q = 0; q < KB; ++q) acc[r][q] = Vec::fmadd(d, sv[q], acc[r][q]);
        }
      }
      for (int r = 0; r < rows; ++r) {
        float* grow = g.grad + static_cast<std::size_t>(i0 + r) * static_cast<std::size_t>(g.k);
        for (int q = 0; q < ks; ++q) grow[k0 + q] += Vec::hsum(acc[r][q]);
      }
    }
  }
}

void abs_accumulate(float* acc, const float* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + Vec::kLanes <= n; i += Vec::kLanes)
    Vec::store(acc + i, Vec::add(Vec::load(acc + i), Vec::abs(Vec::load(x + i))));
  for (; i < n; ++i) acc[i] += x[i] < 0.0f ? -x[i] : x[i];
}

void weighted_sum(float* out, const float* x, const float* wx, const float* y, const float* wy,
                  std::size_t n) {
  std::size_t i = 0;
  for (; i + Vec::kLanes <= n; i += Vec::kLanes) {
    const auto a = Vec::mul(Vec::load(wx + i), Vec::load(x + i));
    const auto b = Vec::mul(Vec::load(wy + i), Vec::load(y + i));
    Vec::store(out + i, Vec::add(a, b));
  }
  for (; i < n; ++i) out[i] = wx[i] * x[i] + wy[i] * y[i];
}

void scaled_sum(float* out, const float* x, float wx, const float* y, float wy, std::size_t n) {
  const auto vx = Vec::set1(wx);
  const auto vy = Vec::set1(wy);
  std::size_t i = 0;
  for (; i + Vec::kLanes <= n; i += Vec::kLanes) {
    Vec::store(out + i, Vec::add(Vec::mul(vx, Vec::load(x + i)), Vec::mul(vy, Vec::load(y + i))));
  }
  for (; i < n; ++i) out[i] = wx * x[i] + wy * y[i];
}

void average(float* out, const float* x, const float* y, std::size_t n) {
  const auto half = Vec::set1(0.5f);
  std::size_t i = 0;
  for (; i + Vec::kLanes <= n; i += Vec::kLanes)
    Vec::store(out + i, Vec::mul(Vec::add(Vec::load(x + i), Vec::load(y + i)), half));
  for (; i < n; ++i) out[i] = (x[i] + y[i]) * 0.5f;
}

double sum(const float* x, std::size_t n) {
  double acc = 0.0;
  std::size_t i = 0;
  for (; i + Vec::kLanes <= n; i += Vec::kLanes) acc += Vec::sum_to_double(x + i);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

float max(const float* x, std::size_t n) {
  float best = x[0];
  std::size_t i = 0;
  if (n >= static_cast<std::size_t>(Vec::kLanes)) {
    auto m = Vec::load(x);
    for (i = Vec::kLanes; i + Vec::kLanes <= n; i += Vec::kLanes) m = Vec::max(m, Vec::load(x + i));
    best = Vec::hmax(m);
  } else {
    i = 1;
  }
  for (; i < n; ++i) best = x[i] > best ? x[i] : best;
  return best;
}
