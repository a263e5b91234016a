#pragma once

// Data-parallel inner loops. Each instruction set provides the same table of
// entry points; the scalar table is the reference every other variant is
// tested against. Implementation files compiled with wider ISA flags only
// see raw pointers, never standard-library templates.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace nestfuse::kernels {

enum class Isa { kScalar, kAvx2, kAvx512 };

std::string_view to_string(Isa isa) noexcept;

/// Sources read through `ShiftedGemm::offsets` must stay valid this many
/// floats past `max(offsets) + n`.
inline constexpr std::size_t kSourceSlack = 64;

/// Output rows of `shifted_gemm_grad` inputs are read up to round_up(n, kGradPad).
inline constexpr std::size_t kGradPad = 16;

/// C[i][j] = bias[i] + sum_k A[i][k] * src[offsets[k] + j],  j in [0, n).
///
/// A 3x3 convolution over a zero-padded image laid out with row stride W+2
/// is exactly this product with offsets = c*plane + ky*(W+2) + kx, which
/// avoids materialising an im2col matrix.
struct ShiftedGemm {
  int m = 0;
  int k = 0;
  std::size_t n = 0;
  const float* a = nullptr;        // m x k, row-major
  const float* bias = nullptr;     // m entries, or null for zero
  const float* src = nullptr;
  const std::int32_t* offsets = nullptr;  // k entries
  float* c = nullptr;
  std::size_t ldc = 0;             // row stride of c, >= n
  float* workspace = nullptr;      // at least workspace_floats(m, k)
};

/// G[i][k] += sum_j dy[i][j] * src[offsets[k] + j],  j in [0, n).
///
/// dy rows must be zero-filled between n and round_up(n, kGradPad).
struct ShiftedGemmGrad {
  int m = 0;
  int k = 0;
  std::size_t n = 0;
  const float* dy = nullptr;
  std::size_t ldy = 0;
  const float* src = nullptr;
  const std::int32_t* offsets = nullptr;
  float* grad = nullptr;           // m x k, row-major, accumulated into
};

std::size_t workspace_floats(int m, int k) noexcept;

struct KernelTable {
  Isa isa;
  void (*shifted_gemm)(const ShiftedGemm& args);
  void (*shifted_gemm_grad)(const ShiftedGemmGrad& args);
  // acc[i] += |x[i]|
  void (*abs_accumulate)(float* acc, const float* x, std::size_t n);
  // out[i] = wx[i] * x[i] + wy[i] * y[i]  (no fused multiply-add: symmetric in x/y)
  void (*weighted_sum)(float* out, const float* x, const float* wx, const float* y,
                       const float* wy, std::size_t n);
  // out[i] = wx * x[i] + wy * y[i]
  void (*scaled_sum)(float* out, const float* x, float wx, const float* y, float wy,
                     std::size_t n);
  // out[i] = (x[i] + y[i]) * 0.5
  void (*average)(float* out, const float* x, const float* y, std::size_t n);
  double (*sum)(const float* x, std::size_t n);
  float (*max)(const float* x, std::size_t n);  // n >= 1
};

const KernelTable& scalar_table() noexcept;

/// Table for `isa`, or null when the build or the running CPU lacks it.
const KernelTable* table_for(Isa isa) noexcept;

/// Widest supported table, unless NESTFUSE_ISA=scalar|avx2|avx512 narrows it.
const KernelTable& active() noexcept;

/// Override the selection (tests and benchmarks). Returns false when unsupported.
bool select(Isa isa) noexcept;

}  // namespace nestfuse::kernels
