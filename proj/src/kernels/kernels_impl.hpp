#pragma once

// Per-ISA entry points. Included by the ISA-specific translation units, so it
// must stay free of standard-library templates.

#include "nestfuse/kernels/kernels.hpp"

#define NESTFUSE_DECLARE_KERNELS(ns)                                                        \
  namespace nestfuse::kernels::ns {                                                         \
  void shifted_gemm(const ShiftedGemm& g);                                                  \
  void shifted_gemm_grad(const ShiftedGemmGrad& g);                                         \
  void abs_accumulate(float* acc, const float* x, std::size_t n);                           \
  void weighted_sum(float* out, const float* x, const float* wx, const float* y,            \
                    const float* wy, std::size_t n);                                        \
  void scaled_sum(float* out, const float* x, float wx, const float* y, float wy,           \
                  std::size_t n);                                                           \
  void average(float* out, const float* x, const float* y, std::size_t n);                  \
  double sum(const float* x, std::size_t n);                                                \
  float max(const float* x, std::size_t n);                                                 \
  }

NESTFUSE_DECLARE_KERNELS(scalar)
NESTFUSE_DECLARE_KERNELS(avx2)
NESTFUSE_DECLARE_KERNELS(avx512)
