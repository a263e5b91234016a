#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace nestfuse::kernels {
namespace {

#define NESTFUSE_TABLE(ns, isa_value)                                                          \
  KernelTable {                                                                             \
    isa_value, &ns::shifted_gemm, &ns::shifted_gemm_grad, &ns::abs_accumulate,              \
        &ns::weighted_sum, &ns::scaled_sum, &ns::average, &ns::sum, &ns::max                \
  }

constexpr KernelTable kScalar = NESTFUSE_TABLE(scalar, Isa::kScalar);
#if defined(NESTFUSE_HAVE_AVX2)
constexpr KernelTable kAvx2 = NESTFUSE_TABLE(avx2, Isa::kAvx2);
#endif
#if defined(NESTFUSE_HAVE_AVX512)
constexpr KernelTable kAvx512 = NESTFUSE_TABLE(avx512, Isa::kAvx512);
#endif

#undef NESTFUSE_TABLE

bool cpu_has(Isa isa) noexcept {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::kAvx512: return __builtin_cpu_supports("avx512f");
  }
  return false;
#else
  return isa == Isa::kScalar;
#endif
}

const KernelTable* widest() noexcept {
  for (Isa isa : {Isa::kAvx512, Isa::kAvx2}) {
    if (const KernelTable* t = table_for(isa)) return t;
  }
  return &kScalar;
}

const KernelTable* initial() noexcept {
  const char* env = std::getenv("NESTFUSE_ISA");
  if (env != nullptr) {
    const std::string_view want(env);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kAvx512}) {
      if (want == to_string(isa)) {
        if (const KernelTable* t = table_for(isa)) return t;
      }
    }
  }
  return widest();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial()};
  return table;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kAvx512: return "avx512";
  }
  return "unknown";
}

std::size_t workspace_floats(int m, int k) noexcept {
  // Covers zero-padding m up to the tallest register tile (16 rows).
  return (static_cast<std::size_t>(m) + 16) * static_cast<std::size_t>(k);
}

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* table_for(Isa isa) noexcept {
  if (!cpu_has(isa)) return nullptr;
  switch (isa) {
    case Isa::kScalar: return &kScalar;
    case Isa::kAvx2:
#if defined(NESTFUSE_HAVE_AVX2)
      return &kAvx2;
#else
      return nullptr;
#endif
    case Isa::kAvx512:
#if defined(NESTFUSE_HAVE_AVX512)
      return &kAvx512;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

bool select(Isa isa) noexcept {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace nestfuse::kernels
