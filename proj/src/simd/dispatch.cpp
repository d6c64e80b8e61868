#include <cstdlib>
#include <string>

#include "slung/simd/kernels.hpp"

namespace slung::simd {

#if defined(SLUNG_HAVE_AVX2)
const KernelTable* avx2_kernels_impl();
#endif

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "?";
}

const KernelTable* avx2_kernels() {
#if defined(SLUNG_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? avx2_kernels_impl() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() {
  static const KernelTable& chosen = []() -> const KernelTable& {
    const char* force = std::getenv("SLUNG_ISA");
    if (force && std::string(force) == "scalar") return scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return *t;
    return scalar_kernels();
  }();
  return chosen;
}

}  // namespace slung::simd
