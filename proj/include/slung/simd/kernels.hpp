#pragma once

// Dense-layer kernels used by the policy and value networks.
//
// Every kernel has a scalar reference implementation. When the CPU supports
// AVX2+FMA an intrinsics variant is selected at first use; set SLUNG_ISA=scalar
// in the environment to force the reference path. The two paths agree to
// rounding (summation order and FMA contraction differ), see
// tests/unit/test_kernels.cpp.
//
// Matrix layout is row-major throughout. A layer with `in` inputs and `out`
// outputs stores W as out x in.

#include <cstddef>
#include <string_view>

namespace slung::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  // y[rows x out] = x[rows x in] * W^T + b
  void (*linear_forward)(const double* x, const double* w, const double* b, double* y,
                         std::size_t rows, std::size_t in, std::size_t out);
  // dx[rows x in] = dy[rows x out] * W
  void (*linear_backward_input)(const double* dy, const double* w, double* dx, std::size_t rows,
                                std::size_t in, std::size_t out);
  // dW[out x in] += dy^T * x, db[out] += column sums of dy
  void (*linear_backward_params)(const double* dy, const double* x, double* dw, double* db,
                                 std::size_t rows, std::size_t in, std::size_t out);
  // v[i] = tanh(v[i])
  void (*tanh_inplace)(double* v, std::size_t n);
  // g[i] *= 1 - t[i]^2  (backprop through tanh given its output t)
  void (*tanh_backward)(const double* t, double* g, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_kernels();
// The table chosen for this process (first call decides).
const KernelTable& kernels();

}  // namespace slung::simd
