#include <cmath>

#include "slung/simd/kernels.hpp"

namespace slung::simd {

namespace {

void linear_forward(const double* x, const double* w, const double* b, double* y,
                    std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      yr[o] = acc + b[o];
    }
  }
}

void linear_backward_input(const double* dy, const double* w, double* dx, std::size_t rows,
                           std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* dxr = dx + r * in;
    for (std::size_t i = 0; i < in; ++i) dxr[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[r * out + o];
      const double* wo = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
    }
  }
}

void linear_backward_params(const double* dy, const double* x, double* dw, double* db,
                            std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[r * out + o];
      db[o] += g;
      double* dwo = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
    }
  }
}

void tanh_inplace(double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
}

void tanh_backward(const double* t, double* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) g[i] *= 1.0 - t[i] * t[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar,          linear_forward, linear_backward_input,
                                 linear_backward_params, tanh_inplace, tanh_backward};
  return table;
}

}  // namespace slung::simd
