// Compiled with -mavx2 -mfma; only called after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "slung/simd/kernels.hpp"

namespace slung::simd {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Sums of four accumulators packed into one vector: [sum(a0), sum(a1), sum(a2), sum(a3)].
inline __m256d hsum4(__m256d a0, __m256d a1, __m256d a2, __m256d a3) {
  const __m256d s01 = _mm256_hadd_pd(a0, a1);
  const __m256d s23 = _mm256_hadd_pd(a2, a3);
  const __m256d lo = _mm256_permute2f128_pd(s01, s23, 0x20);
  const __m256d hi = _mm256_permute2f128_pd(s01, s23, 0x31);
  return _mm256_add_pd(lo, hi);
}

void linear_forward(const double* x, const double* w, const double* b, double* y,
                    std::size_t rows, std::size_t in, std::size_t out) {
  const std::size_t in4 = in & ~std::size_t{3};
  const std::size_t out4 = out & ~std::size_t{3};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    std::size_t o = 0;
    for (; o < out4; o += 4) {
      const double* w0 = w + o * in;
      const double* w1 = w0 + in;
      const double* w2 = w1 + in;
      const double* w3 = w2 + in;
      __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
      __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
      for (std::size_t i = 0; i < in4; i += 4) {
        const __m256d xv = _mm256_loadu_pd(xr + i);
        a0 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w0 + i), a0);
        a1 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w1 + i), a1);
        a2 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w2 + i), a2);
        a3 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w3 + i), a3);
      }
      __m256d s = hsum4(a0, a1, a2, a3);
      if (in4 != in) {
        alignas(32) double t[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t i = in4; i < in; ++i) {
          t[0] += xr[i] * w0[i];
          t[1] += xr[i] * w1[i];
          t[2] += xr[i] * w2[i];
          t[3] += xr[i] * w3[i];
        }
        s = _mm256_add_pd(s, _mm256_load_pd(t));
      }
      _mm256_storeu_pd(yr + o, _mm256_add_pd(s, _mm256_loadu_pd(b + o)));
    }
    for (; o < out; ++o) {
      const double* wo = w + o * in;
      __m256d a = _mm256_setzero_pd();
      for (std::size_t i = 0; i < in4; i += 4) {
        a = _mm256_fmadd_pd(_mm256_loadu_pd(xr + i), _mm256_loadu_pd(wo + i), a);
      }
      double acc = hsum(a);
      for (std::size_t i = in4; i < in; ++i) acc += xr[i] * wo[i];
      yr[o] = acc + b[o];
    }
  }
}

void linear_backward_input(const double* dy, const double* w, double* dx, std::size_t rows,
                           std::size_t in, std::size_t out) {
  const std::size_t in16 = in & ~std::size_t{15};
  const std::size_t in4 = in & ~std::size_t{3};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * out;
    double* dxr = dx + r * in;
    std::size_t i = 0;
    for (; i < in16; i += 16) {
      __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
      __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
      for (std::size_t o = 0; o < out; ++o) {
        const __m256d g = _mm256_broadcast_sd(dyr + o);
        const double* wo = w + o * in + i;
        a0 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo), a0);
        a1 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo + 4), a1);
        a2 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo + 8), a2);
        a3 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo + 12), a3);
      }
      _mm256_storeu_pd(dxr + i, a0);
      _mm256_storeu_pd(dxr + i + 4, a1);
      _mm256_storeu_pd(dxr + i + 8, a2);
      _mm256_storeu_pd(dxr + i + 12, a3);
    }
    for (; i < in4; i += 4) {
      __m256d a = _mm256_setzero_pd();
      for (std::size_t o = 0; o < out; ++o) {
        a = _mm256_fmadd_pd(_mm256_broadcast_sd(dyr + o), _mm256_loadu_pd(w + o * in + i), a);
      }
      _mm256_storeu_pd(dxr + i, a);
    }
    for (; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += dyr[o] * w[o * in + i];
      dxr[i] = acc;
    }
  }
}

void linear_backward_params(const double* dy, const double* x, double* dw, double* db,
                            std::size_t rows, std::size_t in, std::size_t out) {
  constexpr std::size_t kRowBlock = 32;
  const std::size_t in16 = in & ~std::size_t{15};
  const std::size_t in4 = in & ~std::size_t{3};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) db[o] += dy[r * out + o];
  }
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowBlock) {
    const std::size_t r1 = std::min(rows, r0 + kRowBlock);
    for (std::size_t o = 0; o < out; ++o) {
      double* dwo = dw + o * in;
      std::size_t i = 0;
      for (; i < in16; i += 16) {
        __m256d a0 = _mm256_loadu_pd(dwo + i), a1 = _mm256_loadu_pd(dwo + i + 4);
        __m256d a2 = _mm256_loadu_pd(dwo + i + 8), a3 = _mm256_loadu_pd(dwo + i + 12);
        for (std::size_t r = r0; r < r1; ++r) {
          const __m256d g = _mm256_broadcast_sd(dy + r * out + o);
          const double* xr = x + r * in + i;
          a0 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr), a0);
          a1 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 4), a1);
          a2 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 8), a2);
          a3 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 12), a3);
        }
        _mm256_storeu_pd(dwo + i, a0);
        _mm256_storeu_pd(dwo + i + 4, a1);
        _mm256_storeu_pd(dwo + i + 8, a2);
        _mm256_storeu_pd(dwo + i + 12, a3);
      }
      for (; i < in4; i += 4) {
        __m256d a = _mm256_loadu_pd(dwo + i);
        for (std::size_t r = r0; r < r1; ++r) {
          a = _mm256_fmadd_pd(_mm256_broadcast_sd(dy + r * out + o),
                              _mm256_loadu_pd(x + r * in + i), a);
        }
        _mm256_storeu_pd(dwo + i, a);
      }
      for (; i < in; ++i) {
        double acc = dwo[i];
        for (std::size_t r = r0; r < r1; ++r) acc += dy[r * out + o] * x[r * in + i];
        dwo[i] = acc;
      }
    }
  }
}

// exp(x) for x in [-40, 40]: x = n ln2 + r, |r| <= ln2/2, degree-13 Taylor on r.
inline __m256d exp_small(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT |
                                                                 _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double kInvFact[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         0.5,
      1.0,                1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (int k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  const __m256i n64 = _mm256_cvtepi32_epi64(n32);
  const __m256i scaled = _mm256_add_epi64(_mm256_castpd_si256(p), _mm256_slli_epi64(n64, 52));
  return _mm256_castsi256_pd(scaled);
}

void tanh_inplace(double* v, std::size_t n) {
  const __m256d lim = _mm256_set1_pd(20.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d x = _mm256_loadu_pd(v + i);
    x = _mm256_min_pd(_mm256_max_pd(x, _mm256_sub_pd(_mm256_setzero_pd(), lim)), lim);
    const __m256d e = exp_small(_mm256_mul_pd(two, x));
    _mm256_storeu_pd(v + i, _mm256_div_pd(_mm256_sub_pd(e, one), _mm256_add_pd(e, one)));
  }
  for (; i < n; ++i) v[i] = std::tanh(v[i]);
}

void tanh_backward(const double* t, double* g, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d tv = _mm256_loadu_pd(t + i);
    const __m256d d = _mm256_fnmadd_pd(tv, tv, one);
    _mm256_storeu_pd(g + i, _mm256_mul_pd(_mm256_loadu_pd(g + i), d));
  }
  for (; i < n; ++i) g[i] *= 1.0 - t[i] * t[i];
}

}  // namespace

const KernelTable* avx2_kernels_impl() {
  static const KernelTable table{Isa::Avx2,           linear_forward, linear_backward_input,
                                 linear_backward_params, tanh_inplace, tanh_backward};
  return &table;
}

}  // namespace slung::simd
