#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "slung/rng.hpp"
#include "slung/simd/kernels.hpp"

using namespace slung;
using namespace slung::simd;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  }
  return m;
}

// Odd sizes exercise the tail handling of the vector path.
struct Shape {
  std::size_t rows, in, out;
};
const Shape kShapes[] = {{1, 24, 128}, {7, 27, 64}, {64, 128, 128}, {3, 5, 3}, {1, 128, 4},
                         {33, 130, 1}};

}  // namespace

TEST(Kernels, ScalarLinearForwardMatchesNaive) {
  Rng rng(1);
  const KernelTable& k = scalar_kernels();
  for (const Shape& s : kShapes) {
    const auto x = random_vec(rng, s.rows * s.in), w = random_vec(rng, s.out * s.in),
               b = random_vec(rng, s.out);
    std::vector<double> y(s.rows * s.out);
    k.linear_forward(x.data(), w.data(), b.data(), y.data(), s.rows, s.in, s.out);
    for (std::size_t r = 0; r < s.rows; ++r) {
      for (std::size_t o = 0; o < s.out; ++o) {
        long double acc = b[o];
        for (std::size_t i = 0; i < s.in; ++i) acc += (long double)x[r * s.in + i] * w[o * s.in + i];
        EXPECT_NEAR(y[r * s.out + o], (double)acc, 1e-12);
      }
    }
  }
}

TEST(Kernels, SelectedTableIsReportedIsa) {
  const KernelTable& k = kernels();
  if (avx2_kernels() == nullptr) EXPECT_EQ(k.isa, Isa::Scalar);
  EXPECT_FALSE(to_string(k.isa).empty());
}

class Avx2Equivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (avx2_kernels() == nullptr) GTEST_SKIP() << "AVX2 not available on this CPU";
  }
  const KernelTable& s = scalar_kernels();
  const KernelTable& v = *avx2_kernels();
  Rng rng{7};
};

TEST_F(Avx2Equivalence, LinearForward) {
  for (const Shape& sh : kShapes) {
    const auto x = random_vec(rng, sh.rows * sh.in), w = random_vec(rng, sh.out * sh.in),
               b = random_vec(rng, sh.out);
    std::vector<double> ys(sh.rows * sh.out), yv(sh.rows * sh.out);
    s.linear_forward(x.data(), w.data(), b.data(), ys.data(), sh.rows, sh.in, sh.out);
    v.linear_forward(x.data(), w.data(), b.data(), yv.data(), sh.rows, sh.in, sh.out);
    EXPECT_LE(max_rel_diff(ys, yv), 1e-12);
  }
}

TEST_F(Avx2Equivalence, LinearBackwardInput) {
  for (const Shape& sh : kShapes) {
    const auto dy = random_vec(rng, sh.rows * sh.out), w = random_vec(rng, sh.out * sh.in);
    std::vector<double> ds(sh.rows * sh.in), dv(sh.rows * sh.in);
    s.linear_backward_input(dy.data(), w.data(), ds.data(), sh.rows, sh.in, sh.out);
    v.linear_backward_input(dy.data(), w.data(), dv.data(), sh.rows, sh.in, sh.out);
    EXPECT_LE(max_rel_diff(ds, dv), 1e-12);
  }
}

TEST_F(Avx2Equivalence, LinearBackwardParamsAccumulates) {
  for (const Shape& sh : kShapes) {
    const auto dy = random_vec(rng, sh.rows * sh.out), x = random_vec(rng, sh.rows * sh.in);
    auto dws = random_vec(rng, sh.out * sh.in), dbs = random_vec(rng, sh.out);
    auto dwv = dws, dbv = dbs;
    s.linear_backward_params(dy.data(), x.data(), dws.data(), dbs.data(), sh.rows, sh.in, sh.out);
    v.linear_backward_params(dy.data(), x.data(), dwv.data(), dbv.data(), sh.rows, sh.in, sh.out);
    EXPECT_LE(max_rel_diff(dws, dwv), 1e-12);
    EXPECT_LE(max_rel_diff(dbs, dbv), 1e-12);
  }
}

TEST_F(Avx2Equivalence, Tanh) {
  for (std::size_t n : {1u, 3u, 4u, 17u, 128u, 1000u}) {
    auto a = random_vec(rng, n, 4.0);
    a[0] = 30.0;
    if (n > 1) a[1] = -30.0;
    auto b = a;
    s.tanh_inplace(a.data(), n);
    v.tanh_inplace(b.data(), n);
    EXPECT_LE(max_rel_diff(a, b), 1e-13);
    for (double t : b) EXPECT_LE(std::abs(t), 1.0);
  }
}

TEST_F(Avx2Equivalence, TanhBackward) {
  for (std::size_t n : {1u, 5u, 128u}) {
    auto t = random_vec(rng, n);
    for (double& x : t) x = std::tanh(x);
    auto gs = random_vec(rng, n), gv = gs;
    s.tanh_backward(t.data(), gs.data(), n);
    v.tanh_backward(t.data(), gv.data(), n);
    EXPECT_LE(max_rel_diff(gs, gv), 1e-15);
  }
}
