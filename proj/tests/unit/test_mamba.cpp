#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_support.hpp"
#include "usema/mamba.hpp"

namespace usema::mamba {
namespace {

using test::max_abs_diff;
using test::randn;
using T2 = Tensor<double>;

void set_all_a(Params& p, double a) {
  for (auto& s : p.steps) s.a.fill(a);
}

// C_t (B_t (Delta_t (.) x_t)) + D (.) x_t for a single step.
T2 memoryless(const T2& x, const Params& p) {
  const std::int64_t n = x.dim(0), d = x.dim(1);
  T2 y({n, d});
  for (std::int64_t t = 0; t < n; ++t) {
    const auto& s = p.steps[static_cast<std::size_t>(t)];
    double cb = 0;
    for (std::int64_t r = 0; r < d; ++r) cb += s.c[r] * s.b[r];
    for (std::int64_t col = 0; col < d; ++col)
      y[t * d + col] = cb * s.delta[col] * x[t * d + col] + p.d_skip[col] * x[t * d + col];
  }
  return y;
}

TEST(MambaScan, ZeroTransitionsAreMemoryless) {
  Rng rng(1);
  auto p = random_params(rng, 6, 3);
  set_all_a(p, 0.0);
  const auto x = randn(rng, {6, 3});
  EXPECT_LE(max_abs_diff(scan(x, p), memoryless(x, p)), 1e-14);
}

TEST(MambaScan, ZeroInjectionLeavesSkipOnly) {
  Rng rng(2);
  auto p = random_params(rng, 5, 4);
  for (auto& s : p.steps) s.b.fill(0.0);
  const auto x = randn(rng, {5, 4});
  const auto y = scan(x, p);
  for (std::int64_t t = 0; t < 5; ++t)
    for (std::int64_t c = 0; c < 4; ++c) EXPECT_EQ(y[t * 4 + c], p.d_skip[c] * x[t * 4 + c]);
}

TEST(MambaScan, MatchesUnrolled) {
  Rng rng(3);
  const auto p = random_params(rng, 8, 4);
  const auto x = randn(rng, {8, 4});
  EXPECT_LE(max_abs_diff(scan(x, p), unrolled(x, p)), 1e-10);
}

TEST(MambaScan, MatchesLoopOracle) {
  Rng rng(4);
  const auto p = random_params(rng, 12, 5);
  const auto x = randn(rng, {12, 5});
  EXPECT_LE(max_abs_diff(scan(x, p), oracle::mamba_scan(x, p)), 1e-12);
}

TEST(MambaScan, OrderMatters) {
  // Two tokens with decay 0.5: swapping them changes y_2.
  Rng rng(5);
  auto p = random_params(rng, 2, 1);
  set_all_a(p, 0.5);
  for (auto& s : p.steps) {
    s.b.fill(1.0);
    s.c.fill(1.0);
    s.delta.fill(1.0);
  }
  p.d_skip.fill(0.0);
  const auto y = scan(T2::matrix({{1.0}, {2.0}}), p);
  const auto swapped = scan(T2::matrix({{2.0}, {1.0}}), p);
  EXPECT_DOUBLE_EQ(y[1], 0.5 * 1.0 + 2.0);
  EXPECT_DOUBLE_EQ(swapped[1], 0.5 * 2.0 + 1.0);
  EXPECT_NE(y[1], swapped[1]);
}

TEST(MambaScan, ShapeMismatchNamesTheStep) {
  Rng rng(6);
  auto p = random_params(rng, 4, 3);
  p.steps[2].b = T2({2, 1});
  try {
    scan(randn(rng, {4, 3}), p);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
  }
}

TEST(MambaUnrolled, SingleStepHasNoProducts) {
  Rng rng(7);
  const auto p = random_params(rng, 1, 3);
  const auto x = randn(rng, {1, 3});
  EXPECT_LE(max_abs_diff(unrolled(x, p), memoryless(x, p)), 1e-14);
}

TEST(MambaUnrolled, UnitTransitionsAccumulateWithoutDecay) {
  Rng rng(8);
  auto p = random_params(rng, 5, 2);
  set_all_a(p, 1.0);
  const auto x = randn(rng, {5, 2});
  const auto y = unrolled(x, p);
  // y_m = sum_{i<=m} C_m B_i (Delta_i (.) x_i) + D (.) x_m
  for (std::int64_t m = 0; m < 5; ++m)
    for (std::int64_t c = 0; c < 2; ++c) {
      double want = p.d_skip[c] * x[m * 2 + c];
      for (std::int64_t i = 0; i <= m; ++i) {
        const auto& si = p.steps[static_cast<std::size_t>(i)];
        const auto& sm = p.steps[static_cast<std::size_t>(m)];
        for (std::int64_t r = 0; r < 2; ++r)
          want += sm.c[r] * si.b[r] * si.delta[c] * x[i * 2 + c];
      }
      EXPECT_NEAR(y[m * 2 + c], want, 1e-12);
    }
}

TEST(MambaUnrolled, EqualsScanOnManyInstances) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::int64_t>(1 + rng.below(32));
    const auto d = static_cast<std::int64_t>(1 + rng.below(8));
    const auto p = random_params(rng, n, d);
    const auto x = randn(rng, {n, d});
    ASSERT_LE(max_abs_diff(unrolled(x, p), scan(x, p)), 1e-10) << "n=" << n << " d=" << d;
  }
}

TEST(ForgettingProfile, ConstantTransitionDecaysGeometrically) {
  Rng rng(10);
  auto p = random_params(rng, 6, 2);
  set_all_a(p, 0.8);
  const auto f = forgetting_profile(p, 6);
  for (std::int64_t i = 1; i <= 6; ++i)
    for (int e = 0; e < 4; ++e) EXPECT_NEAR(f.weights[(i - 1) * 4 + e], std::pow(0.8, 6 - i), 1e-15);
}

TEST(ForgettingProfile, UnitTransitionNeverForgets) {
  Rng rng(11);
  auto p = random_params(rng, 4, 3);
  set_all_a(p, 1.0);
  const auto f = forgetting_profile(p, 4);
  for (double w : f.weights.data()) EXPECT_EQ(w, 1.0);
}

TEST(ForgettingProfile, HalfDecayAtPositionFour) {
  Rng rng(12);
  auto p = random_params(rng, 4, 1);
  set_all_a(p, 0.5);
  const auto f = forgetting_profile(p, 4);
  const double want[] = {0.125, 0.25, 0.5, 1.0};
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(f.weights[i], want[i]);
}

TEST(ForgettingProfile, BoundedByPowerOfLargestEntry) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = rng.uniform(0.3, 0.95);
    const auto p = random_params(rng, 10, 3, 0.0, a);
    const auto f = forgetting_profile(p, 10);
    EXPECT_TRUE(f.in_unit_interval);
    for (std::int64_t i = 1; i <= 10; ++i)
      for (int e = 0; e < 9; ++e) EXPECT_LE(f.weights[(i - 1) * 9 + e], std::pow(a, 10 - i));
  }
}

TEST(ForgettingProfile, FlagsEntriesOutsideUnitInterval) {
  Rng rng(14);
  auto p = random_params(rng, 3, 2);
  p.steps[1].a[0] = 1.5;
  const auto f = forgetting_profile(p, 3);
  EXPECT_FALSE(f.in_unit_interval);
  EXPECT_EQ(f.weights.shape(), (Shape{3, 2, 2}));
}

}  // namespace
}  // namespace usema::mamba
