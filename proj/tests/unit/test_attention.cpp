#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_support.hpp"
#include "usema/attention.hpp"
#include "usema/ops.hpp"

namespace usema::attention {
namespace {

using test::max_abs_diff;
using test::randn;
using T2 = Tensor<double>;

AttentionInputs<double> random_inputs(Rng& rng, std::int64_t n, std::int64_t d) {
  return {randn(rng, {n, d}), randn(rng, {n, d}), randn(rng, {n, d})};
}

TEST(WindowIndexSet, FirstBlock) {
  EXPECT_EQ(window_index_set(1, {4, 16}), (IndexRange{1, 4}));
}

TEST(WindowIndexSet, SecondBlock) {
  EXPECT_EQ(window_index_set(5, {4, 16}), (IndexRange{5, 8}));
}

TEST(WindowIndexSet, RaggedTailIsClamped) {
  EXPECT_EQ(window_index_set(9, {4, 10}), (IndexRange{9, 10}));
}

TEST(WindowIndexSet, EveryPositionLiesInItsOwnBlock) {
  for (std::int64_t n = 1; n <= 20; ++n)
    for (std::int64_t w = 1; w <= 22; ++w)
      for (std::int64_t m = 1; m <= n; ++m) {
        const auto r = window_index_set(m, {w, n});
        EXPECT_TRUE(r.contains(m));
        EXPECT_LE(r.size(), w);
        EXPECT_EQ((r.first - 1) % w, 0);
      }
}

TEST(FullAttention, SingleTokenReturnsItsValue) {
  Rng rng(1);
  auto in = random_inputs(rng, 1, 5);
  EXPECT_EQ(full_attention(in), in.v);
}

TEST(FullAttention, IdenticalValuesPassThrough) {
  Rng rng(2);
  auto in = random_inputs(rng, 6, 3);
  in.v = T2({6, 3}, 0.7);
  EXPECT_LE(max_abs_diff(full_attention(in), in.v), 1e-15);
}

TEST(FullAttention, MatchesMatmulSoftmaxComposition) {
  Rng rng(3);
  auto in = random_inputs(rng, 8, 4);
  const auto kt = [&] {
    T2 t({4, 8});
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 4; ++j) t[j * 8 + i] = in.k[i * 4 + j];
    return t;
  }();
  auto logits = oracle::matmul(in.q, kt);
  for (auto& v : logits.data()) v *= 0.5;  // 1/sqrt(4)
  const auto p = softmax_rows(constant(logits)).value();
  EXPECT_LE(max_abs_diff(full_attention(in), oracle::matmul(p, in.v)), 1e-10);
}

TEST(FullAttention, RowsLieInValueHull) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_inputs(rng, 12, 3);
    const auto y = full_attention(in);
    for (int col = 0; col < 3; ++col) {
      double lo = INFINITY, hi = -INFINITY;
      for (int r = 0; r < 12; ++r) {
        lo = std::min(lo, in.v[r * 3 + col]);
        hi = std::max(hi, in.v[r * 3 + col]);
      }
      for (int r = 0; r < 12; ++r) {
        EXPECT_GE(y[r * 3 + col], lo - 1e-6);
        EXPECT_LE(y[r * 3 + col], hi + 1e-6);
      }
    }
  }
}

TEST(WindowAttention, WideWindowEqualsFull) {
  Rng rng(5);
  auto in = random_inputs(rng, 10, 4);
  EXPECT_LE(max_abs_diff(window_attention(in, 10), full_attention(in)), 1e-12);
  EXPECT_LE(max_abs_diff(window_attention(in, 64), full_attention(in)), 1e-12);
}

TEST(WindowAttention, UnitWindowCopiesValues) {
  Rng rng(6);
  auto in = random_inputs(rng, 9, 3);
  EXPECT_EQ(window_attention(in, 1), in.v);
}

TEST(WindowAttention, MatchesMaskedFullOracle) {
  Rng rng(7);
  auto in = random_inputs(rng, 16, 4);
  EXPECT_LE(max_abs_diff(window_attention(in, 4),
                         oracle::masked_window_attention(in.q, in.k, in.v, 4, 0.5)),
            1e-10);
}

TEST(WindowAttention, WeightRowsAreStochasticWithRaggedTail) {
  Rng rng(8);
  auto in = random_inputs(rng, 11, 2);
  const auto w = window_weights(in, 4);
  for (int r = 0; r < 11; ++r) {
    double s = 0;
    for (int col = 0; col < 11; ++col) s += w[r * 11 + col];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(WindowAttention, UnscaledFormIsTheLiteralFormula) {
  Rng rng(9);
  auto in = random_inputs(rng, 7, 3);
  EXPECT_LE(max_abs_diff(window_attention(in, 3, std::optional<double>(1.0)),
                         oracle::masked_window_attention(in.q, in.k, in.v, 3, 1.0)),
            1e-10);
}

TEST(GlobalAverage, ConstantValues) {
  EXPECT_EQ(global_average(T2({4, 2}, -1.5)), T2({4, 2}, -1.5));
}

TEST(GlobalAverage, SymmetricPair) {
  EXPECT_EQ(global_average(T2::matrix({{1, 0}, {0, 1}})), T2::matrix({{0.5, 0.5}, {0.5, 0.5}}));
}

TEST(GlobalAverage, MatchesColumnMean) {
  Rng rng(10);
  const auto v = randn(rng, {7, 5});
  EXPECT_LE(max_abs_diff(global_average(v), oracle::column_mean_broadcast(v)), 1e-12);
}

TEST(SemaAttention, ConstantValuesDouble) {
  Rng rng(11);
  auto in = random_inputs(rng, 9, 2);
  in.v = T2({9, 2}, 0.25);
  EXPECT_LE(max_abs_diff(sema_attention(in, 4), T2({9, 2}, 0.5)), 1e-15);
}

TEST(SemaAttention, WideWindowIsFullPlusAverage) {
  Rng rng(12);
  auto in = random_inputs(rng, 8, 4);
  const auto full = full_attention(in);
  const auto avg = global_average(in.v);
  const auto y = sema_attention(in, 8);
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], full[i] + avg[i], 1e-12);
}

TEST(SemaAttention, EqualsSumOfIndependentTerms) {
  Rng rng(13);
  auto in = random_inputs(rng, 16, 4);
  const auto terms = oracle::masked_window_attention(in.q, in.k, in.v, 4, 0.5);
  const auto mean = oracle::column_mean_broadcast(in.v);
  const auto y = sema_attention(in, 4);
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], terms[i] + mean[i], 1e-12);
}

TEST(SemaAttention, DifferenceFromWindowIsRankOne) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto n = static_cast<std::int64_t>(2 + rng.below(30));
    auto in = random_inputs(rng, n, 3);
    const auto diff_s = sema_attention(in, 5);
    const auto diff_w = window_attention(in, 5);
    for (std::int64_t r = 1; r < n; ++r)
      for (int col = 0; col < 3; ++col) {
        EXPECT_NEAR(diff_s[r * 3 + col] - diff_w[r * 3 + col], diff_s[col] - diff_w[col], 1e-12);
      }
  }
}

TEST(Rope, PositionZeroIsIdentity) {
  Rng rng(15);
  const auto x = randn(rng, {1, 6});
  EXPECT_EQ(rope_apply(x), x);
}

TEST(Rope, PreservesRowNorms) {
  Rng rng(16);
  const auto x = randn(rng, {20, 8});
  const auto y = rope_apply(x);
  for (int r = 0; r < 20; ++r) {
    double a = 0, b = 0;
    for (int col = 0; col < 8; ++col) {
      a += x[r * 8 + col] * x[r * 8 + col];
      b += y[r * 8 + col] * y[r * 8 + col];
    }
    EXPECT_NEAR(std::sqrt(a), std::sqrt(b), 1e-10);
  }
}

TEST(Rope, TwoDimensionalPositionOneRotatesOneRadian) {
  T2 x({2, 2});
  x[2] = 0.6;
  x[3] = -1.1;
  const auto y = rope_apply(x);
  EXPECT_NEAR(y[2], std::cos(1.0) * 0.6 - std::sin(1.0) * -1.1, 1e-15);
  EXPECT_NEAR(y[3], std::sin(1.0) * 0.6 + std::cos(1.0) * -1.1, 1e-15);
}

TEST(Rope, EqualPositionsKeepInnerProducts) {
  Rng rng(17);
  const auto q = randn(rng, {12, 8}), k = randn(rng, {12, 8});
  const auto rq = rope_apply(q), rk = rope_apply(k);
  for (int m = 0; m < 12; ++m) {
    double a = 0, b = 0;
    for (int col = 0; col < 8; ++col) {
      a += q[m * 8 + col] * k[m * 8 + col];
      b += rq[m * 8 + col] * rk[m * 8 + col];
    }
    EXPECT_NEAR(a, b, 1e-8);
  }
}

TEST(Rope, OddHeadDimensionIsRejected) {
  EXPECT_THROW(rope_apply(T2({3, 5})), DimensionError);
}

TEST(MultiHead, HeadsAreIndependentSlices) {
  Rng rng(18);
  const std::int64_t n = 10, heads = 2, hd = 3;
  const auto q = randn(rng, {1, n, heads * hd}), k = randn(rng, {1, n, heads * hd}),
             v = randn(rng, {1, n, heads * hd});
  const double s = 1 / std::sqrt(3.0);
  const auto y = sema_attention(constant(q), constant(k), constant(v), heads, 4, s).value();
  for (std::int64_t h = 0; h < heads; ++h) {
    T2 qh({n, hd}), kh({n, hd}), vh({n, hd});
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t col = 0; col < hd; ++col) {
        qh[r * hd + col] = q[r * heads * hd + h * hd + col];
        kh[r * hd + col] = k[r * heads * hd + h * hd + col];
        vh[r * hd + col] = v[r * heads * hd + h * hd + col];
      }
    const auto yh = sema_attention(AttentionInputs<double>{qh, kh, vh}, 4, std::optional<double>(s));
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t col = 0; col < hd; ++col)
        EXPECT_NEAR(y[r * heads * hd + h * hd + col], yh[r * hd + col], 1e-12);
  }
}

}  // namespace
}  // namespace usema::attention
