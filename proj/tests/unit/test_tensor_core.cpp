#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "test_support.hpp"
#include "usema/errors.hpp"
#include "usema/gradcheck.hpp"
#include "usema/ops.hpp"
#include "usema/tensor_io.hpp"

namespace usema {
namespace {

using test::max_abs_diff;
using test::randn;
using T2 = Tensor<double>;

Var<double> c(const T2& t) { return constant(t); }

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto b = T2::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(c(T2::matrix({{1, 0}, {0, 1}})), c(b)).value(), b);
}

TEST(Matmul, ProjectorSelectsFirstRow) {
  const auto y = matmul(c(T2::matrix({{1, 0}, {0, 0}})), c(T2::matrix({{5, 6}, {7, 8}})));
  EXPECT_EQ(y.value(), T2::matrix({{5, 6}, {0, 0}}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(1);
  const auto a = randn(rng, {3, 4}), b = randn(rng, {4, 2});
  EXPECT_LE(max_abs_diff(matmul(c(a), c(b)).value(), oracle::matmul(a, b)), 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(c(T2({2, 3})), c(T2({4, 2})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(SoftmaxRows, ZeroRowIsUniform) {
  const auto y = softmax_rows(c(T2({1, 4}))).value();
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(SoftmaxRows, DominantLogitDoesNotOverflow) {
  const auto y = softmax_rows(c(T2::matrix({{1000, 0, 0}}))).value();
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_TRUE(y.all_finite());
}

TEST(SoftmaxRows, MatchesExpNormalize) {
  const double x[] = {0.3, -1.2, 2.0};
  const double z = std::exp(0.3) + std::exp(-1.2) + std::exp(2.0);
  const auto y = softmax_rows(c(T2::matrix({{0.3, -1.2, 2.0}}))).value();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], std::exp(x[i]) / z, 1e-12);
}

TEST(SoftmaxRows, RowsSumToOneForLargeEntries) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = randn(rng, {6, 9}, 1e4);
    const auto y = softmax_rows(c(x)).value();
    for (int r = 0; r < 6; ++r) {
      double s = 0;
      for (int k = 0; k < 9; ++k) s += y[r * 9 + k];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(SoftmaxRows, EmptyInputIsRejected) {
  EXPECT_THROW(softmax_rows(c(T2({2, 0}))), DimensionError);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(3);
  const auto x = randn(rng, {1, 1, 4, 5});
  EXPECT_EQ(conv2d(c(x), c(T2({1, 1, 1, 1}, 1.0)), Var<double>()).value(), x);
}

TEST(Conv2d, BoxFilterOnConstantImage) {
  const auto y = conv2d(c(T2({1, 1, 5, 5}, 2.0)), c(T2({1, 1, 3, 3}, 1.0)), Var<double>(),
                        {1, 1, 1})
                     .value();
  for (int r = 1; r < 4; ++r)
    for (int col = 1; col < 4; ++col) EXPECT_DOUBLE_EQ(y.at({0, 0, r, col}), 18.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0, 0}), 8.0);  // corner sees 4 pixels
}

TEST(Conv2d, MatchesDirectLoops) {
  Rng rng(4);
  const auto x = randn(rng, {1, 2, 5, 5}), k = randn(rng, {3, 2, 3, 3});
  EXPECT_LE(max_abs_diff(conv2d(c(x), c(k), Var<double>()).value(), oracle::conv2d(x, k, 1, 0, 1)),
            1e-10);
}

TEST(Conv2d, StridedPaddedGroupedMatchDirectLoops) {
  Rng rng(5);
  const auto x = randn(rng, {2, 4, 7, 6});
  for (std::int64_t groups : {1, 2, 4}) {
    const auto k = randn(rng, {4, 4 / groups, 3, 3});
    const auto y = conv2d(c(x), c(k), Var<double>(), {2, 1, groups}).value();
    EXPECT_LE(max_abs_diff(y, oracle::conv2d(x, k, 2, 1, groups)), 1e-10) << groups;
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputIsRejected) {
  EXPECT_THROW(conv2d(c(T2({1, 1, 2, 2})), c(T2({1, 1, 3, 3})), Var<double>()), DimensionError);
}

TEST(ConvTranspose2d, UnitKernelIsIdentity) {
  Rng rng(6);
  const auto x = randn(rng, {1, 1, 3, 4});
  EXPECT_EQ(conv_transpose2d(c(x), c(T2({1, 1, 1, 1}, 1.0)), Var<double>()).value(), x);
}

TEST(ConvTranspose2d, Stride2UnitKernelTilesBlocks) {
  const auto x = T2({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto y = conv_transpose2d(c(x), c(T2({1, 1, 2, 2}, 1.0)), Var<double>(), 2).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  for (int r = 0; r < 4; ++r)
    for (int col = 0; col < 4; ++col)
      EXPECT_DOUBLE_EQ(y.at({0, 0, r, col}), x.at({0, 0, r / 2, col / 2}));
}

TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::int64_t stride = 1 + trial % 2, pad = trial % 3 == 0 ? 1 : 0;
    const auto x = randn(rng, {2, 3, 7, 7});  // 7 - 3 + 2 pad divisible by the stride
    const auto k = randn(rng, {4, 3, 3, 3});  // conv: 3 -> 4 channels
    const auto y0 = conv2d(c(x), c(k), Var<double>(), {stride, pad, 1}).value();
    const auto y = randn(rng, y0.shape());
    // conv_transpose2d takes [Cin, Cout, kh, kw] = the conv kernel read as 4 -> 3.
    const auto xt = conv_transpose2d(c(y), c(k), Var<double>(), stride, pad).value();
    ASSERT_EQ(xt.shape(), x.shape());
    EXPECT_NEAR(test::dot(y0, y), test::dot(x, xt), 1e-8 * (1 + std::abs(test::dot(y0, y))));
  }
}

TEST(InstanceNorm, ConstantChannelNormalisesToZero) {
  const auto y =
      instance_norm(c(T2({1, 2, 3, 3}, 5.0)), c(T2({2}, 1.0)), c(T2({2}, 0.0))).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(InstanceNorm, UnitChannelIsUnchanged) {
  const auto y =
      instance_norm(c(T2({1, 1, 1, 2}, std::vector<double>{1, -1})), c(T2({1}, 1.0)), c(T2({1})))
          .value();
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(InstanceNorm, ChannelMomentsAreStandard) {
  Rng rng(8);
  const auto x = randn(rng, {2, 3, 8, 8}, 4.0);
  const auto y = instance_norm(c(x), c(T2({3}, 1.0)), c(T2({3}))).value();
  for (int s = 0; s < 6; ++s) {
    double m = 0, v = 0;
    for (int i = 0; i < 64; ++i) m += y[s * 64 + i];
    m /= 64;
    for (int i = 0; i < 64; ++i) v += (y[s * 64 + i] - m) * (y[s * 64 + i] - m);
    v /= 64;
    EXPECT_LE(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(LayerNorm, ConstantVectorNormalisesToZero) {
  const auto y = layer_norm(c(T2({2, 4}, -3.0)), c(T2({4}, 1.0)), c(T2({4}))).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, SymmetricPairMapsToUnit) {
  const auto y = layer_norm(c(T2::matrix({{3, -3}})), c(T2({2}, 1.0)), c(T2({2}))).value();
  EXPECT_NEAR(y[0], 1.0, 1e-6);
  EXPECT_NEAR(y[1], -1.0, 1e-6);
}

TEST(LayerNorm, PerVectorMomentsAreStandard) {
  Rng rng(9);
  const auto y = layer_norm(c(randn(rng, {5, 32}, 3.0)), c(T2({32}, 1.0)), c(T2({32}))).value();
  for (int r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (int i = 0; i < 32; ++i) m += y[r * 32 + i];
    m /= 32;
    for (int i = 0; i < 32; ++i) v += (y[r * 32 + i] - m) * (y[r * 32 + i] - m);
    EXPECT_LE(std::abs(m), 1e-6);
    EXPECT_NEAR(v / 32, 1.0, 1e-4);
  }
}

TEST(Activations, PointValues) {
  EXPECT_DOUBLE_EQ(leaky_relu(c(T2::vector({-1.0})), 0.01).value()[0], -0.01);
  EXPECT_DOUBLE_EQ(silu(c(T2::vector({0.0}))).value()[0], 0.0);
  EXPECT_NEAR(silu(c(T2::vector({1.0}))).value()[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(gelu(c(T2::vector({1.0}))).value()[0], 0.5 * (1 + std::erf(1 / std::sqrt(2.0))),
              1e-15);
}

TEST(GradCheck, QuadraticIsExact) {
  const auto rep = grad_check([](const std::vector<Var<double>>& v) { return sum(mul(v[0], v[0])); },
                              {T2::vector({1, 2})});
  EXPECT_LE(rep.max_rel_error(), 1e-8);
}

TEST(GradCheck, SoftmaxRowSumHasZeroGradient) {
  Var<double> x(T2::matrix({{0.1, -2, 3}, {1, 1, 0.5}}), true);
  backward(sum(softmax_rows(x)));
  for (double g : x.grad().data()) EXPECT_LE(std::abs(g), 1e-12);
}

TEST(GradCheck, NonFiniteLossIsAnEvaluationError) {
  auto f = [](const std::vector<Var<double>>& v) {
    return sum(scale(v[0], std::numeric_limits<double>::infinity()));
  };
  EXPECT_THROW(grad_check(f, {T2::vector({1})}), EvaluationError);
}

TEST(GradCheck, KinkStraddlingCoordinatesAreSkipped) {
  // leaky_relu at 0 exactly: +h and -h take different branches.
  auto f = [](const std::vector<Var<double>>& v) { return sum(leaky_relu(v[0])); };
  const auto rep = grad_check(f, {T2::vector({0.0, 1.0})});
  EXPECT_EQ(rep.kinks_skipped(), 1);
  EXPECT_EQ(rep.coords_checked(), 1);
  EXPECT_LE(rep.max_rel_error(), 1e-8);
}

TEST(GradCheck, RandomOpInstances) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    auto f = [](const std::vector<Var<double>>& v) {
      return sum(mul(gelu(matmul(v[0], v[1])), silu(matmul(v[0], v[1]))));
    };
    const auto rep = grad_check(f, {randn(rng, {3, 4}), randn(rng, {4, 2})});
    EXPECT_LE(rep.max_rel_error(), 1e-4);
  }
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  Var<double> x(T2::vector({3.0}), true);
  const auto y = add(mul(x, x), x);  // dy/dx = 2x + 1
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Var<double> x(T2::vector({1.0}), true);
  NoGradGuard guard;
  EXPECT_FALSE(mul(x, x).requires_grad());
}

TEST(Determinism, RepeatedEvaluationIsBitIdentical) {
  Rng rng(11);
  const auto x = randn(rng, {1, 3, 9, 9}), k = randn(rng, {5, 3, 3, 3});
  const auto a = conv2d(c(x), c(k), Var<double>(), {2, 1, 1}).value();
  const auto b = conv2d(c(x), c(k), Var<double>(), {2, 1, 1}).value();
  EXPECT_EQ(a, b);
}

TEST(Rng, SplitStreamsAreReproducible) {
  Rng a(42), b(42);
  Rng ca = a.split(), cb = b.split();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ca.next_u64(), cb.next_u64());
  EXPECT_NE(a.next_u64(), ca.next_u64());
}

TEST(TensorIo, RoundTripPreservesDtypeAndBits) {
  Rng rng(12);
  const auto t = randn(rng, {2, 3, 4});
  std::stringstream ss;
  write_tensor(ss, t);
  EXPECT_EQ(read_tensor<double>(ss), t);
  std::stringstream sf;
  write_tensor(sf, t.cast<float>());
  ss.str(sf.str());
  EXPECT_TRUE(std::holds_alternative<Tensor<float>>(read_any_tensor(sf)));
}

TEST(TensorIo, TruncatedFileIsADataError) {
  std::stringstream ss;
  write_tensor(ss, T2({4, 4}, 1.0));
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_tensor<double>(cut), DataError);
}

}  // namespace
}  // namespace usema
