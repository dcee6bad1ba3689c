#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "usema/dispersion.hpp"

namespace usema::dispersion {
namespace {

using T2 = Tensor<double>;

T2 uniform(std::int64_t n) { return T2({n, n}, 1.0 / static_cast<double>(n)); }

T2 permutation(Rng& rng, std::int64_t n) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  T2 p({n, n});
  for (std::int64_t r = 0; r < n; ++r) p[r * n + perm[static_cast<std::size_t>(r)]] = 1.0;
  return p;
}

std::int64_t total(const Histogram& h) {
  return std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0});
}

TEST(AttentionStats, UniformMatrix) {
  const auto r = attention_stats(uniform(50));
  EXPECT_EQ(r.n, 50);
  EXPECT_NEAR(r.n_min, 1.0, 1e-12);
  EXPECT_NEAR(r.n_max, 1.0, 1e-12);
  EXPECT_EQ(r.band_fraction, 1.0);
  EXPECT_EQ(r.relative_band_fraction, 1.0);
}

TEST(AttentionStats, PermutationMatrix) {
  Rng rng(1);
  const auto r = attention_stats(permutation(rng, 200));
  EXPECT_EQ(r.n_max, 200.0);
  EXPECT_EQ(r.n_min, 0.0);
  EXPECT_LE(r.band_fraction, 1e-2);
}

TEST(AttentionStats, FigureOneRegime) {
  // Column pairs sit at 1/n +- delta with delta <= 1.3e-5, so rows sum to 1
  // and every entry stays inside [1e-4, 2e-4].
  const std::int64_t n = 5376;
  T2 a({n, n});
  Rng rng(2);
  const double base = 1.0 / static_cast<double>(n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; c += 2) {
      const double delta = rng.uniform(0.0, 1.3e-5);
      a[r * n + c] = base + delta;
      a[r * n + c + 1] = base - delta;
    }
  const auto rep = attention_stats(a);
  EXPECT_GE(rep.min, 1e-4 * (1 - 1e-9));
  EXPECT_LE(rep.max, 2e-4);
  EXPECT_GE(rep.n_min, 0.5376 * (1 - 1e-9));
  EXPECT_LE(rep.n_max, 1.0752);
  EXPECT_EQ(rep.band_fraction, 1.0);
}

TEST(AttentionStats, SingleEntry) {
  const auto r = attention_stats(T2({1, 1}, 1.0));
  EXPECT_EQ(r.n_max, 1.0);
  EXPECT_EQ(r.n_min, 1.0);
  EXPECT_EQ(r.mean, 1.0);
}

TEST(AttentionStats, MeanIsReciprocalOfLength) {
  Rng rng(3);
  for (std::int64_t n : {2, 7, 64, 300}) {
    const auto r = attention_stats(random_attention(rng, n, 8));
    EXPECT_NEAR(r.mean, 1.0 / static_cast<double>(n), 1e-9);
    EXPECT_LE(r.n_min, 1.0);
    EXPECT_GE(r.n_max, 1.0);
    EXPECT_EQ(total(r.histogram), n * n);
    EXPECT_EQ(r.histogram.counts.size(), 64u);
    EXPECT_EQ(r.histogram.edges.size(), 65u);
  }
}

TEST(AttentionStats, NMaxInvariantUnderBlockBroadcast) {
  // kron(A, J_k / k) is row-stochastic of size nk with entries a/k, so n * max is unchanged.
  Rng rng(4);
  const std::int64_t n = 12, k = 3;
  const auto a = random_attention(rng, n, 4);
  T2 big({n * k, n * k});
  for (std::int64_t r = 0; r < n * k; ++r)
    for (std::int64_t c = 0; c < n * k; ++c) big[r * n * k + c] = a[(r / k) * n + c / k] / k;
  EXPECT_NEAR(attention_stats(big).n_max, attention_stats(a).n_max, 1e-12);
}

TEST(AttentionStats, RejectsNonStochasticRows) {
  T2 a = uniform(4);
  a[0] += 0.01;
  EXPECT_THROW(attention_stats(a), ValidationError);
  T2 neg = uniform(2);
  neg[0] = -0.5;
  neg[1] = 1.5;
  EXPECT_THROW(attention_stats(neg), ValidationError);
  T2 nan = uniform(2);
  nan[3] = NAN;
  EXPECT_THROW(attention_stats(nan), ValidationError);
  EXPECT_THROW(attention_stats(T2({2, 3}, 0.5)), ValidationError);
}

TEST(AttentionStats, BandIsConfigurable) {
  T2 a({2, 2});
  a[0] = 0.6;
  a[1] = 0.4;
  a[2] = 0.5;
  a[3] = 0.5;
  StatsOptions o;
  o.band = 0.05;
  EXPECT_EQ(attention_stats(a, o).band_fraction, 0.5);
  o.band = 0.15;
  EXPECT_EQ(attention_stats(a, o).band_fraction, 1.0);
}

TEST(AttentionMatrix, MatchesDirectSoftmax) {
  Rng rng(5);
  const auto q = test::randn(rng, {5, 4}), k = test::randn(rng, {5, 4});
  const auto a = attention_matrix(q, k);
  for (std::int64_t r = 0; r < 5; ++r) {
    double z = 0;
    std::vector<double> e(5);
    for (std::int64_t c = 0; c < 5; ++c) {
      double s = 0;
      for (std::int64_t j = 0; j < 4; ++j) s += q[r * 4 + j] * k[c * 4 + j];
      z += e[static_cast<std::size_t>(c)] = std::exp(s / 2.0);
    }
    for (std::int64_t c = 0; c < 5; ++c) EXPECT_NEAR(a[r * 5 + c], e[static_cast<std::size_t>(c)] / z, 1e-14);
  }
}

TEST(RandomScan, MaxEntryDecaysWithLength) {
  const auto reps = random_scan({256, 1024}, 16, 10, 7);
  ASSERT_EQ(reps.size(), 2u);
  EXPECT_EQ(reps[0].n, 256);
  EXPECT_EQ(reps[1].n, 1024);
  EXPECT_LE(reps[1].max, reps[0].max);
}

TEST(RandomScan, LengthsMustAscend) {
  EXPECT_THROW(random_scan({64, 32}, 4, 1, 0), ValidationError);
}

TEST(RandomScan, IsDeterministic) {
  const auto a = random_scan({16, 32}, 4, 3, 11), b = random_scan({16, 32}, 4, 3, 11);
  EXPECT_EQ(reports_csv(a), reports_csv(b));
}

TEST(Csv, Headers) {
  const auto reps = random_scan({8}, 4, 1, 0);
  const auto csv = reports_csv(reps);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,n_min,n_max,mean,band_fraction");
  const auto h = histogram_csv(reps[0].histogram);
  EXPECT_EQ(h.substr(0, h.find('\n')), "bin_lower,count");
}

}  // namespace
}  // namespace usema::dispersion
