#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usema/rng.hpp"
#include "usema/tensor.hpp"

namespace usema::dispersion {

struct Histogram {
  std::vector<double> edges;          // bins + 1 ascending edges
  std::vector<std::int64_t> counts;   // per bin, summing to numel
};

struct Report {
  std::int64_t n = 0;
  double min = 0.0, max = 0.0, mean = 0.0;
  double n_min = 0.0, n_max = 0.0;  // n * min, n * max
  double band = 1e-4;               // absolute half-width around 1/n
  double band_fraction = 0.0;       // entries with |a - 1/n| <= band
  double relative_band_fraction = 0.0;  // entries with |a - 1/n| <= 0.5/n
  Histogram histogram;
};

struct StatsOptions {
  double band = 1e-4;
  std::int64_t bins = 64;
  double row_tolerance = 1e-6;
};

// Statistics of a row-stochastic [n x n] matrix. ValidationError when an entry
// is negative or non-finite or a row sum is off by more than row_tolerance.
template <typename T>
Report attention_stats(const Tensor<T>& attn, const StatsOptions& options = {});

// softmax(Q K^T / sqrt(d)) from Q, K [n x d].
Tensor<double> attention_matrix(const Tensor<double>& q, const Tensor<double>& k);

// Gaussian Q, K with entries of variance 1/d.
Tensor<double> random_attention(Rng& rng, std::int64_t n, std::int64_t d);

// One report per length, in ascending order; `seeds` matrices per length are
// drawn and the reported scalars are their means (histogram of the first).
std::vector<Report> random_scan(const std::vector<std::int64_t>& lengths, std::int64_t d,
                                std::int64_t seeds, std::uint64_t seed,
                                const StatsOptions& options = {});

// `n,n_min,n_max,mean,band_fraction`.
std::string reports_csv(const std::vector<Report>& reports);
// `bin_lower,count`.
std::string histogram_csv(const Histogram& histogram);

}  // namespace usema::dispersion
