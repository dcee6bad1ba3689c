#include "usema/dispersion.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace usema::dispersion {

template <typename T>
Report attention_stats(const Tensor<T>& attn, const StatsOptions& options) {
  if (attn.rank() != 2 || attn.dim(0) != attn.dim(1)) {
    throw ValidationError("attention_stats: expected a square matrix, got " + shape_str(attn.shape()));
  }
  if (options.bins < 1) throw ValidationError("attention_stats: bins must be >= 1");
  const std::int64_t n = attn.dim(0);
  Report r;
  r.n = n;
  r.band = options.band;
  r.min = std::numeric_limits<double>::infinity();
  r.max = -r.min;
  double total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    double row = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      const double a = attn[i * n + j];
      if (!std::isfinite(a) || a < 0) {
        throw ValidationError("attention_stats: entry (" + std::to_string(i) + ", " +
                              std::to_string(j) + ") is negative or non-finite");
      }
      row += a;
      r.min = std::min(r.min, a);
      r.max = std::max(r.max, a);
    }
    if (std::abs(row - 1.0) > options.row_tolerance) {
      throw ValidationError("attention_stats: row " + std::to_string(i) + " sums to " +
                            std::to_string(row));
    }
    total += row;
  }
  const double count = double(n) * double(n);
  r.mean = total / count;
  r.n_min = double(n) * r.min;
  r.n_max = double(n) * r.max;
  const double centre = 1.0 / double(n);
  std::int64_t in_band = 0, in_rel = 0;
  r.histogram.counts.assign(static_cast<std::size_t>(options.bins), 0);
  const double lo = r.min, hi = r.max;
  const double width = hi > lo ? (hi - lo) / double(options.bins) : 1.0;
  for (std::int64_t i = 0; i < n * n; ++i) {
    const double a = attn[i];
    in_band += std::abs(a - centre) <= options.band;
    in_rel += std::abs(a - centre) <= 0.5 * centre;
    auto bin = hi > lo ? static_cast<std::int64_t>((a - lo) / width) : 0;
    bin = std::clamp<std::int64_t>(bin, 0, options.bins - 1);
    ++r.histogram.counts[static_cast<std::size_t>(bin)];
  }
  r.band_fraction = double(in_band) / count;
  r.relative_band_fraction = double(in_rel) / count;
  for (std::int64_t b = 0; b <= options.bins; ++b) r.histogram.edges.push_back(lo + width * double(b));
  return r;
}

Tensor<double> attention_matrix(const Tensor<double>& q, const Tensor<double>& k) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1) || q.dim(0) != k.dim(0)) {
    throw DimensionError("attention_matrix: Q " + shape_str(q.shape()) + " and K " +
                         shape_str(k.shape()) + " must both be [n x d]");
  }
  const std::int64_t n = q.dim(0), d = q.dim(1);
  Tensor<double> a({n, n});
  detail::gemm(false, true, n, n, d, 1.0 / std::sqrt(double(d)), q.ptr(), d, k.ptr(), d, 0.0,
               a.ptr(), n);
  for (std::int64_t i = 0; i < n; ++i) {
    double* row = a.ptr() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0;
    for (std::int64_t j = 0; j < n; ++j) s += (row[j] = std::exp(row[j] - mx));
    for (std::int64_t j = 0; j < n; ++j) row[j] /= s;
  }
  return a;
}

Tensor<double> random_attention(Rng& rng, std::int64_t n, std::int64_t d) {
  if (n < 1 || d < 1) throw DimensionError("random_attention: n and d must be >= 1");
  const double sd = 1.0 / std::sqrt(double(d));
  Tensor<double> q({n, d}), k({n, d});
  for (auto& v : q.data()) v = rng.normal(0.0, sd);
  for (auto& v : k.data()) v = rng.normal(0.0, sd);
  return attention_matrix(q, k);
}

std::vector<Report> random_scan(const std::vector<std::int64_t>& lengths, std::int64_t d,
                                std::int64_t seeds, std::uint64_t seed,
                                const StatsOptions& options) {
  if (!std::is_sorted(lengths.begin(), lengths.end())) {
    throw ValidationError("dispersion scan: lengths must be ascending");
  }
  if (seeds < 1) throw ValidationError("dispersion scan: seeds must be >= 1");
  std::vector<Report> out;
  Rng root(seed);
  for (const auto n : lengths) {
    Rng per_length = root.split();
    Report acc;
    for (std::int64_t s = 0; s < seeds; ++s) {
      Rng rng = per_length.split();
      Report r = attention_stats(random_attention(rng, n, d), options);
      if (s == 0) {
        acc = r;
        continue;
      }
      acc.min += r.min;
      acc.max += r.max;
      acc.mean += r.mean;
      acc.n_min += r.n_min;
      acc.n_max += r.n_max;
      acc.band_fraction += r.band_fraction;
      acc.relative_band_fraction += r.relative_band_fraction;
    }
    const double k = double(seeds);
    acc.min /= k;
    acc.max /= k;
    acc.mean /= k;
    acc.n_min /= k;
    acc.n_max /= k;
    acc.band_fraction /= k;
    acc.relative_band_fraction /= k;
    out.push_back(std::move(acc));
  }
  return out;
}

std::string reports_csv(const std::vector<Report>& reports) {
  std::string out = "n,n_min,n_max,mean,band_fraction\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.n),
                  r.n_min, r.n_max, r.mean, r.band_fraction);
    out += buf;
  }
  return out;
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lower,count\n";
  char buf[128];
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.9g,%lld\n", h.edges[b], static_cast<long long>(h.counts[b]));
    out += buf;
  }
  return out;
}

template Report attention_stats(const Tensor<float>&, const StatsOptions&);
template Report attention_stats(const Tensor<double>&, const StatsOptions&);

}  // namespace usema::dispersion
