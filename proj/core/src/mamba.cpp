#include "usema/mamba.hpp"

#include <string>

namespace usema::mamba {
namespace {

void check(const Tensor<double>& t, const Shape& expected, std::size_t step, const char* name) {
  if (t.shape() != expected) {
    throw DimensionError("mamba step " + std::to_string(step + 1) + ": " + name + " has shape " +
                         shape_str(t.shape()) + ", expected " + shape_str(expected));
  }
}

void check_input(const Tensor<double>& x, const Params& params) {
  if (x.rank() != 2) throw DimensionError("mamba: x must be [n x d], got " + shape_str(x.shape()));
  params.validate(x.dim(0), x.dim(1));
}

// u = B_t (Delta_t (.) x_t), the [d x d] outer product injected at step t.
void injection(const StepParams& s, const double* x, std::int64_t d, double* u) {
  for (std::int64_t r = 0; r < d; ++r)
    for (std::int64_t c = 0; c < d; ++c) u[r * d + c] = s.b[r] * (s.delta[c] * x[c]);
}

}  // namespace

void Params::validate(std::int64_t length, std::int64_t dim) const {
  if (static_cast<std::int64_t>(steps.size()) != length) {
    throw DimensionError("mamba: " + std::to_string(steps.size()) + " steps for sequence length " +
                         std::to_string(length));
  }
  if (d_skip.shape() != Shape{1, dim}) {
    throw DimensionError("mamba: D has shape " + shape_str(d_skip.shape()) + ", expected 1x" +
                         std::to_string(dim));
  }
  for (std::size_t t = 0; t < steps.size(); ++t) {
    check(steps[t].a, {dim, dim}, t, "A");
    check(steps[t].b, {dim, 1}, t, "B");
    check(steps[t].c, {1, dim}, t, "C");
    check(steps[t].delta, {1, dim}, t, "Delta");
  }
}

Params random_params(Rng& rng, std::int64_t length, std::int64_t dim, double a_lo, double a_hi) {
  Params p;
  p.d_skip = Tensor<double>({1, dim});
  for (auto& v : p.d_skip.data()) v = rng.normal();
  for (std::int64_t t = 0; t < length; ++t) {
    StepParams s{Tensor<double>({dim, dim}), Tensor<double>({dim, 1}), Tensor<double>({1, dim}),
                 Tensor<double>({1, dim})};
    for (auto& v : s.a.data()) v = rng.uniform(a_lo, a_hi);
    for (auto& v : s.b.data()) v = rng.normal();
    for (auto& v : s.c.data()) v = rng.normal();
    for (auto& v : s.delta.data()) v = rng.uniform(0.1, 1.0);
    p.steps.push_back(std::move(s));
  }
  return p;
}

Tensor<double> scan(const Tensor<double>& x, const Params& params) {
  check_input(x, params);
  const std::int64_t n = x.dim(0), d = x.dim(1);
  Tensor<double> y({n, d});
  std::vector<double> h(static_cast<std::size_t>(d * d), 0.0);
  std::vector<double> u(static_cast<std::size_t>(d * d));
  for (std::int64_t t = 0; t < n; ++t) {
    const StepParams& s = params.steps[static_cast<std::size_t>(t)];
    const double* xt = x.ptr() + t * d;
    injection(s, xt, d, u.data());
    for (std::int64_t e = 0; e < d * d; ++e)
      h[static_cast<std::size_t>(e)] = s.a[e] * h[static_cast<std::size_t>(e)] + u[static_cast<std::size_t>(e)];
    double* yt = y.ptr() + t * d;
    for (std::int64_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::int64_t r = 0; r < d; ++r) acc += s.c[r] * h[static_cast<std::size_t>(r * d + c)];
      yt[c] = acc + params.d_skip[c] * xt[c];
    }
  }
  return y;
}

UnrolledTerms unrolled_terms(const Tensor<double>& x, const Params& params) {
  check_input(x, params);
  const std::int64_t n = x.dim(0), d = x.dim(1);
  const std::int64_t dd = d * d;
  UnrolledTerms terms{Tensor<double>({n, n, d, d}), Tensor<double>({n, d}), x, params.d_skip};
  std::vector<double> decay(static_cast<std::size_t>(dd));
  for (std::int64_t m = 0; m < n; ++m) {
    const auto& cm = params.steps[static_cast<std::size_t>(m)].c;
    std::copy(cm.ptr(), cm.ptr() + d, terms.queries.ptr() + m * d);
    for (std::int64_t i = 0; i <= m; ++i) {
      // Product of the m - i transitions A_m ... A_{i+1}, each formed afresh.
      std::fill(decay.begin(), decay.end(), 1.0);
      for (std::int64_t j = 1; j <= m - i; ++j) {
        const auto& a = params.steps[static_cast<std::size_t>(m - (j - 1))].a;
        for (std::int64_t e = 0; e < dd; ++e) decay[static_cast<std::size_t>(e)] *= a[e];
      }
      double* kv = terms.kv.ptr() + (m * n + i) * dd;
      injection(params.steps[static_cast<std::size_t>(i)], x.ptr() + i * d, d, kv);
      for (std::int64_t e = 0; e < dd; ++e) kv[e] *= decay[static_cast<std::size_t>(e)];
    }
  }
  return terms;
}

Tensor<double> reconstruct(const UnrolledTerms& terms) {
  const std::int64_t n = terms.values.dim(0), d = terms.values.dim(1);
  const std::int64_t dd = d * d;
  Tensor<double> y({n, d});
  for (std::int64_t m = 0; m < n; ++m) {
    const double* q = terms.queries.ptr() + m * d;
    double* ym = y.ptr() + m * d;
    for (std::int64_t i = 0; i <= m; ++i) {
      const double* kv = terms.kv.ptr() + (m * n + i) * dd;
      for (std::int64_t r = 0; r < d; ++r)
        for (std::int64_t c = 0; c < d; ++c) ym[c] += q[r] * kv[r * d + c];
    }
    for (std::int64_t c = 0; c < d; ++c) ym[c] += terms.d_skip[c] * terms.values[m * d + c];
  }
  return y;
}

Tensor<double> unrolled(const Tensor<double>& x, const Params& params) {
  return reconstruct(unrolled_terms(x, params));
}

ForgettingProfile forgetting_profile(const Params& params, std::int64_t m) {
  if (m < 1 || m > static_cast<std::int64_t>(params.steps.size())) {
    throw DimensionError("forgetting_profile: position " + std::to_string(m) + " outside 1.." +
                         std::to_string(params.steps.size()));
  }
  const std::int64_t d = params.steps.front().a.dim(0);
  const std::int64_t dd = d * d;
  ForgettingProfile profile{Tensor<double>({m, d, d}, 1.0), true};
  for (std::int64_t t = 0; t < m; ++t) {
    for (double a : params.steps[static_cast<std::size_t>(t)].a.data()) {
      if (a < 0.0 || a > 1.0) profile.in_unit_interval = false;
    }
  }
  // Row i (1-based) accumulates A_m ... A_{i+1}; built from the newest step back.
  for (std::int64_t i = m - 1; i >= 1; --i) {
    const double* next = profile.weights.ptr() + i * dd;  // row i + 1
    double* row = profile.weights.ptr() + (i - 1) * dd;
    const auto& a = params.steps[static_cast<std::size_t>(i)].a;  // A_{i+1}
    for (std::int64_t e = 0; e < dd; ++e) row[e] = next[e] * a[e];
  }
  return profile;
}

}  // namespace usema::mamba
