#include "oracles.hpp"

#include <cmath>
#include <limits>

namespace usema::oracle {

Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> c({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::int64_t p = 0; p < k; ++p) s += a.at({i, p}) * b.at({p, j});
      c.at({i, j}) = s;
    }
  return c;
}

Tensor<double> masked_softmax(const Tensor<double>& logits, const Tensor<double>& mask) {
  const std::int64_t m = logits.dim(0), n = logits.dim(1);
  Tensor<double> out({m, n});
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < m; ++i) {
    double mx = neg_inf;
    for (std::int64_t j = 0; j < n; ++j) {
      const double z = mask.at({i, j}) != 0 ? logits.at({i, j}) : neg_inf;
      mx = std::max(mx, z);
    }
    double total = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      const double z = mask.at({i, j}) != 0 ? logits.at({i, j}) : neg_inf;
      out.at({i, j}) = std::exp(z - mx);  // exp(-inf) = 0
      total += out.at({i, j});
    }
    for (std::int64_t j = 0; j < n; ++j) out.at({i, j}) /= total;
  }
  return out;
}

Tensor<double> masked_window_attention(const Tensor<double>& q, const Tensor<double>& k,
                                       const Tensor<double>& v, std::int64_t w, double scale) {
  const std::int64_t n = q.dim(0), d = q.dim(1);
  Tensor<double> logits({n, n}), mask({n, n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::int64_t c = 0; c < d; ++c) s += q.at({i, c}) * k.at({j, c});
      logits.at({i, j}) = scale * s;
      // 1-based J(m) = {Mw+1, ..., (M+1)w}, M = floor((m-1)/w).
      const std::int64_t M = i / w;
      mask.at({i, j}) = (j >= M * w && j < (M + 1) * w) ? 1.0 : 0.0;
    }
  return matmul(masked_softmax(logits, mask), v);
}

Tensor<double> column_mean_broadcast(const Tensor<double>& v) {
  const std::int64_t n = v.dim(0), d = v.dim(1);
  Tensor<double> out({n, d});
  for (std::int64_t c = 0; c < d; ++c) {
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += v.at({i, c});
    for (std::int64_t i = 0; i < n; ++i) out.at({i, c}) = s / double(n);
  }
  return out;
}

Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& kernel, std::int64_t stride,
                      std::int64_t pad, std::int64_t groups) {
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = kernel.dim(0), cg = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  const std::int64_t og = O / groups;
  Tensor<double> out({B, O, Ho, Wo});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t y = 0; y < Ho; ++y)
        for (std::int64_t xo = 0; xo < Wo; ++xo) {
          double s = 0;
          const std::int64_t g = o / og;
          for (std::int64_t c = 0; c < cg; ++c)
            for (std::int64_t i = 0; i < kh; ++i)
              for (std::int64_t j = 0; j < kw; ++j) {
                const std::int64_t r = y * stride - pad + i, col = xo * stride - pad + j;
                if (r < 0 || r >= H || col < 0 || col >= W) continue;
                s += x.at({b, g * cg + c, r, col}) * kernel.at({o, c, i, j});
              }
          out.at({b, o, y, xo}) = s;
        }
  (void)C;
  return out;
}

Tensor<double> mamba_scan(const Tensor<double>& x, const mamba::Params& params) {
  const std::int64_t n = x.dim(0), d = x.dim(1);
  Tensor<double> h({d, d}), y({n, d});
  for (std::int64_t t = 0; t < n; ++t) {
    const auto& s = params.steps[static_cast<std::size_t>(t)];
    for (std::int64_t r = 0; r < d; ++r)
      for (std::int64_t c = 0; c < d; ++c)
        h.at({r, c}) = s.a.at({r, c}) * h.at({r, c}) +
                       s.b.at({r, 0}) * (s.delta.at({0, c}) * x.at({t, c}));
    for (std::int64_t c = 0; c < d; ++c) {
      double acc = params.d_skip.at({0, c}) * x.at({t, c});
      for (std::int64_t r = 0; r < d; ++r) acc += s.c.at({0, r}) * h.at({r, c});
      y.at({t, c}) = acc;
    }
  }
  return y;
}

}  // namespace usema::oracle
