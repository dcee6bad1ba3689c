#include "usema/attention.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "gemm.hpp"
#include "usema/ops.hpp"

namespace usema::attention {
namespace {

struct Layout {
  std::int64_t batch, length, dim, heads, head_dim, window;
};

Layout make_layout(const Shape& q, const Shape& k, const Shape& v, std::int64_t heads,
                   std::int64_t window) {
  if (q.size() != 3 || q != k || q != v) {
    throw DimensionError("attention: q/k/v must share one [B, n, d] shape, got " + shape_str(q) +
                         ", " + shape_str(k) + ", " + shape_str(v));
  }
  if (heads < 1 || q[2] % heads != 0) {
    throw DimensionError("attention: dim " + std::to_string(q[2]) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (window < 1) throw DimensionError("attention: window width must be >= 1");
  return {q[0], q[1], q[2], heads, q[2] / heads, std::min(window, q[1])};
}

// Row-stochastic softmax over `cols` entries of each of `rows` rows, in place.
template <typename T>
void softmax_inplace(T* s, std::int64_t rows, std::int64_t cols) {
  for (std::int64_t r = 0; r < rows; ++r) {
    T* row = s + r * cols;
    T mx = row[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T total = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    const T inv = T{1} / total;
    for (std::int64_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

// Each query block J attends to keys in the same block, so the window
// operator is block-diagonal attention. `probs`, when non-null, receives the
// per-block weight matrices in (b, h, block) order.
template <typename T>
void block_forward(const T* q, const T* k, const T* v, T* out, const Layout& L, T scale,
                   std::vector<T>* probs) {
  const int d = static_cast<int>(L.dim);
  const int dh = static_cast<int>(L.head_dim);
  std::vector<T> scratch;
  for (std::int64_t b = 0; b < L.batch; ++b) {
    for (std::int64_t h = 0; h < L.heads; ++h) {
      for (std::int64_t start = 0; start < L.length; start += L.window) {
        const int len = static_cast<int>(std::min(L.window, L.length - start));
        const std::int64_t base = (b * L.length + start) * L.dim + h * L.head_dim;
        T* p;
        if (probs) {
          const auto off = probs->size();
          probs->resize(off + static_cast<std::size_t>(len) * len);
          p = probs->data() + off;
        } else {
          scratch.resize(static_cast<std::size_t>(len) * len);
          p = scratch.data();
        }
        detail::gemm(false, true, len, len, dh, scale, q + base, d, k + base, d, T{0}, p, len);
        softmax_inplace(p, len, len);
        detail::gemm(false, false, len, dh, len, T{1}, p, len, v + base, d, T{0}, out + base, d);
      }
    }
  }
}

template <typename T>
void block_backward(const T* q, const T* k, const T* v, const T* dout, const std::vector<T>& probs,
                    T* dq, T* dk, T* dv, const Layout& L, T scale) {
  const int d = static_cast<int>(L.dim);
  const int dh = static_cast<int>(L.head_dim);
  std::vector<T> ds;
  std::size_t off = 0;
  for (std::int64_t b = 0; b < L.batch; ++b) {
    for (std::int64_t h = 0; h < L.heads; ++h) {
      for (std::int64_t start = 0; start < L.length; start += L.window) {
        const int len = static_cast<int>(std::min(L.window, L.length - start));
        const std::int64_t base = (b * L.length + start) * L.dim + h * L.head_dim;
        const T* p = probs.data() + off;
        off += static_cast<std::size_t>(len) * len;
        if (dv) {
          detail::gemm(true, false, len, dh, len, T{1}, p, len, dout + base, d, T{1}, dv + base, d);
        }
        if (!dq && !dk) continue;
        ds.resize(static_cast<std::size_t>(len) * len);
        // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)).
        detail::gemm(false, true, len, len, dh, T{1}, dout + base, d, v + base, d, T{0},
                     ds.data(), len);
        for (int r = 0; r < len; ++r) {
          T* row = ds.data() + static_cast<std::size_t>(r) * len;
          const T* prow = p + static_cast<std::size_t>(r) * len;
          T dot = 0;
          for (int c = 0; c < len; ++c) dot += row[c] * prow[c];
          for (int c = 0; c < len; ++c) row[c] = prow[c] * (row[c] - dot);
        }
        if (dq) {
          detail::gemm(false, false, len, dh, len, scale, ds.data(), len, k + base, d, T{1},
                       dq + base, d);
        }
        if (dk) {
          detail::gemm(true, false, len, dh, len, scale, ds.data(), len, q + base, d, T{1},
                       dk + base, d);
        }
      }
    }
  }
}

template <typename T>
Tensor<T> as_batched(const Tensor<T>& x) {
  if (x.rank() != 2) {
    throw DimensionError("attention: expected [n x d], got " + shape_str(x.shape()));
  }
  return x.reshaped({1, x.dim(0), x.dim(1)});
}

template <typename T>
Tensor<T> run_single_head(const AttentionInputs<T>& in, std::int64_t window, std::optional<T> scale,
                          std::vector<T>* probs) {
  in.validate();
  const Tensor<T> q = as_batched(in.q), k = as_batched(in.k), v = as_batched(in.v);
  const Layout L = make_layout(q.shape(), k.shape(), v.shape(), 1, window);
  Tensor<T> out(q.shape());
  block_forward(q.ptr(), k.ptr(), v.ptr(), out.ptr(), L, scale.value_or(default_scale<T>(L.dim)),
                probs);
  return std::move(out).reshaped(in.q.shape());
}

template <typename T>
void rope_rotate(const T* src, T* dst, std::int64_t batch, std::int64_t length, std::int64_t dim,
                 std::int64_t heads, double base, double direction) {
  const std::int64_t head_dim = dim / heads;
  const std::int64_t pairs = head_dim / 2;
  std::vector<double> theta(static_cast<std::size_t>(pairs));
  for (std::int64_t i = 0; i < pairs; ++i)
    theta[static_cast<std::size_t>(i)] =
        std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
  std::vector<T> cs(static_cast<std::size_t>(pairs)), sn(static_cast<std::size_t>(pairs));
  for (std::int64_t m = 0; m < length; ++m) {
    for (std::int64_t i = 0; i < pairs; ++i) {
      const double angle = static_cast<double>(m) * theta[static_cast<std::size_t>(i)];
      cs[static_cast<std::size_t>(i)] = static_cast<T>(std::cos(angle));
      sn[static_cast<std::size_t>(i)] = static_cast<T>(direction * std::sin(angle));
    }
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t row = (b * length + m) * dim;
      for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < pairs; ++i) {
          const std::int64_t c = row + h * head_dim + 2 * i;
          const T x0 = src[c], x1 = src[c + 1];
          const T co = cs[static_cast<std::size_t>(i)], si = sn[static_cast<std::size_t>(i)];
          dst[c] = co * x0 - si * x1;
          dst[c + 1] = si * x0 + co * x1;
        }
      }
    }
  }
}

void check_rope_dims(std::int64_t dim, std::int64_t heads) {
  if (heads < 1 || dim % heads != 0 || (dim / heads) % 2 != 0) {
    throw DimensionError("rope_apply: head dim must be even (dim " + std::to_string(dim) +
                         ", heads " + std::to_string(heads) + ")");
  }
}

}  // namespace

IndexRange window_index_set(std::int64_t m, const WindowSpec& spec) {
  if (spec.width < 1 || spec.length < 1) {
    throw DimensionError("window_index_set: width and length must be >= 1");
  }
  if (m < 1 || m > spec.length) {
    throw DimensionError("window_index_set: position " + std::to_string(m) + " outside 1.." +
                         std::to_string(spec.length));
  }
  const std::int64_t block = (m - 1) / spec.width;
  return {block * spec.width + 1, std::min((block + 1) * spec.width, spec.length)};
}

template <typename T>
AttentionInputs<T> AttentionInputs<T>::project(const Tensor<T>& x, const Tensor<T>& w_q,
                                               const Tensor<T>& w_k, const Tensor<T>& w_v,
                                               const Tensor<T>& b_q, const Tensor<T>& b_k,
                                               const Tensor<T>& b_v) {
  if (x.rank() != 2) throw DimensionError("project: x must be [n x d], got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), d = x.dim(1);
  const Shape wshape{d, d}, bshape{n, d};
  auto one = [&](const Tensor<T>& w, const Tensor<T>& b) {
    require_same_shape(w.shape(), wshape, "project weight");
    require_same_shape(b.shape(), bshape, "project bias");
    Tensor<T> out = b;
    detail::gemm(false, false, static_cast<int>(n), static_cast<int>(d), static_cast<int>(d), T{1},
                 x.ptr(), static_cast<int>(d), w.ptr(), static_cast<int>(d), T{1}, out.ptr(),
                 static_cast<int>(d));
    return out;
  };
  return {one(w_q, b_q), one(w_k, b_k), one(w_v, b_v)};
}

template <typename T>
void AttentionInputs<T>::validate() const {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention inputs must share one [n x d] shape, got " +
                         shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                         shape_str(v.shape()));
  }
}

template <typename T>
Tensor<T> full_attention(const AttentionInputs<T>& in, std::optional<T> scale) {
  in.validate();
  return run_single_head<T>(in, in.length(), scale, nullptr);
}

template <typename T>
Tensor<T> window_attention(const AttentionInputs<T>& in, std::int64_t window,
                           std::optional<T> scale) {
  return run_single_head<T>(in, window, scale, nullptr);
}

template <typename T>
Tensor<T> global_average(const Tensor<T>& v) {
  if (v.rank() != 2) {
    throw DimensionError("global_average: expected [n x d], got " + shape_str(v.shape()));
  }
  const std::int64_t n = v.dim(0), d = v.dim(1);
  std::vector<T> mean(static_cast<std::size_t>(d), T{0});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c) mean[static_cast<std::size_t>(c)] += v[i * d + c];
  for (auto& m : mean) m /= static_cast<T>(n);
  Tensor<T> out(v.shape());
  for (std::int64_t i = 0; i < n; ++i) std::copy(mean.begin(), mean.end(), out.ptr() + i * d);
  return out;
}

template <typename T>
Tensor<T> sema_attention(const AttentionInputs<T>& in, std::int64_t window,
                         std::optional<T> scale) {
  Tensor<T> out = window_attention(in, window, scale);
  const Tensor<T> avg = global_average(in.v);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += avg[i];
  return out;
}

template <typename T>
Tensor<T> window_weights(const AttentionInputs<T>& in, std::int64_t window,
                         std::optional<T> scale) {
  std::vector<T> probs;
  run_single_head(in, window, scale, &probs);
  const std::int64_t n = in.length();
  const std::int64_t w = std::min(window, n);
  Tensor<T> dense({n, n});
  std::size_t off = 0;
  for (std::int64_t start = 0; start < n; start += w) {
    const std::int64_t len = std::min(w, n - start);
    for (std::int64_t r = 0; r < len; ++r)
      for (std::int64_t c = 0; c < len; ++c)
        dense[(start + r) * n + start + c] = probs[off + static_cast<std::size_t>(r * len + c)];
    off += static_cast<std::size_t>(len * len);
  }
  return dense;
}

template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, const RopeParams& params) {
  if (x.rank() != 2) throw DimensionError("rope_apply: expected [n x d], got " + shape_str(x.shape()));
  check_rope_dims(x.dim(1), 1);
  Tensor<T> out(x.shape());
  rope_rotate(x.ptr(), out.ptr(), 1, x.dim(0), x.dim(1), 1, params.base, 1.0);
  return out;
}

template <typename T>
Var<T> window_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                        std::int64_t window, T scale) {
  const Layout L = make_layout(q.shape(), k.shape(), v.shape(), heads, window);
  Tensor<T> out(q.shape());
  const bool save = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  auto probs = std::make_shared<std::vector<T>>();
  block_forward(q.value().ptr(), k.value().ptr(), v.value().ptr(), out.ptr(), L, scale,
                save ? probs.get() : nullptr);
  return record<T>("window_attention", std::move(out), {q, k, v}, [L, scale, probs](Node<T>& self) {
    Node<T>& nq = *self.parents[0];
    Node<T>& nk = *self.parents[1];
    Node<T>& nv = *self.parents[2];
    block_backward(nq.value.ptr(), nk.value.ptr(), nv.value.ptr(), self.grad.ptr(), *probs,
                   nq.requires_grad ? nq.grad_buffer().ptr() : nullptr,
                   nk.requires_grad ? nk.grad_buffer().ptr() : nullptr,
                   nv.requires_grad ? nv.grad_buffer().ptr() : nullptr, L, scale);
  });
}

template <typename T>
Var<T> full_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                      T scale) {
  if (q.value().rank() != 3) {
    throw DimensionError("full_attention: expected [B, n, d], got " + shape_str(q.shape()));
  }
  return window_attention(q, k, v, heads, q.dim(1), scale);
}

template <typename T>
Var<T> global_average(const Var<T>& v) {
  if (v.value().rank() != 3) {
    throw DimensionError("global_average: expected [B, n, d], got " + shape_str(v.shape()));
  }
  const std::int64_t batch = v.dim(0), n = v.dim(1), d = v.dim(2);
  Tensor<T> out(v.shape());
  std::vector<T> mean(static_cast<std::size_t>(d));
  for (std::int64_t b = 0; b < batch; ++b) {
    std::fill(mean.begin(), mean.end(), T{0});
    const T* src = v.value().ptr() + b * n * d;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < d; ++c) mean[static_cast<std::size_t>(c)] += src[i * d + c];
    for (auto& m : mean) m /= static_cast<T>(n);
    for (std::int64_t i = 0; i < n; ++i)
      std::copy(mean.begin(), mean.end(), out.ptr() + (b * n + i) * d);
  }
  return record<T>("global_average", std::move(out), {v}, [batch, n, d](Node<T>& self) {
    // d(out_i)/d(v_j) = 1/n for every i, j: each input row receives the mean
    // of the incoming row gradients.
    Tensor<T> g(self.value.shape());
    std::vector<T> col(static_cast<std::size_t>(d));
    for (std::int64_t b = 0; b < batch; ++b) {
      std::fill(col.begin(), col.end(), T{0});
      const T* src = self.grad.ptr() + b * n * d;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t c = 0; c < d; ++c) col[static_cast<std::size_t>(c)] += src[i * d + c];
      for (auto& m : col) m /= static_cast<T>(n);
      for (std::int64_t i = 0; i < n; ++i)
        std::copy(col.begin(), col.end(), g.ptr() + (b * n + i) * d);
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> sema_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                      std::int64_t window, T scale) {
  return add(window_attention(q, k, v, heads, window, scale), global_average(v));
}

template <typename T>
Var<T> rope_apply(const Var<T>& x, std::int64_t heads, const RopeParams& params) {
  if (x.value().rank() != 3) {
    throw DimensionError("rope_apply: expected [B, n, d], got " + shape_str(x.shape()));
  }
  const std::int64_t batch = x.dim(0), n = x.dim(1), d = x.dim(2);
  check_rope_dims(d, heads);
  Tensor<T> out(x.shape());
  rope_rotate(x.value().ptr(), out.ptr(), batch, n, d, heads, params.base, 1.0);
  const double base = params.base;
  return record<T>("rope_apply", std::move(out), {x}, [batch, n, d, heads, base](Node<T>& self) {
    // Rotations are orthogonal: the adjoint rotates by the negated angle.
    Tensor<T> g(self.value.shape());
    rope_rotate(self.grad.ptr(), g.ptr(), batch, n, d, heads, base, -1.0);
    self.parents[0]->accumulate(std::move(g));
  });
}

#define USEMA_INSTANTIATE(T)                                                                   \
  template struct AttentionInputs<T>;                                                         \
  template Tensor<T> full_attention(const AttentionInputs<T>&, std::optional<T>);             \
  template Tensor<T> window_attention(const AttentionInputs<T>&, std::int64_t,                \
                                      std::optional<T>);                                      \
  template Tensor<T> global_average(const Tensor<T>&);                                        \
  template Tensor<T> sema_attention(const AttentionInputs<T>&, std::int64_t,                  \
                                    std::optional<T>);                                        \
  template Tensor<T> window_weights(const AttentionInputs<T>&, std::int64_t,                  \
                                    std::optional<T>);                                        \
  template Tensor<T> rope_apply(const Tensor<T>&, const RopeParams&);                         \
  template Var<T> window_attention(const Var<T>&, const Var<T>&, const Var<T>&, std::int64_t, \
                                   std::int64_t, T);                                          \
  template Var<T> full_attention(const Var<T>&, const Var<T>&, const Var<T>&, std::int64_t,   \
                                 T);                                                          \
  template Var<T> global_average(const Var<T>&);                                              \
  template Var<T> sema_attention(const Var<T>&, const Var<T>&, const Var<T>&, std::int64_t,   \
                                 std::int64_t, T);                                            \
  template Var<T> rope_apply(const Var<T>&, std::int64_t, const RopeParams&);

USEMA_INSTANTIATE(float)
USEMA_INSTANTIATE(double)
#undef USEMA_INSTANTIATE

}  // namespace usema::attention
