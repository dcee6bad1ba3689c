#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "usema/ops.hpp"

namespace usema {
namespace {

// Elementwise map whose derivative depends only on the input.
template <typename T, typename F, typename DF>
Var<T> pointwise(const char* op, const Var<T>& x, F f, DF df) {
  Tensor<T> out(x.shape());
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = f(px[i]);
  return record<T>(op, std::move(out), {x}, [df](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Tensor<T> g(in.value.shape());
    const T* px = in.value.ptr();
    const T* pg = self.grad.ptr();
    T* pd = g.ptr();
    for (std::int64_t i = 0; i < g.numel(); ++i) pd[i] = pg[i] * df(px[i]);
    in.accumulate(std::move(g));
  });
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

// Shared normalisation kernel: `groups` contiguous slices of length `len`; the
// affine parameter index of element k of slice s is affine_index(s, k).
template <typename T, typename AffineIndex>
Var<T> normalize(const char* op, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps,
                 std::int64_t groups, std::int64_t len, AffineIndex affine_index) {
  Tensor<T> out(x.shape());
  // Saved per-slice inverse std and normalised values for backward.
  std::vector<T> inv_std(static_cast<std::size_t>(groups));
  Tensor<T> xhat(x.shape());
  const T* px = x.value().ptr();
  const T* pg = gamma.value().ptr();
  const T* pb = beta.value().ptr();
  for (std::int64_t s = 0; s < groups; ++s) {
    const T* src = px + s * len;
    T mean = 0;
    for (std::int64_t k = 0; k < len; ++k) mean += src[k];
    mean /= static_cast<T>(len);
    T var = 0;
    for (std::int64_t k = 0; k < len; ++k) var += (src[k] - mean) * (src[k] - mean);
    var /= static_cast<T>(len);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(s)] = is;
    T* xh = xhat.ptr() + s * len;
    T* dst = out.ptr() + s * len;
    for (std::int64_t k = 0; k < len; ++k) {
      xh[k] = (src[k] - mean) * is;
      const auto a = affine_index(s, k);
      dst[k] = pg[a] * xh[k] + pb[a];
    }
  }
  return record<T>(
      op, std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), groups, len,
       affine_index](Node<T>& self) {
        Node<T>& xin = *self.parents[0];
        Node<T>& gam = *self.parents[1];
        Node<T>& bet = *self.parents[2];
        const T* dy = self.grad.ptr();
        const T* xh = xhat.ptr();
        const T* pg = gam.value.ptr();
        if (gam.requires_grad || bet.requires_grad) {
          T* dg = gam.requires_grad ? gam.grad_buffer().ptr() : nullptr;
          T* db = bet.requires_grad ? bet.grad_buffer().ptr() : nullptr;
          for (std::int64_t s = 0; s < groups; ++s)
            for (std::int64_t k = 0; k < len; ++k) {
              const auto a = affine_index(s, k);
              const T g = dy[s * len + k];
              if (dg) dg[a] += g * xh[s * len + k];
              if (db) db[a] += g;
            }
        }
        if (xin.requires_grad) {
          Tensor<T> dx(xin.value.shape());
          std::vector<T> dxh(static_cast<std::size_t>(len));
          for (std::int64_t s = 0; s < groups; ++s) {
            T mean_d = 0, mean_dx = 0;
            for (std::int64_t k = 0; k < len; ++k) {
              const T v = dy[s * len + k] * pg[affine_index(s, k)];
              dxh[static_cast<std::size_t>(k)] = v;
              mean_d += v;
              mean_dx += v * xh[s * len + k];
            }
            mean_d /= static_cast<T>(len);
            mean_dx /= static_cast<T>(len);
            const T is = inv_std[static_cast<std::size_t>(s)];
            T* d = dx.ptr() + s * len;
            for (std::int64_t k = 0; k < len; ++k)
              d[k] = is * (dxh[static_cast<std::size_t>(k)] - mean_d - xh[s * len + k] * mean_dx);
          }
          xin.accumulate(std::move(dx));
        }
      });
}

void check_affine(const Shape& gamma, const Shape& beta, std::int64_t extent, const char* op) {
  const Shape expected{extent};
  if (gamma != expected || beta != expected) {
    throw DimensionError(std::string(op) + ": affine parameters " + shape_str(gamma) + "/" +
                         shape_str(beta) + " expected " + shape_str(expected));
  }
}

}  // namespace

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  if (x.value().rank() == 0 || x.value().numel() == 0) {
    throw DimensionError("softmax_rows: empty input");
  }
  const std::int64_t cols = x.shape().back();
  const std::int64_t rows = x.value().numel() / cols;
  Tensor<T> out(x.shape());
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* src = px + r * cols;
    T* dst = po + r * cols;
    T mx = src[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, src[c]);
    T total = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - mx);
      total += dst[c];
    }
    const T inv = T{1} / total;
    for (std::int64_t c = 0; c < cols; ++c) dst[c] *= inv;
  }
  return record<T>("softmax_rows", std::move(out), {x}, [rows, cols](Node<T>& self) {
    Tensor<T> g(self.value.shape());
    const T* y = self.value.ptr();
    const T* dy = self.grad.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::int64_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
      for (std::int64_t c = 0; c < cols; ++c)
        g[r * cols + c] = y[r * cols + c] * (dy[r * cols + c] - dot);
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  if (x.value().rank() < 3) {
    throw DimensionError("instance_norm expects [B, C, spatial...], got " + shape_str(x.shape()));
  }
  const std::int64_t channels = x.dim(1);
  check_affine(gamma.shape(), beta.shape(), channels, "instance_norm");
  const std::int64_t slices = x.dim(0) * channels;
  const std::int64_t len = x.value().numel() / slices;
  return normalize<T>("instance_norm", x, gamma, beta, eps, slices, len,
                      [channels](std::int64_t s, std::int64_t) { return s % channels; });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  if (x.value().rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::int64_t d = x.shape().back();
  check_affine(gamma.shape(), beta.shape(), d, "layer_norm");
  return normalize<T>("layer_norm", x, gamma, beta, eps, x.value().numel() / d, d,
                      [](std::int64_t, std::int64_t k) { return k; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  if (auto* trace = BranchTrace::current()) {
    const T* px = x.value().ptr();
    std::uint64_t word = 0;
    for (std::int64_t i = 0; i < x.value().numel(); ++i) {
      word = (word << 1) | (px[i] > 0 ? 1u : 0u);
      if (i % 64 == 63) trace->mix(std::exchange(word, 0));
    }
    trace->mix(word);
  }
  return pointwise<T>(
      "leaky_relu", x, [slope](T v) { return v > 0 ? v : slope * v; },
      [slope](T v) { return v > 0 ? T{1} : slope; });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  return pointwise<T>(
      "silu", x, [](T v) { return v * sigmoid(v); },
      [](T v) {
        const T s = sigmoid(v);
        return s * (T{1} + v * (T{1} - s));
      });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  constexpr T inv_sqrt_2pi = static_cast<T>(0.39894228040143267794);
  return pointwise<T>(
      "gelu", x, [](T v) { return T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2)); },
      [](T v) {
        return T{0.5} * (T{1} + std::erf(v * inv_sqrt2)) +
               v * inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
      });
}

#define USEMA_INSTANTIATE(T)                                                     \
  template Var<T> softmax_rows(const Var<T>&);                                   \
  template Var<T> instance_norm(const Var<T>&, const Var<T>&, const Var<T>&, T); \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);    \
  template Var<T> leaky_relu(const Var<T>&, T);                                  \
  template Var<T> silu(const Var<T>&);                                           \
  template Var<T> gelu(const Var<T>&);

USEMA_INSTANTIATE(float)
USEMA_INSTANTIATE(double)
#undef USEMA_INSTANTIATE

}  // namespace usema
