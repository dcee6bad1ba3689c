#include <string>

#include "gemm.hpp"
#include "usema/ops.hpp"

namespace usema {
namespace {

template <typename T>
bool needs(const Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

template <typename T>
Node<T>& parent(Node<T>& n, std::size_t i) {
  return *n.parents[i];
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return record<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    if (needs(self, 0)) parent(self, 0).accumulate(self.grad);
    if (needs(self, 1)) parent(self, 1).accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return record<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    if (needs(self, 0)) parent(self, 0).accumulate(self.grad);
    if (needs(self, 1)) {
      Tensor<T> g = self.grad;
      for (auto& v : g.data()) v = -v;
      parent(self, 1).accumulate(std::move(g));
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
  return record<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!needs(self, k)) continue;
      const Tensor<T>& other = parent(self, 1 - k).value;
      Tensor<T> d(g.shape());
      for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = g[i] * other[i];
      parent(self, k).accumulate(std::move(d));
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return record<T>("scale", std::move(out), {a}, [factor](Node<T>& self) {
    Tensor<T> g = self.grad;
    for (auto& v : g.data()) v *= factor;
    parent(self, 0).accumulate(std::move(g));
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int m = static_cast<int>(a.dim(0));
  const int k = static_cast<int>(a.dim(1));
  const int p = static_cast<int>(b.dim(1));
  Tensor<T> out({m, p});
  detail::gemm(false, false, m, p, k, T{1}, a.value().ptr(), k, b.value().ptr(), p, T{0},
               out.ptr(), p);
  return record<T>("matmul", std::move(out), {a, b}, [m, k, p](Node<T>& self) {
    const T* g = self.grad.ptr();
    if (needs(self, 0)) {
      Tensor<T> da({m, k});
      detail::gemm(false, true, m, k, p, T{1}, g, p, parent(self, 1).value.ptr(), p, T{0},
                   da.ptr(), k);
      parent(self, 0).accumulate(std::move(da));
    }
    if (needs(self, 1)) {
      Tensor<T> db({k, p});
      detail::gemm(true, false, k, p, m, T{1}, parent(self, 0).value.ptr(), k, g, p, T{0},
                   db.ptr(), p);
      parent(self, 1).accumulate(std::move(db));
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const auto& xs = x.shape();
  if (xs.empty() || w.value().rank() != 2 || xs.back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.value().rank() != 1 || bias.dim(0) != w.dim(1))) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " for weight " +
                         shape_str(w.shape()));
  }
  const int in = static_cast<int>(w.dim(0));
  const int outf = static_cast<int>(w.dim(1));
  const int rows = static_cast<int>(x.value().numel() / in);
  Shape out_shape = xs;
  out_shape.back() = outf;
  Tensor<T> out(out_shape);
  if (has_bias) {
    const T* pb = bias.value().ptr();
    T* po = out.ptr();
    for (int r = 0; r < rows; ++r) std::copy(pb, pb + outf, po + static_cast<std::int64_t>(r) * outf);
  }
  detail::gemm(false, false, rows, outf, in, T{1}, x.value().ptr(), in, w.value().ptr(), outf,
               has_bias ? T{1} : T{0}, out.ptr(), outf);
  std::vector<Var<T>> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return record<T>("linear", std::move(out), std::move(parents),
                   [rows, in, outf, has_bias](Node<T>& self) {
                     const T* g = self.grad.ptr();
                     if (needs(self, 0)) {
                       Tensor<T> dx(parent(self, 0).value.shape());
                       detail::gemm(false, true, rows, in, outf, T{1}, g, outf,
                                    parent(self, 1).value.ptr(), outf, T{0}, dx.ptr(), in);
                       parent(self, 0).accumulate(std::move(dx));
                     }
                     if (needs(self, 1)) {
                       Tensor<T>& dw = parent(self, 1).grad_buffer();
                       detail::gemm(true, false, in, outf, rows, T{1},
                                    parent(self, 0).value.ptr(), in, g, outf, T{1}, dw.ptr(),
                                    outf);
                     }
                     if (has_bias && needs(self, 2)) {
                       Tensor<T>& db = parent(self, 2).grad_buffer();
                       T* pdb = db.ptr();
                       for (int r = 0; r < rows; ++r) {
                         const T* gr = g + static_cast<std::int64_t>(r) * outf;
                         for (int o = 0; o < outf; ++o) pdb[o] += gr[o];
                       }
                     }
                   });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (T v : x.value().data()) total += v;
  return record<T>("sum", Tensor<T>({1}, total), {x}, [](Node<T>& self) {
    parent(self, 0).accumulate(Tensor<T>(parent(self, 0).value.shape(), self.grad[0]));
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().numel()));
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require_same_shape(x.shape(), weights.shape(), "weighted_sum");
  T total = 0;
  for (std::int64_t i = 0; i < weights.numel(); ++i) total += x.value()[i] * weights[i];
  return record<T>("weighted_sum", Tensor<T>({1}, total), {x}, [weights](Node<T>& self) {
    Tensor<T> g = weights;
    for (auto& v : g.data()) v *= self.grad[0];
    parent(self, 0).accumulate(std::move(g));
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  return record<T>("reshape", x.value().reshaped(std::move(shape)), {x}, [](Node<T>& self) {
    parent(self, 0).accumulate(self.grad.reshaped(parent(self, 0).value.shape()));
  });
}

namespace {

// [B, R, C] -> [B, C, R] on raw buffers.
template <typename T>
void transpose_inner(const T* src, T* dst, std::int64_t batch, std::int64_t rows,
                     std::int64_t cols) {
  for (std::int64_t b = 0; b < batch; ++b) {
    const T* s = src + b * rows * cols;
    T* d = dst + b * rows * cols;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) d[c * rows + r] = s[r * cols + c];
  }
}

}  // namespace

template <typename T>
Var<T> image_to_tokens(const Var<T>& x) {
  if (x.value().rank() != 4) {
    throw DimensionError("image_to_tokens expects [B, C, H, W], got " + shape_str(x.shape()));
  }
  const auto b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({b, hw, c});
  transpose_inner(x.value().ptr(), out.ptr(), b, c, hw);
  return record<T>("image_to_tokens", std::move(out), {x}, [b, c, hw](Node<T>& self) {
    Tensor<T> g(parent(self, 0).value.shape());
    transpose_inner(self.grad.ptr(), g.ptr(), b, hw, c);
    parent(self, 0).accumulate(std::move(g));
  });
}

template <typename T>
Var<T> tokens_to_image(const Var<T>& x, std::int64_t height, std::int64_t width) {
  if (x.value().rank() != 3 || x.dim(1) != height * width) {
    throw DimensionError("tokens_to_image: " + shape_str(x.shape()) + " is not [B, " +
                         std::to_string(height) + "*" + std::to_string(width) + ", C]");
  }
  const auto b = x.dim(0), hw = x.dim(1), c = x.dim(2);
  Tensor<T> out({b, c, height, width});
  transpose_inner(x.value().ptr(), out.ptr(), b, hw, c);
  return record<T>("tokens_to_image", std::move(out), {x}, [b, c, hw](Node<T>& self) {
    Tensor<T> g(parent(self, 0).value.shape());
    transpose_inner(self.grad.ptr(), g.ptr(), b, c, hw);
    parent(self, 0).accumulate(std::move(g));
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool ok = sa.size() >= 2 && sa.size() == sb.size() && sa[0] == sb[0];
  for (std::size_t i = 2; ok && i < sa.size(); ++i) ok = sa[i] == sb[i];
  if (!ok) {
    throw DimensionError("concat_channels: incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  const std::int64_t batch = sa[0];
  const std::int64_t block_a = a.value().numel() / batch;
  const std::int64_t block_b = b.value().numel() / batch;
  Shape out_shape = sa;
  out_shape[1] += sb[1];
  Tensor<T> out(out_shape);
  for (std::int64_t n = 0; n < batch; ++n) {
    std::copy_n(a.value().ptr() + n * block_a, block_a, out.ptr() + n * (block_a + block_b));
    std::copy_n(b.value().ptr() + n * block_b, block_b,
                out.ptr() + n * (block_a + block_b) + block_a);
  }
  return record<T>("concat_channels", std::move(out), {a, b},
                   [batch, block_a, block_b](Node<T>& self) {
                     const T* g = self.grad.ptr();
                     if (needs(self, 0)) {
                       Tensor<T> da(parent(self, 0).value.shape());
                       for (std::int64_t n = 0; n < batch; ++n)
                         std::copy_n(g + n * (block_a + block_b), block_a, da.ptr() + n * block_a);
                       parent(self, 0).accumulate(std::move(da));
                     }
                     if (needs(self, 1)) {
                       Tensor<T> db(parent(self, 1).value.shape());
                       for (std::int64_t n = 0; n < batch; ++n)
                         std::copy_n(g + n * (block_a + block_b) + block_a, block_b,
                                     db.ptr() + n * block_b);
                       parent(self, 1).accumulate(std::move(db));
                     }
                   });
}

template <typename T>
Var<T> slice_last(const Var<T>& x, std::int64_t offset, std::int64_t width) {
  const auto& xs = x.shape();
  if (xs.empty() || offset < 0 || width <= 0 || offset + width > xs.back()) {
    throw DimensionError("slice_last: columns [" + std::to_string(offset) + ", " +
                         std::to_string(offset + width) + ") out of range for " + shape_str(xs));
  }
  const std::int64_t full = xs.back();
  const std::int64_t rows = x.value().numel() / full;
  Shape out_shape = xs;
  out_shape.back() = width;
  Tensor<T> out(out_shape);
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy_n(x.value().ptr() + r * full + offset, width, out.ptr() + r * width);
  return record<T>("slice_last", std::move(out), {x},
                   [rows, full, offset, width](Node<T>& self) {
                     Tensor<T>& g = parent(self, 0).grad_buffer();
                     for (std::int64_t r = 0; r < rows; ++r) {
                       const T* src = self.grad.ptr() + r * width;
                       T* dst = g.ptr() + r * full + offset;
                       for (std::int64_t c = 0; c < width; ++c) dst[c] += src[c];
                     }
                   });
}

#define USEMA_INSTANTIATE(T)                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                  \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                  \
  template Var<T> scale(const Var<T>&, T);                                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                               \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> sum(const Var<T>&);                                                 \
  template Var<T> mean(const Var<T>&);                                                \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);                      \
  template Var<T> reshape(const Var<T>&, Shape);                                      \
  template Var<T> image_to_tokens(const Var<T>&);                                     \
  template Var<T> tokens_to_image(const Var<T>&, std::int64_t, std::int64_t);         \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                      \
  template Var<T> slice_last(const Var<T>&, std::int64_t, std::int64_t);

USEMA_INSTANTIATE(float)
USEMA_INSTANTIATE(double)
#undef USEMA_INSTANTIATE

}  // namespace usema
