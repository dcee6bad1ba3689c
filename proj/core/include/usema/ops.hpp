#pragma once

#include <cstdint>
#include <vector>

#include "usema/autodiff.hpp"

// Differentiable tensor operations. Every function records itself on the tape
// when an operand requires grad; otherwise it is a plain evaluation.
namespace usema {

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}
template <typename T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

// Elementwise, identical shapes.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);

// [m x k] x [k x p] -> [m x p].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// x [..., in] * w [in x out] + bias [out]; bias may be undefined.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

// Scalar (shape {1}) reductions.
template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);
// sum(x * weights) for a constant weight tensor of x's shape.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);
// [B, C, H, W] -> [B, H*W, C].
template <typename T>
Var<T> image_to_tokens(const Var<T>& x);
// [B, H*W, C] -> [B, C, H, W].
template <typename T>
Var<T> tokens_to_image(const Var<T>& x, std::int64_t height, std::int64_t width);
// Concatenation along axis 1 of tensors that agree on every other axis.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
// Columns [offset, offset + width) of the last axis.
template <typename T>
Var<T> slice_last(const Var<T>& x, std::int64_t offset, std::int64_t width);

// Softmax over the last axis with per-row max subtraction.
template <typename T>
Var<T> softmax_rows(const Var<T>& x);

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;
};

// Cross-correlation. input [B, C, H, W], kernel [O, C/groups, kh, kw], bias [O] or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
              Conv2dOptions options = {});

// Adjoint of conv2d. input [B, Cin, H, W], kernel [Cin, Cout, kh, kw], bias [Cout] or
// undefined. Output extent (H - 1) * stride - 2 * padding + kh.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
                        std::int64_t stride = 1, std::int64_t padding = 0);

inline constexpr double kNormEps = 1e-5;

// Normalises each (sample, channel) slice of x [B, C, ...] over its trailing axes.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     T eps = static_cast<T>(kNormEps));

// Normalises over the last axis; gamma/beta have the last axis' extent.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  T eps = static_cast<T>(kNormEps));

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope = static_cast<T>(0.01));
template <typename T>
Var<T> silu(const Var<T>& x);
// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

}  // namespace usema
