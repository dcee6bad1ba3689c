#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "usema/autodiff.hpp"

// Softmax attention, block-window attention, the broadcast value mean and their
// sum (SEMA), plus rotary position embedding.
//
// Positions are 1-based in index-set arithmetic (J(m) for m = 1..n) and 0-based
// in tensor rows. Windows are contiguous blocks of the flattened token sequence.
namespace usema::attention {

struct WindowSpec {
  std::int64_t width = 16;   // w >= 1
  std::int64_t length = 1;   // n >= 1
};

// Inclusive 1-based range [first, last].
struct IndexRange {
  std::int64_t first = 1;
  std::int64_t last = 1;
  std::int64_t size() const { return last - first + 1; }
  bool contains(std::int64_t m) const { return first <= m && m <= last; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

// J(m) = {M w + 1, ..., (M + 1) w} with M = floor((m - 1) / w), clamped to n.
IndexRange window_index_set(std::int64_t m, const WindowSpec& spec);

template <typename T>
struct AttentionInputs {
  Tensor<T> q, k, v;  // [n x d] each

  // Q = x W_Q + b_Q etc., with W: [d x d] and row-wise biases b: [n x d].
  static AttentionInputs project(const Tensor<T>& x, const Tensor<T>& w_q, const Tensor<T>& w_k,
                                 const Tensor<T>& w_v, const Tensor<T>& b_q,
                                 const Tensor<T>& b_k, const Tensor<T>& b_v);
  void validate() const;
  std::int64_t length() const { return q.dim(0); }
  std::int64_t dim() const { return q.dim(1); }
};

struct RopeParams {
  double base = 10000.0;
};

template <typename T>
T default_scale(std::int64_t head_dim) {
  return static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
}

// Single-head evaluation on [n x d] inputs. `scale` multiplies the logits and
// defaults to 1/sqrt(d); scale = 1 is the unscaled softmax(QK^T)V.
template <typename T>
Tensor<T> full_attention(const AttentionInputs<T>& in, std::optional<T> scale = std::nullopt);
template <typename T>
Tensor<T> window_attention(const AttentionInputs<T>& in, std::int64_t window,
                           std::optional<T> scale = std::nullopt);
// Every row = (1/n) sum_j v_j.
template <typename T>
Tensor<T> global_average(const Tensor<T>& v);
template <typename T>
Tensor<T> sema_attention(const AttentionInputs<T>& in, std::int64_t window,
                         std::optional<T> scale = std::nullopt);
// Dense [n x n] window softmax weights (zero outside each J(m)).
template <typename T>
Tensor<T> window_weights(const AttentionInputs<T>& in, std::int64_t window,
                         std::optional<T> scale = std::nullopt);
// Row m (0-based position) rotated pairwise by m * base^(-2i/d).
template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, const RopeParams& params = {});

// Differentiable batched multi-head forms. q, k, v: [B, n, d]; head h owns
// columns [h * d/heads, (h + 1) * d/heads).
template <typename T>
Var<T> window_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                        std::int64_t window, T scale);
template <typename T>
Var<T> full_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                      T scale);
// Per-column mean over tokens, broadcast to every token. Per-head by construction.
template <typename T>
Var<T> global_average(const Var<T>& v);
template <typename T>
Var<T> sema_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                      std::int64_t window, T scale);
template <typename T>
Var<T> rope_apply(const Var<T>& x, std::int64_t heads, const RopeParams& params = {});

}  // namespace usema::attention
