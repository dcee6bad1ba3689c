#pragma once

#include <cstdint>

#include "usema/mamba.hpp"
#include "usema/tensor.hpp"

// Direct-formula reference implementations, written independently of the
// library kernels (plain loops, no gemm, no tape).
namespace usema::oracle {

Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b);

// softmax over each row of `logits` [m x n] entries flagged in `mask` (1 = keep),
// others treated as -inf. Each row must keep at least one entry.
Tensor<double> masked_softmax(const Tensor<double>& logits, const Tensor<double>& mask);

// softmax(scale * Q K^T masked to J(m)) V with J(m) = block of width w containing m.
Tensor<double> masked_window_attention(const Tensor<double>& q, const Tensor<double>& k,
                                       const Tensor<double>& v, std::int64_t w, double scale);

Tensor<double> column_mean_broadcast(const Tensor<double>& v);

// Direct nested-loop cross-correlation, [B, C, H, W] * [O, C/g, kh, kw].
Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& kernel, std::int64_t stride,
                      std::int64_t pad, std::int64_t groups);

// Step-by-step recurrence with explicit loops over the d x d state.
Tensor<double> mamba_scan(const Tensor<double>& x, const mamba::Params& params);

}  // namespace usema::oracle
