#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "usema/attention.hpp"
#include "usema/params.hpp"

namespace usema {

struct SemaBlockConfig {
  std::int64_t dim = 32;
  std::int64_t heads = 1;
  std::int64_t window = 16;
  // Adds the broadcast value mean to the window term. Off = window-only ablation.
  bool global_average = true;
  // Uses the dense full_attention path for the local term instead of windows.
  bool full_attention = false;
  std::int64_t ffn_expansion = 4;
  double rope_base = 10000.0;

  void validate() const;
};

// x + depthwise_conv3x3(x), x: [B, C, H, W], kernel: [C, 1, k, k] with odd k.
template <typename T>
Var<T> cpe(const Var<T>& x, const Var<T>& kernel);

// attn + depthwise_conv3x3(V) with V in token layout [B, H*W, d].
template <typename T>
Var<T> lepe(const Var<T>& attn, const Var<T>& v, std::int64_t height, std::int64_t width,
            const Var<T>& kernel);
// Square token grid inferred from n; ConfigError when n is not a perfect square.
template <typename T>
Var<T> lepe(const Var<T>& attn, const Var<T>& v, const Var<T>& kernel);

// Gated SEMA block on tokens [B, H*W, d]:
//   u = cpe1(x); z = LN(u); gate = silu(Wg z); val = dw(Wv z)
//   q, k, v = split(Wqkv val); attn = SEMA(rope(q), rope(k), v) + lepe(v)
//   out1 = u + cpe2(gate * Wo attn); out = out1 + FFN(LN(out1))
template <typename T>
class SemaBlock {
 public:
  SemaBlock() = default;
  SemaBlock(ParamSet<T>& params, const std::string& prefix, const SemaBlockConfig& config,
            Rng& rng);

  // `window` overrides the configured width for this call.
  Var<T> forward(const Var<T>& x, std::int64_t height, std::int64_t width,
                 std::optional<std::int64_t> window = std::nullopt) const;

  const SemaBlockConfig& config() const { return config_; }

  // Post-RoPE queries/keys of the last forward call, captured when enabled.
  void capture_attention(bool on) { capture_ = on; }
  const std::optional<std::pair<Tensor<T>, Tensor<T>>>& captured_qk() const { return captured_; }

 private:
  SemaBlockConfig config_;
  Var<T> cpe1_, norm1_g_, norm1_b_, gate_w_, gate_b_, value_w_, value_b_, value_dw_;
  Var<T> qkv_w_, qkv_b_, lepe_, out_w_, out_b_, cpe2_;
  Var<T> norm2_g_, norm2_b_, ffn1_w_, ffn1_b_, ffn2_w_, ffn2_b_;
  bool capture_ = false;
  mutable std::optional<std::pair<Tensor<T>, Tensor<T>>> captured_;
};

extern template class SemaBlock<float>;
extern template class SemaBlock<double>;

}  // namespace usema
