#include "usema/sema_block.hpp"

#include <cmath>

#include "usema/ops.hpp"

namespace usema {
namespace {

template <typename T>
Var<T> depthwise(const Var<T>& image, const Var<T>& kernel) {
  const auto& ks = kernel.shape();
  if (ks.size() != 4 || ks[1] != 1 || ks[2] != ks[3] || ks[2] % 2 == 0) {
    throw DimensionError("depthwise kernel must be [C, 1, k, k] with odd k, got " + shape_str(ks));
  }
  return conv2d(image, kernel, Var<T>(), {1, ks[2] / 2, image.dim(1)});
}

template <typename T>
Var<T> depthwise_tokens(const Var<T>& tokens, std::int64_t height, std::int64_t width,
                        const Var<T>& kernel) {
  return image_to_tokens(depthwise(tokens_to_image(tokens, height, width), kernel));
}

}  // namespace

void SemaBlockConfig::validate() const {
  if (dim < 1 || heads < 1 || dim % heads != 0) {
    throw ConfigError("sema block: dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if ((dim / heads) % 2 != 0) {
    throw ConfigError("sema block: head dim " + std::to_string(dim / heads) +
                      " must be even for rotary embedding");
  }
  if (window < 1) throw ConfigError("sema block: window must be >= 1");
  if (ffn_expansion < 1) throw ConfigError("sema block: ffn expansion must be >= 1");
}

template <typename T>
Var<T> cpe(const Var<T>& x, const Var<T>& kernel) {
  return add(x, depthwise(x, kernel));
}

template <typename T>
Var<T> lepe(const Var<T>& attn, const Var<T>& v, std::int64_t height, std::int64_t width,
            const Var<T>& kernel) {
  return add(attn, depthwise_tokens(v, height, width, kernel));
}

template <typename T>
Var<T> lepe(const Var<T>& attn, const Var<T>& v, const Var<T>& kernel) {
  const std::int64_t n = v.dim(1);
  const auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) {
    throw ConfigError("lepe: token count " + std::to_string(n) +
                      " is not square; pass the spatial dims explicitly");
  }
  return lepe(attn, v, side, side, kernel);
}

template <typename T>
SemaBlock<T>::SemaBlock(ParamSet<T>& params, const std::string& prefix,
                        const SemaBlockConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::int64_t d = config.dim;
  const std::int64_t hidden = d * config.ffn_expansion;
  auto p = [&](const std::string& name, Tensor<T> init) {
    return params.add(prefix + "." + name, std::move(init));
  };
  auto ones = [](std::int64_t n) { return Tensor<T>({n}, T{1}); };
  auto zeros = [](std::int64_t n) { return Tensor<T>({n}); };
  cpe1_ = p("cpe1.weight", Tensor<T>({d, 1, 3, 3}));
  norm1_g_ = p("norm1.gamma", ones(d));
  norm1_b_ = p("norm1.beta", zeros(d));
  gate_w_ = p("gate.weight", kaiming_uniform<T>(rng, {d, d}, d));
  gate_b_ = p("gate.bias", zeros(d));
  value_w_ = p("value.weight", kaiming_uniform<T>(rng, {d, d}, d));
  value_b_ = p("value.bias", zeros(d));
  value_dw_ = p("value_dw.weight", kaiming_uniform<T>(rng, {d, 1, 3, 3}, 9));
  qkv_w_ = p("qkv.weight", kaiming_uniform<T>(rng, {d, 3 * d}, d));
  qkv_b_ = p("qkv.bias", zeros(3 * d));
  lepe_ = p("lepe.weight", Tensor<T>({d, 1, 3, 3}));
  out_w_ = p("out.weight", kaiming_uniform<T>(rng, {d, d}, d));
  out_b_ = p("out.bias", zeros(d));
  cpe2_ = p("cpe2.weight", Tensor<T>({d, 1, 3, 3}));
  norm2_g_ = p("norm2.gamma", ones(d));
  norm2_b_ = p("norm2.beta", zeros(d));
  ffn1_w_ = p("ffn1.weight", kaiming_uniform<T>(rng, {d, hidden}, d));
  ffn1_b_ = p("ffn1.bias", zeros(hidden));
  ffn2_w_ = p("ffn2.weight", kaiming_uniform<T>(rng, {hidden, d}, hidden));
  ffn2_b_ = p("ffn2.bias", zeros(d));
}

template <typename T>
Var<T> SemaBlock<T>::forward(const Var<T>& x, std::int64_t height, std::int64_t width,
                             std::optional<std::int64_t> window) const {
  if (x.value().rank() != 3 || x.dim(2) != config_.dim) {
    throw DimensionError("sema block expects [B, H*W, " + std::to_string(config_.dim) +
                         "], got " + shape_str(x.shape()));
  }
  if (x.dim(1) != height * width) {
    throw DimensionError("sema block: token count " + std::to_string(x.dim(1)) + " != " +
                         std::to_string(height) + "*" + std::to_string(width));
  }
  const std::int64_t d = config_.dim;
  const std::int64_t heads = config_.heads;
  const T scale = attention::default_scale<T>(d / heads);
  const attention::RopeParams rope{config_.rope_base};

  const Var<T> u = add(x, depthwise_tokens(x, height, width, cpe1_));
  const Var<T> z = layer_norm(u, norm1_g_, norm1_b_);
  const Var<T> gate = silu(linear(z, gate_w_, gate_b_));
  const Var<T> val = depthwise_tokens(linear(z, value_w_, value_b_), height, width, value_dw_);

  const Var<T> qkv = linear(val, qkv_w_, qkv_b_);
  const Var<T> q = attention::rope_apply(slice_last(qkv, 0, d), heads, rope);
  const Var<T> k = attention::rope_apply(slice_last(qkv, d, d), heads, rope);
  const Var<T> v = slice_last(qkv, 2 * d, d);
  if (capture_) captured_.emplace(q.value(), k.value());

  Var<T> attn = config_.full_attention
                    ? attention::full_attention(q, k, v, heads, scale)
                    : attention::window_attention(q, k, v, heads, window.value_or(config_.window), scale);
  if (config_.global_average) attn = add(attn, attention::global_average(v));
  attn = lepe(attn, v, height, width, lepe_);

  const Var<T> mixed = mul(gate, linear(attn, out_w_, out_b_));
  const Var<T> out1 = add(u, add(mixed, depthwise_tokens(mixed, height, width, cpe2_)));
  const Var<T> hidden = gelu(linear(layer_norm(out1, norm2_g_, norm2_b_), ffn1_w_, ffn1_b_));
  return add(out1, linear(hidden, ffn2_w_, ffn2_b_));
}

template class SemaBlock<float>;
template class SemaBlock<double>;
template Var<float> cpe(const Var<float>&, const Var<float>&);
template Var<double> cpe(const Var<double>&, const Var<double>&);
template Var<float> lepe(const Var<float>&, const Var<float>&, std::int64_t, std::int64_t,
                         const Var<float>&);
template Var<double> lepe(const Var<double>&, const Var<double>&, std::int64_t, std::int64_t,
                          const Var<double>&);
template Var<float> lepe(const Var<float>&, const Var<float>&, const Var<float>&);
template Var<double> lepe(const Var<double>&, const Var<double>&, const Var<double>&);

}  // namespace usema
