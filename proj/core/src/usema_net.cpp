#include "usema/usema_net.hpp"

#include <string>

#include "usema/ops.hpp"

namespace usema {
namespace {

std::string str(std::int64_t v) { return std::to_string(v); }

}  // namespace

std::int64_t UsemaConfig::heads_at(std::int64_t stage) const {
  if (!heads.empty()) return heads[static_cast<std::size_t>(stage)];
  return std::max<std::int64_t>(1, channels(stage) / head_dim);
}

std::int64_t UsemaConfig::window_at(std::int64_t stage) const {
  if (windows.size() == 1) return windows.front();
  return windows[static_cast<std::size_t>(stage)];
}

void UsemaConfig::validate() const {
  if (stages < 0 || stages > 8) throw ConfigError("stages must be in 0..8, got " + str(stages));
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (classes < 2) throw ConfigError("classes must be >= 2, got " + str(classes));
  if (head_dim < 2) throw ConfigError("head_dim must be >= 2");
  if (!heads.empty() && static_cast<std::int64_t>(heads.size()) != stages + 1) {
    throw ConfigError("heads lists " + str(static_cast<std::int64_t>(heads.size())) +
                      " values, expected stages + 1 = " + str(stages + 1));
  }
  if (windows.empty() ||
      (windows.size() != 1 && static_cast<std::int64_t>(windows.size()) != stages)) {
    throw ConfigError("windows must list 1 or `stages` values");
  }
  for (auto w : windows) {
    if (w < 1) throw ConfigError("window widths must be >= 1");
  }
  if (bottleneck_window < 0) throw ConfigError("bottleneck_window must be >= 0");
  for (std::int64_t s = 0; s <= stages && stages > 0; ++s) {
    const std::int64_t c = channels(s), h = heads_at(s);
    if (h < 1 || c % h != 0) {
      throw ConfigError("stage " + str(s) + ": " + str(c) + " channels not divisible by " +
                        str(h) + " heads");
    }
  }
}

void UsemaConfig::validate_input(std::int64_t height, std::int64_t width) const {
  const std::int64_t f = std::int64_t{1} << stages;
  if (height % f != 0) {
    throw ConfigError("height " + str(height) + " not divisible by 2^stages = " + str(f));
  }
  if (width % f != 0) {
    throw ConfigError("width " + str(width) + " not divisible by 2^stages = " + str(f));
  }
}

template <typename T>
ResidualBlock<T>::ResidualBlock(ParamSet<T>& params, const std::string& prefix, std::int64_t in,
                                std::int64_t out, Rng& rng, bool instance_norm) {
  auto p = [&](const std::string& name, Tensor<T> init) {
    return params.add(prefix + "." + name, std::move(init));
  };
  conv1_ = p("conv1.weight", kaiming_uniform<T>(rng, {out, in, 3, 3}, in * 9));
  if (instance_norm) {
    norm1_g_ = p("norm1.gamma", Tensor<T>({out}, T{1}));
    norm1_b_ = p("norm1.beta", Tensor<T>({out}));
  }
  conv2_ = p("conv2.weight", kaiming_uniform<T>(rng, {out, out, 3, 3}, out * 9));
  if (instance_norm) {
    norm2_g_ = p("norm2.gamma", Tensor<T>({out}, T{1}));
    norm2_b_ = p("norm2.beta", Tensor<T>({out}));
  }
  if (in != out) skip_ = p("skip.weight", kaiming_uniform<T>(rng, {out, in, 1, 1}, in));
}

template <typename T>
Var<T> ResidualBlock<T>::forward(const Var<T>& x) const {
  auto norm = [](const Var<T>& v, const Var<T>& g, const Var<T>& b) {
    return g.defined() ? instance_norm(v, g, b) : v;
  };
  Var<T> y = leaky_relu(norm(conv2d(x, conv1_, Var<T>(), {1, 1, 1}), norm1_g_, norm1_b_));
  y = leaky_relu(norm(conv2d(y, conv2_, Var<T>(), {1, 1, 1}), norm2_g_, norm2_b_));
  return add(y, skip_.defined() ? conv2d(x, skip_, Var<T>()) : x);
}

template <typename T>
UsemaNet<T>::UsemaNet(const UsemaConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::int64_t S = config_.stages;
  if (S == 0) {
    head_w_ = params_.add("head.weight", kaiming_uniform<T>(rng, {config_.classes,
                                                                  config_.in_channels, 1, 1},
                                                            config_.in_channels));
    head_b_ = params_.add("head.bias", Tensor<T>({config_.classes}));
    return;
  }
  auto sema_config = [&](std::int64_t s, std::int64_t window) {
    SemaBlockConfig c;
    c.dim = config_.channels(s);
    c.heads = config_.heads_at(s);
    c.window = window;
    c.global_average = config_.global_average;
    return c;
  };
  const bool norm = config_.instance_norm;
  stem_ = ResidualBlock<T>(params_, "stem", config_.in_channels, config_.base_channels, rng, norm);
  for (std::int64_t s = 0; s < S; ++s) {
    const std::string pre = "enc." + str(s);
    const std::int64_t c = config_.channels(s);
    EncoderStage st;
    st.res0 = ResidualBlock<T>(params_, pre + ".res0", c, c, rng, norm);
    st.res1 = ResidualBlock<T>(params_, pre + ".res1", c, c, rng, norm);
    st.sema = SemaBlock<T>(params_, pre + ".sema", sema_config(s, config_.window_at(s)), rng);
    st.down_w =
        params_.add(pre + ".down.weight", kaiming_uniform<T>(rng, {2 * c, c, 3, 3}, c * 9));
    st.down_b = params_.add(pre + ".down.bias", Tensor<T>({2 * c}));
    encoder_.push_back(std::move(st));
  }
  const std::int64_t cb = config_.channels(S);
  bottleneck_res0_ = ResidualBlock<T>(params_, "bottleneck.res0", cb, cb, rng, norm);
  bottleneck_res1_ = ResidualBlock<T>(params_, "bottleneck.res1", cb, cb, rng, norm);
  // The width is fixed per call from the bottleneck token count.
  bottleneck_sema_ = std::make_unique<SemaBlock<T>>(params_, "bottleneck.sema",
                                                    sema_config(S, 1), rng);
  for (std::int64_t s = 0; s < S; ++s) {
    const std::string pre = "dec." + str(s);
    const std::int64_t c = config_.channels(s);
    DecoderStage st;
    st.up_w = params_.add(pre + ".up.weight", kaiming_uniform<T>(rng, {2 * c, c, 2, 2}, c * 4));
    st.up_b = params_.add(pre + ".up.bias", Tensor<T>({c}));
    st.res0 = ResidualBlock<T>(params_, pre + ".res0", 2 * c, c, rng, norm);
    st.res1 = ResidualBlock<T>(params_, pre + ".res1", c, c, rng, norm);
    if (s == 0 || config_.deep_supervision) {
      st.head_w = params_.add(pre + ".head.weight",
                              kaiming_uniform<T>(rng, {config_.classes, c, 1, 1}, c));
      st.head_b = params_.add(pre + ".head.bias", Tensor<T>({config_.classes}));
    }
    decoder_.push_back(std::move(st));
  }
}

template <typename T>
FeaturePyramid<T> UsemaNet<T>::encode(const Var<T>& image) const {
  if (image.value().rank() != 4 || image.dim(1) != config_.in_channels) {
    throw DimensionError("usema: expected [B, " + str(config_.in_channels) + ", H, W], got " +
                         shape_str(image.shape()));
  }
  config_.validate_input(image.dim(2), image.dim(3));
  if (config_.stages == 0) throw ConfigError("usema: a zero-stage network has no encoder");
  FeaturePyramid<T> pyramid;
  Var<T> x = stem_.forward(image);
  for (const auto& st : encoder_) {
    x = st.res1.forward(st.res0.forward(x));
    const std::int64_t h = x.dim(2), w = x.dim(3);
    x = tokens_to_image(st.sema.forward(image_to_tokens(x), h, w), h, w);
    pyramid.skips.push_back(x);
    x = conv2d(x, st.down_w, st.down_b, {2, 1, 1});
  }
  x = bottleneck_res1_.forward(bottleneck_res0_.forward(x));
  const std::int64_t h = x.dim(2), w = x.dim(3);
  pyramid.bottleneck = tokens_to_image(bottleneck(image_to_tokens(x), h, w), h, w);
  return pyramid;
}

template <typename T>
Var<T> UsemaNet<T>::bottleneck(const Var<T>& tokens, std::int64_t height,
                               std::int64_t width) const {
  const std::int64_t n = height * width;
  const std::int64_t w = config_.bottleneck_window > 0 ? config_.bottleneck_window : n;
  return bottleneck_sema_->forward(tokens, height, width, w);
}

template <typename T>
std::vector<Var<T>> UsemaNet<T>::decode(const FeaturePyramid<T>& pyramid) const {
  if (pyramid.skips.size() != decoder_.size()) {
    throw DimensionError("usema: pyramid has " + str(static_cast<std::int64_t>(pyramid.skips.size())) +
                         " skips, decoder expects " + str(static_cast<std::int64_t>(decoder_.size())));
  }
  std::vector<Var<T>> coarse_first;
  Var<T> x = pyramid.bottleneck;
  for (auto s = static_cast<std::int64_t>(decoder_.size()) - 1; s >= 0; --s) {
    const auto& st = decoder_[static_cast<std::size_t>(s)];
    const Var<T>& skip = pyramid.skips[static_cast<std::size_t>(s)];
    x = conv_transpose2d(x, st.up_w, st.up_b, 2, 0);
    if (x.shape() != skip.shape()) {
      throw DimensionError("usema: upsampled " + shape_str(x.shape()) + " vs skip " +
                           shape_str(skip.shape()));
    }
    x = st.res1.forward(st.res0.forward(concat_channels(x, skip)));
    if (st.head_w.defined()) coarse_first.push_back(conv2d(x, st.head_w, st.head_b));
  }
  return {coarse_first.rbegin(), coarse_first.rend()};
}

template <typename T>
std::vector<Var<T>> UsemaNet<T>::forward(const Var<T>& image) const {
  if (config_.stages == 0) {
    if (image.value().rank() != 4 || image.dim(1) != config_.in_channels) {
      throw DimensionError("usema: expected [B, " + str(config_.in_channels) + ", H, W], got " +
                           shape_str(image.shape()));
    }
    return {conv2d(image, head_w_, head_b_)};
  }
  return decode(encode(image));
}

template <typename T>
void UsemaNet<T>::capture_bottleneck(bool on) {
  if (bottleneck_sema_) bottleneck_sema_->capture_attention(on);
}

template <typename T>
const std::optional<std::pair<Tensor<T>, Tensor<T>>>& UsemaNet<T>::bottleneck_qk() const {
  static const std::optional<std::pair<Tensor<T>, Tensor<T>>> none;
  return bottleneck_sema_ ? bottleneck_sema_->captured_qk() : none;
}

std::int64_t param_count(const UsemaConfig& config) {
  return UsemaNet<float>(config, 0).params().scalar_count();
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class UsemaNet<float>;
template class UsemaNet<double>;

}  // namespace usema
