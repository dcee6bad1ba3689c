#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "usema/params.hpp"
#include "usema/sema_block.hpp"

namespace usema {

struct UsemaConfig {
  std::int64_t stages = 4;
  std::int64_t base_channels = 32;
  std::int64_t in_channels = 1;
  std::int64_t classes = 2;
  // Heads at a stage = channels / head_dim (at least 1) unless `heads` lists them.
  std::int64_t head_dim = 32;
  std::vector<std::int64_t> heads;
  // Window width per encoder stage; one value is broadcast to all stages.
  std::vector<std::int64_t> windows{16};
  // 0 selects w = n_b (full attention) in the bottleneck.
  std::int64_t bottleneck_window = 0;
  bool global_average = true;
  bool deep_supervision = true;
  // Instance norm in the residual blocks. Off removes the per-image channel
  // statistics, leaving attention as the only whole-image path.
  bool instance_norm = true;

  std::int64_t channels(std::int64_t stage) const { return base_channels << stage; }
  std::int64_t heads_at(std::int64_t stage) const;
  std::int64_t window_at(std::int64_t stage) const;
  void validate() const;
  // Throws ConfigError naming the dimension not divisible by 2^stages.
  void validate_input(std::int64_t height, std::int64_t width) const;
};

template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> skips;  // stage s: [B, C_s, H/2^s, W/2^s]
  Var<T> bottleneck;          // [B, C_S, H/2^S, W/2^S]
};

template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamSet<T>& params, const std::string& prefix, std::int64_t in,
                std::int64_t out, Rng& rng, bool instance_norm = true);
  Var<T> forward(const Var<T>& x) const;

 private:
  Var<T> conv1_, norm1_g_, norm1_b_, conv2_, norm2_g_, norm2_b_, skip_;
};

template <typename T>
class UsemaNet {
 public:
  UsemaNet(const UsemaConfig& config, std::uint64_t seed);

  // Logits per decoder scale, finest first; a single tensor without deep supervision.
  std::vector<Var<T>> forward(const Var<T>& image) const;
  FeaturePyramid<T> encode(const Var<T>& image) const;
  std::vector<Var<T>> decode(const FeaturePyramid<T>& pyramid) const;
  // The bottleneck SEMA block alone on tokens [B, n_b, C_S].
  Var<T> bottleneck(const Var<T>& tokens, std::int64_t height, std::int64_t width) const;

  const UsemaConfig& config() const { return config_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  // Records the bottleneck's post-RoPE Q/K on every forward.
  void capture_bottleneck(bool on);
  const std::optional<std::pair<Tensor<T>, Tensor<T>>>& bottleneck_qk() const;

 private:
  struct EncoderStage {
    ResidualBlock<T> res0, res1;
    SemaBlock<T> sema;
    Var<T> down_w, down_b;
  };
  struct DecoderStage {
    Var<T> up_w, up_b;
    ResidualBlock<T> res0, res1;
    Var<T> head_w, head_b;
  };

  UsemaConfig config_;
  ParamSet<T> params_;
  ResidualBlock<T> stem_;
  std::vector<EncoderStage> encoder_;
  ResidualBlock<T> bottleneck_res0_, bottleneck_res1_;
  std::unique_ptr<SemaBlock<T>> bottleneck_sema_;
  std::vector<DecoderStage> decoder_;  // index = skip level
  Var<T> head_w_, head_b_;             // stages == 0 only
};

// Exact scalar parameter count of the network `config` builds.
std::int64_t param_count(const UsemaConfig& config);

extern template class ResidualBlock<float>;
extern template class ResidualBlock<double>;
extern template class UsemaNet<float>;
extern template class UsemaNet<double>;

}  // namespace usema
