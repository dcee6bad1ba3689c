#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "usema/optim.hpp"
#include "usema/usema_net.hpp"

namespace usema {

struct TrainConfig {
  UsemaConfig model;
  AdamWOptions optim;
  std::int64_t epochs = 300;
  std::int64_t batch_size = 2;
  std::int64_t t_max = 100;
  double eta_min = 0.0;
  std::uint64_t seed = 0;
  // Stop once validation DSC reaches this value; 0 disables.
  double target_val_dsc = 0.0;
  double nsd_tau = 1.0;

  void validate() const;
};

// Plain-text "key = value" lines; '#' starts a comment. Unknown keys,
// malformed values and a missing `classes` key raise ConfigError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
// Every key with its value, parseable by parse_config.
std::string config_text(const TrainConfig& config);

}  // namespace usema
