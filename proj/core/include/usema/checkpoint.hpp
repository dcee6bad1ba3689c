#pragma once

#include <filesystem>
#include <memory>

#include "usema/config.hpp"
#include "usema/usema_net.hpp"

namespace usema {

// Directory of tensor files (params/<name>.usem), manifest.txt with
// "name<TAB>shape<TAB>dtype<TAB>file" lines, and config.txt echoing the config.
void save_checkpoint(const std::filesystem::path& dir, const UsemaNet<float>& net,
                     const TrainConfig& config);

struct LoadedCheckpoint {
  TrainConfig config;
  std::unique_ptr<UsemaNet<float>> net;
};

// Rebuilds the network from config.txt and fills it from the tensor files.
// ManifestError when names, shapes or dtypes disagree; DataError for unreadable files.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace usema
