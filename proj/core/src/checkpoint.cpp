#include "usema/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "usema/tensor_io.hpp"

namespace usema {
namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const UsemaNet<float>& net, const TrainConfig& config) {
  fs::create_directories(dir / "params");
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.txt").string());
  for (const auto& [name, var] : net.params().entries()) {
    const std::string file = "params/" + name + ".usem";
    save_tensor((dir / file).string(), var.value());
    manifest << name << '\t' << shape_str(var.shape()) << '\t' << dtype_name(DType::Real32) << '\t'
             << file << '\n';
  }
  std::ofstream cfg(dir / "config.txt");
  if (!cfg) throw DataError("cannot write " + (dir / "config.txt").string());
  cfg << config_text(config);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "config.txt")) {
    throw DataError("checkpoint has no config: " + (dir / "config.txt").string());
  }
  LoadedCheckpoint out;
  out.config = load_config(dir / "config.txt");
  out.net = std::make_unique<UsemaNet<float>>(out.config.model, out.config.seed);
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("checkpoint has no manifest: " + (dir / "manifest.txt").string());
  const auto& entries = out.net->params().entries();
  std::size_t i = 0;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape, dtype, file;
    if (!std::getline(ls, name, '\t') || !std::getline(ls, shape, '\t') ||
        !std::getline(ls, dtype, '\t') || !std::getline(ls, file)) {
      throw ManifestError("malformed manifest line: " + line);
    }
    if (i >= entries.size()) throw ManifestError("manifest lists extra parameter " + name);
    const auto& [expected, var] = entries[i++];
    if (name != expected) {
      throw ManifestError("manifest parameter " + name + " where the model expects " + expected);
    }
    if (shape != shape_str(var.shape())) {
      throw ManifestError(name + ": manifest shape " + shape + ", model shape " +
                          shape_str(var.shape()));
    }
    if (dtype != dtype_name(DType::Real32)) {
      throw ManifestError(name + ": manifest dtype " + dtype + ", expected real32");
    }
    const AnyTensor t = load_any_tensor((dir / file).string());
    const auto* f = std::get_if<Tensor<float>>(&t);
    if (!f) throw ManifestError(name + ": tensor file is not real32");
    if (f->shape() != var.shape()) {
      throw ManifestError(name + ": file shape " + shape_str(f->shape()) + " disagrees with manifest");
    }
    Var<float>(var).mutable_value() = *f;
  }
  if (i != entries.size()) {
    throw ManifestError("manifest is missing parameter " + entries[i].first);
  }
  return out;
}

}  // namespace usema
