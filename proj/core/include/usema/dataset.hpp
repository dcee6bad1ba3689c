#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "usema/grid.hpp"
#include "usema/tensor.hpp"

namespace usema {

struct Sample {
  Tensor<float> image;  // [C, H, W], values in [0, 1]
  LabelGrid labels;     // class or instance ids, 0 = background
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  // Largest label + 1 over all samples.
  std::int32_t label_count() const;
  // Checks every sample has the shape of the first. Throws DataError.
  void validate() const;
};

enum class SynthKind { Shapes, GlobalContext };

SynthKind parse_synth_kind(const std::string& name);
const char* synth_kind_name(SynthKind kind);

struct SynthOptions {
  SynthKind kind = SynthKind::Shapes;
  std::uint64_t seed = 0;
  std::int64_t count = 16;
  std::int64_t size = 64;
};

// "shapes": ellipses (class 1) and rectangles (class 2) on noise, non-overlapping.
// "global-context": identical checkerboard squares on a tiled background; squares
// are class 1 when the whole-image mean intensity is below 1/2 and class 2 otherwise.
// Intensities are quantised to 8 bits so PGM round-trips are exact.
Dataset synth_dataset(const SynthOptions& options);

// PGM (P5, maxval <= 255) as 8-bit grids.
Grid<std::uint8_t> read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Grid<std::uint8_t>& image);

// Directory layout: index.txt with one "image mask" pair per line (paths
// relative to the index file), images/NNNN.pgm, masks/NNNN.pgm.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
// Images may be PGM or tensor files ([H, W] or [C, H, W]); masks are PGM.
Dataset load_dataset(const std::filesystem::path& index_file);

}  // namespace usema
