#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "usema/dataset.hpp"
#include "usema/tensor_io.hpp"

namespace usema {
namespace fs = std::filesystem;

std::int32_t Dataset::label_count() const {
  std::int32_t mx = 0;
  for (const auto& s : samples)
    for (auto v : s.labels.data) mx = std::max(mx, v);
  return mx + 1;
}

void Dataset::validate() const {
  if (samples.empty()) throw DataError("dataset is empty");
  const Shape& ref = samples.front().image.shape();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.image.shape() != ref) {
      throw DataError("sample " + std::to_string(i) + ": image " + shape_str(s.image.shape()) +
                      " differs from " + shape_str(ref));
    }
    if (s.labels.height != ref[1] || s.labels.width != ref[2]) {
      throw DataError("sample " + std::to_string(i) + ": mask does not match image extent");
    }
  }
}

namespace {

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::int64_t header_int(std::istream& in, const fs::path& path, const char* what) {
  const std::string tok = header_token(in);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + ": bad PGM " + what + " '" + tok + "'");
  }
}

Tensor<float> load_image(const fs::path& path) {
  if (path.extension() == ".pgm") {
    const auto g = read_pgm(path);
    Tensor<float> t({1, g.height, g.width});
    for (std::int64_t i = 0; i < g.size(); ++i) t[i] = static_cast<float>(g.data[static_cast<std::size_t>(i)] / 255.0);
    return t;
  }
  Tensor<float> t = load_tensor<float>(path);
  if (t.rank() == 2) return std::move(t).reshaped({1, t.dim(0), t.dim(1)});
  if (t.rank() != 3) throw DataError(path.string() + ": image tensor must be [H, W] or [C, H, W]");
  return t;
}

}  // namespace

Grid<std::uint8_t> read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (header_token(in) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  const std::int64_t w = header_int(in, path, "width");
  const std::int64_t h = header_int(in, path, "height");
  const std::int64_t maxval = header_int(in, path, "maxval");
  if (maxval > 255) throw DataError(path.string() + ": 16-bit PGM is not supported");
  Grid<std::uint8_t> g(h, w);
  in.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(g.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(g.data.size())) {
    throw DataError(path.string() + ": truncated pixel data");
  }
  return g;
}

void write_pgm(const fs::path& path, const Grid<std::uint8_t>& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ofstream index(dir / "index.txt");
  if (!index) throw DataError("cannot write " + (dir / "index.txt").string());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (s.image.rank() != 3 || s.image.dim(0) != 1) {
      throw DataError("save_dataset: PGM export needs single-channel images");
    }
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.pgm", i);
    Grid<std::uint8_t> img(s.image.dim(1), s.image.dim(2));
    for (std::int64_t k = 0; k < img.size(); ++k) {
      img.data[static_cast<std::size_t>(k)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(s.image[k], 0.0f, 1.0f) * 255.0f));
    }
    Grid<std::uint8_t> mask(s.labels.height, s.labels.width);
    for (std::size_t k = 0; k < mask.data.size(); ++k) {
      const auto v = s.labels.data[k];
      if (v < 0 || v > 255) throw DataError("save_dataset: label " + std::to_string(v) + " exceeds 8 bits");
      mask.data[k] = static_cast<std::uint8_t>(v);
    }
    write_pgm(dir / "images" / name, img);
    write_pgm(dir / "masks" / name, mask);
    index << "images/" << name << " masks/" << name << '\n';
  }
}

Dataset load_dataset(const fs::path& index_file) {
  std::ifstream in(index_file);
  if (!in) throw DataError("cannot open dataset index " + index_file.string());
  const fs::path root = index_file.parent_path();
  Dataset d;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string img, mask, extra;
    if (!(ls >> img)) continue;
    if (!(ls >> mask) || (ls >> extra)) {
      throw DataError(index_file.string() + ":" + std::to_string(lineno) +
                      ": expected 'image mask'");
    }
    Sample s{load_image(root / img), {}};
    const auto m = read_pgm(root / mask);
    s.labels = LabelGrid(m.height, m.width);
    for (std::size_t k = 0; k < m.data.size(); ++k) s.labels.data[k] = m.data[k];
    d.samples.push_back(std::move(s));
  }
  d.validate();
  return d;
}

}  // namespace usema
