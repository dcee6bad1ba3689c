#include <algorithm>
#include <cmath>

#include "usema/dataset.hpp"
#include "usema/rng.hpp"

namespace usema {
namespace {

float quantise(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::round(c * 255.0) / 255.0);
}

struct Box {
  std::int64_t r0, c0, r1, c1;  // inclusive
};

bool overlaps(const Grid<std::uint8_t>& taken, const Box& b, std::int64_t margin) {
  for (std::int64_t r = std::max<std::int64_t>(0, b.r0 - margin);
       r <= std::min(taken.height - 1, b.r1 + margin); ++r)
    for (std::int64_t c = std::max<std::int64_t>(0, b.c0 - margin);
         c <= std::min(taken.width - 1, b.c1 + margin); ++c)
      if (taken(r, c)) return true;
  return false;
}

// Shape pixels within its bounding box; ellipse when `round`.
template <typename F>
void for_shape(const Box& b, bool round, F f) {
  const double cy = 0.5 * double(b.r0 + b.r1), cx = 0.5 * double(b.c0 + b.c1);
  const double ry = 0.5 * double(b.r1 - b.r0 + 1), rx = 0.5 * double(b.c1 - b.c0 + 1);
  for (std::int64_t r = b.r0; r <= b.r1; ++r)
    for (std::int64_t c = b.c0; c <= b.c1; ++c) {
      if (round) {
        const double dy = (double(r) - cy) / ry, dx = (double(c) - cx) / rx;
        if (dy * dy + dx * dx > 1.0) continue;
      }
      f(r, c);
    }
}

// Up to `target` non-overlapping boxes with side lengths in [lo, hi].
std::vector<Box> place_boxes(Rng& rng, std::int64_t size, std::int64_t target, std::int64_t lo,
                             std::int64_t hi, bool square) {
  Grid<std::uint8_t> taken(size, size);
  std::vector<Box> boxes;
  for (int attempt = 0; attempt < 200 && static_cast<std::int64_t>(boxes.size()) < target;
       ++attempt) {
    const auto h = lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    const auto w = square ? h : lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    const auto r0 = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(size - h - 1)));
    const auto c0 = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(size - w - 1)));
    const Box b{r0, c0, r0 + h - 1, c0 + w - 1};
    if (overlaps(taken, b, 2)) continue;
    for (std::int64_t r = b.r0; r <= b.r1; ++r)
      for (std::int64_t c = b.c0; c <= b.c1; ++c) taken(r, c) = 1;
    boxes.push_back(b);
  }
  return boxes;
}

Sample shapes_sample(Rng& rng, std::int64_t size) {
  Sample s{Tensor<float>({1, size, size}), LabelGrid(size, size)};
  std::vector<double> img(static_cast<std::size_t>(size * size), 0.15);
  const auto target = 2 + static_cast<std::int64_t>(rng.below(3));
  const auto boxes = place_boxes(rng, size, target, size / 8, size / 3, false);
  for (const auto& b : boxes) {
    const bool ellipse = rng.below(2) == 0;
    const double level = ellipse ? rng.uniform(0.7, 0.9) : rng.uniform(0.45, 0.6);
    const std::int32_t cls = ellipse ? 1 : 2;
    for_shape(b, ellipse, [&](std::int64_t r, std::int64_t c) {
      img[static_cast<std::size_t>(r * size + c)] = level;
      s.labels(r, c) = cls;
    });
  }
  for (std::size_t i = 0; i < img.size(); ++i) s.image[static_cast<std::int64_t>(i)] = quantise(img[i] + rng.normal(0.0, 0.04));
  return s;
}

Sample global_context_sample(Rng& rng, std::int64_t size) {
  constexpr std::int64_t kTile = 8;
  const std::int64_t tiles = size / kTile;
  const bool bright = rng.below(2) == 1;
  const double spread = rng.uniform(0.1, 0.3);
  std::vector<double> tile(static_cast<std::size_t>(tiles * tiles));
  double mean = 0;
  for (auto& t : tile) {
    t = rng.uniform(-1.0, 1.0);
    mean += t;
  }
  mean /= double(tile.size());
  const double shift = bright ? 0.06 : -0.06;
  for (auto& t : tile) t = 0.5 + spread * (t - mean) + shift;

  Sample s{Tensor<float>({1, size, size}), LabelGrid(size, size)};
  std::vector<double> img(static_cast<std::size_t>(size * size));
  for (std::int64_t r = 0; r < size; ++r)
    for (std::int64_t c = 0; c < size; ++c)
      img[static_cast<std::size_t>(r * size + c)] =
          tile[static_cast<std::size_t>((r / kTile) * tiles + c / kTile)] + rng.normal(0.0, 0.02);
  const auto target = 1 + static_cast<std::int64_t>(rng.below(3));
  const auto boxes = place_boxes(rng, size, target, size / 8, size / 5, true);
  std::vector<std::pair<std::int64_t, std::int64_t>> fg;
  for (const auto& b : boxes) {
    for_shape(b, false, [&](std::int64_t r, std::int64_t c) {
      img[static_cast<std::size_t>(r * size + c)] = ((r + c) % 2 == 0) ? 0.1 : 0.9;
      fg.emplace_back(r, c);
    });
  }
  double total = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float q = quantise(img[i]);
    s.image[static_cast<std::int64_t>(i)] = q;
    total += q;
  }
  const std::int32_t cls = total / double(size * size) < 0.5 ? 1 : 2;
  for (const auto& [r, c] : fg) s.labels(r, c) = cls;
  return s;
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "shapes") return SynthKind::Shapes;
  if (name == "global-context") return SynthKind::GlobalContext;
  throw ConfigError("unknown dataset kind '" + name + "' (expected shapes or global-context)");
}

const char* synth_kind_name(SynthKind kind) {
  return kind == SynthKind::Shapes ? "shapes" : "global-context";
}

Dataset synth_dataset(const SynthOptions& options) {
  if (options.size < 16 || options.size % 8 != 0) {
    throw ConfigError("synth: size must be a multiple of 8 and >= 16, got " +
                      std::to_string(options.size));
  }
  if (options.count < 0) throw ConfigError("synth: count must be >= 0");
  Rng root(options.seed);
  Dataset d;
  for (std::int64_t i = 0; i < options.count; ++i) {
    Rng rng = root.split();
    d.samples.push_back(options.kind == SynthKind::Shapes ? shapes_sample(rng, options.size)
                                                          : global_context_sample(rng, options.size));
  }
  return d;
}

}  // namespace usema
