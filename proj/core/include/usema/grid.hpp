#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usema/errors.hpp"

namespace usema {

// Row-major 2D array of integral labels: class maps, instance maps, binary masks.
template <typename V>
struct Grid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<V> data;

  Grid() = default;
  Grid(std::int64_t h, std::int64_t w, V fill = V{0})
      : height(h), width(w), data(static_cast<std::size_t>(h * w), fill) {}
  Grid(std::int64_t h, std::int64_t w, std::vector<V> values)
      : height(h), width(w), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != h * w) {
      throw DimensionError("grid data length " + std::to_string(data.size()) + " != " +
                           std::to_string(h) + "x" + std::to_string(w));
    }
  }

  std::int64_t size() const { return height * width; }
  V& operator()(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * width + c)]; }
  V operator()(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * width + c)];
  }
  bool same_shape(const Grid& o) const { return height == o.height && width == o.width; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

using LabelGrid = Grid<std::int32_t>;
using Mask = Grid<std::uint8_t>;

// Pixels equal to `label`.
inline Mask mask_of(const LabelGrid& labels, std::int32_t label) {
  Mask m(labels.height, labels.width);
  for (std::size_t i = 0; i < labels.data.size(); ++i) m.data[i] = labels.data[i] == label;
  return m;
}

}  // namespace usema
