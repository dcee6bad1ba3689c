#include "usema/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace usema {

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::Real32:
      return "real32";
    case DType::Real64:
      return "real64";
  }
  return "unknown";
}

std::string shape_str(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const auto m = static_cast<std::int64_t>(rows.size());
  if (m == 0) throw DimensionError("matrix literal has no rows");
  const auto n = static_cast<std::int64_t>(rows.begin()->size());
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(m * n));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != n) {
      throw DimensionError("ragged matrix literal");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(data));
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::int64_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " for shape " +
                         shape_str(shape_));
  }
  std::int64_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= shape_[axis]) {
      throw DimensionError("index out of range for shape " + shape_str(shape_));
    }
    off = off * shape_[axis] + i;
    ++axis;
  }
  return static_cast<std::size_t>(off);
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  T out = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace usema
