#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>

#include "usema/tensor.hpp"

namespace usema {

// Binary tensor file:
//   "USEM" | version 0x01 | dtype (0x01 real32, 0x02 real64) | u32 LE rank |
//   rank x u64 LE extents | raw LE values, row-major.
inline constexpr char kTensorMagic[4] = {'U', 'S', 'E', 'M'};
inline constexpr std::uint8_t kTensorFormatVersion = 0x01;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);
template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);

// Reads whichever dtype the file declares. Throws DataError on malformed input.
AnyTensor read_any_tensor(std::istream& in);
AnyTensor load_any_tensor(const std::string& path);

// Reads a tensor and converts it to T if the stored dtype differs.
template <typename T>
Tensor<T> load_tensor(const std::string& path);
template <typename T>
Tensor<T> read_tensor(std::istream& in);

}  // namespace usema
