#include "usema/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace usema {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

template <typename U>
void put(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  U value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(U))) {
    throw DataError("truncated tensor file");
  }
  return value;
}

struct Header {
  DType dtype;
  Shape shape;
};

Header read_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw DataError("bad tensor file magic");
  }
  const auto version = get<std::uint8_t>(in);
  if (version != kTensorFormatVersion) {
    throw DataError("unsupported tensor file version " + std::to_string(version));
  }
  const auto dtype = get<std::uint8_t>(in);
  if (dtype != static_cast<std::uint8_t>(DType::Real32) &&
      dtype != static_cast<std::uint8_t>(DType::Real64)) {
    throw DataError("unknown tensor dtype byte " + std::to_string(dtype));
  }
  const auto rank = get<std::uint32_t>(in);
  if (rank > 16) throw DataError("implausible tensor rank " + std::to_string(rank));
  Header h{static_cast<DType>(dtype), {}};
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto extent = get<std::uint64_t>(in);
    if (extent == 0 || extent > (std::uint64_t{1} << 40)) {
      throw DataError("invalid tensor extent " + std::to_string(extent));
    }
    h.shape.push_back(static_cast<std::int64_t>(extent));
  }
  return h;
}

template <typename T>
Tensor<T> read_body(std::istream& in, Shape shape) {
  Tensor<T> t(std::move(shape));
  const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(T));
  if (!in.read(reinterpret_cast<char*>(t.ptr()), bytes)) {
    throw DataError("truncated tensor payload");
  }
  return t;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  out.write(kTensorMagic, 4);
  put<std::uint8_t>(out, kTensorFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(Tensor<T>::dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
  out.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  write_tensor(out, t);
  if (!out) throw DataError("failed writing " + path);
}

AnyTensor read_any_tensor(std::istream& in) {
  auto header = read_header(in);
  if (header.dtype == DType::Real32) return read_body<float>(in, std::move(header.shape));
  return read_body<double>(in, std::move(header.shape));
}

AnyTensor load_any_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file " + path);
  try {
    return read_any_tensor(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

template <typename T>
Tensor<T> read_tensor(std::istream& in) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, read_any_tensor(in));
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, load_any_tensor(path));
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template void save_tensor(const std::string&, const Tensor<float>&);
template void save_tensor(const std::string&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);
template Tensor<float> load_tensor(const std::string&);
template Tensor<double> load_tensor(const std::string&);

}  // namespace usema
