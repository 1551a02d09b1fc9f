#include "freconv/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace freconv {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::uint32_t kDtypeF64 = 2;

static_assert(std::endian::native == std::endian::little,
              "FRTN I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

std::uint32_t get_u32(std::istream& is, long long offset, const char* what) {
  char buf[4];
  is.read(buf, 4);
  if (is.gcount() != 4) throw FormatError(std::string("truncated file reading ") + what, offset);
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

template <typename T>
void write_impl(const std::string& path, const Tensor<T>& t, std::uint32_t dtype_code) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, dtype_code);
  put_u32(os, 4);
  for (std::int64_t e : t.shape) put_u32(os, static_cast<std::uint32_t>(e));
  if (!t.data.empty())
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!os) throw FormatError("write failed for '" + path + "'");
}

template <typename T>
Tensor<T> read_payload(std::istream& is, const Shape4& shape) {
  Tensor<T> t(shape);
  const std::size_t want = t.data.size() * sizeof(T);
  if (want > 0) {
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(want));
    const auto got = static_cast<std::size_t>(is.gcount());
    if (got != want)
      throw FormatError("payload mismatch: expected " + std::to_string(t.data.size()) +
                            " values, found " + std::to_string(got / sizeof(T)),
                        32 + static_cast<long long>(got));
  }
  // Trailing bytes mean the declared shape disagrees with the payload.
  char extra;
  is.read(&extra, 1);
  if (is.gcount() == 1)
    throw FormatError("payload mismatch: trailing bytes after declared " +
                          std::to_string(t.data.size()) + " values",
                      32 + static_cast<long long>(want));
  return t;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor<float>& t) {
  write_impl(path, t, kDtypeF32);
}

void write_tensor(const std::string& path, const Tensor<double>& t) {
  write_impl(path, t, kDtypeF64);
}

TensorVariant read_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");

  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic, expected \"FRTN\"", 0);

  const std::uint32_t version = get_u32(is, 4, "version");
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version), 4);
  const std::uint32_t dtype = get_u32(is, 8, "dtype");
  if (dtype != kDtypeF32 && dtype != kDtypeF64)
    throw FormatError("unknown dtype code " + std::to_string(dtype), 8);
  const std::uint32_t ndim = get_u32(is, 12, "ndim");
  if (ndim != 4) throw FormatError("ndim must be 4, got " + std::to_string(ndim), 12);

  Shape4 shape;
  for (int i = 0; i < 4; ++i)
    shape[i] = static_cast<std::int64_t>(get_u32(is, 16 + 4 * i, "extent"));

  if (dtype == kDtypeF32) return read_payload<float>(is, shape);
  return read_payload<double>(is, shape);
}

}  // namespace freconv
