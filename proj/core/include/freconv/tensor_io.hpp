#pragma once

#include <string>
#include <variant>

#include "freconv/tensor.hpp"

namespace freconv {

// FRTN binary tensor format, little-endian, no padding:
//
//   bytes 0..3   magic "FRTN"
//   bytes 4..7   format version, u32 (= 1)
//   bytes 8..11  dtype code, u32 (1 = f32, 2 = f64)
//   bytes 12..15 ndim, u32 (= 4)
//   bytes 16..31 four u32 extents (n, c, h, w)
//   bytes 32..   n*c*h*w payload values of the declared dtype
//
// Round-trip is bit-exact for both dtypes, including zero extents.

using TensorVariant = std::variant<Tensor<float>, Tensor<double>>;

void write_tensor(const std::string& path, const Tensor<float>& t);
void write_tensor(const std::string& path, const Tensor<double>& t);

// Reads whichever dtype the file declares.
TensorVariant read_tensor(const std::string& path);

// Reads a file and requires its dtype to match T exactly.
template <typename T>
Tensor<T> read_tensor_as(const std::string& path) {
  TensorVariant v = read_tensor(path);
  if (auto* p = std::get_if<Tensor<T>>(&v)) return std::move(*p);
  throw FormatError("tensor file '" + path + "' holds a different dtype than requested", 8);
}

}  // namespace freconv
