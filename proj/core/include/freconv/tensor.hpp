#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "freconv/errors.hpp"
#include "freconv/rng.hpp"

namespace freconv {

using Shape4 = std::array<std::int64_t, 4>;

inline std::string shape_str(const Shape4& s) {
  return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
         std::to_string(s[2]) + "," + std::to_string(s[3]) + "]";
}

// Checked product of four extents; rejects negatives and index overflow.
inline std::size_t checked_volume(const Shape4& s) {
  std::size_t vol = 1;
  for (std::int64_t e : s) {
    if (e < 0) throw ParamError("negative extent in shape " + shape_str(s));
    const auto ue = static_cast<std::size_t>(e);
    if (ue != 0 && vol > std::numeric_limits<std::size_t>::max() / ue)
      throw SizeOverflowError("shape " + shape_str(s) + " exceeds addressable size");
    vol *= ue;
  }
  return vol;
}

// Dense rank-4 tensor in row-major n,c,h,w order. Plain value type: copy,
// move, and send between threads freely. Element (i,j,y,x) lives at offset
// ((i*c + j)*h + y)*w + x.
template <typename T>
struct Tensor {
  Shape4 shape{0, 0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, T fill = T(0))
      : shape{n, c, h, w}, data(checked_volume({n, c, h, w}), fill) {}
  explicit Tensor(const Shape4& s, T fill = T(0)) : shape(s), data(checked_volume(s), fill) {}

  std::int64_t n() const { return shape[0]; }
  std::int64_t c() const { return shape[1]; }
  std::int64_t h() const { return shape[2]; }
  std::int64_t w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  std::size_t offset(std::int64_t i, std::int64_t j, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>(((i * shape[1] + j) * shape[2] + y) * shape[3] + x);
  }
  T& at(std::int64_t i, std::int64_t j, std::int64_t y, std::int64_t x) {
    return data[offset(i, j, y, x)];
  }
  const T& at(std::int64_t i, std::int64_t j, std::int64_t y, std::int64_t x) const {
    return data[offset(i, j, y, x)];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

template <typename T>
Tensor<T> tensor_create(const Shape4& shape, T fill) {
  return Tensor<T>(shape, fill);
}

enum class DistKind { kUniform, kNormal };

struct Dist {
  DistKind kind = DistKind::kUniform;
  double a = 0.0;  // uniform lower / normal mean
  double b = 1.0;  // uniform upper / normal sigma

  static Dist uniform(double a, double b) {
    if (!(a < b)) throw ParamError("uniform(a,b) requires a < b");
    return Dist{DistKind::kUniform, a, b};
  }
  static Dist normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw ParamError("normal(mu,sigma) requires sigma > 0");
    return Dist{DistKind::kNormal, mu, sigma};
  }
};

// Fills every element i.i.d. from dist, advancing rng. Deterministic per
// seed and call sequence.
template <typename T>
void seeded_fill(Rng& rng, Tensor<T>& t, const Dist& dist) {
  if (dist.kind == DistKind::kUniform) {
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(dist.a, dist.b));
  } else {
    for (auto& v : t.data) v = static_cast<T>(rng.normal(dist.a, dist.b));
  }
}

template <typename T>
Tensor<T> elementwise_add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("elementwise add: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <typename T>
Tensor<T> elementwise_sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("elementwise sub: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

template <typename T, typename U>
Tensor<U> tensor_cast(const Tensor<T>& t) {
  Tensor<U> out(t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<U>(t.data[i]);
  return out;
}

}  // namespace freconv
