#include "freconv/spectrum.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>

namespace freconv {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place, length must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -kTau / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// O(n^2) fallback for non-power-of-two extents.
void dft_naive(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -kTau * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  a = std::move(out);
}

void transform_1d(std::vector<std::complex<double>>& a) {
  if (is_pow2(static_cast<std::int64_t>(a.size())))
    fft_pow2(a);
  else
    dft_naive(a);
}

}  // namespace

SpectrumMap fft2_energy(const std::vector<double>& plane, std::int64_t h, std::int64_t w) {
  if (h < 1 || w < 1) throw ShapeError("fft2_energy needs extents >= 1");
  if (plane.size() != static_cast<std::size_t>(h * w))
    throw ShapeError("fft2_energy plane size mismatch");

  // Row-column decomposition of the 2D DFT.
  std::vector<std::complex<double>> grid(plane.begin(), plane.end());
  std::vector<std::complex<double>> line;
  for (std::int64_t r = 0; r < h; ++r) {
    line.assign(grid.begin() + r * w, grid.begin() + (r + 1) * w);
    transform_1d(line);
    std::copy(line.begin(), line.end(), grid.begin() + r * w);
  }
  for (std::int64_t c = 0; c < w; ++c) {
    line.resize(static_cast<std::size_t>(h));
    for (std::int64_t r = 0; r < h; ++r) line[static_cast<std::size_t>(r)] = grid[r * w + c];
    transform_1d(line);
    for (std::int64_t r = 0; r < h; ++r) grid[r * w + c] = line[static_cast<std::size_t>(r)];
  }

  SpectrumMap map;
  map.h = h;
  map.w = w;
  map.plane_count = 1;
  map.energy.assign(static_cast<std::size_t>(h * w), 0.0);
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      const std::int64_t sr = (r + h / 2) % h;  // DC lands at (h/2, w/2)
      const std::int64_t sc = (c + w / 2) % w;
      map.energy[static_cast<std::size_t>(sr * w + sc)] = std::norm(grid[r * w + c]);
    }
  return map;
}

void SpectrumAverager::add_plane(const double* plane, std::int64_t h, std::int64_t w) {
  if (count_ == 0) {
    h_ = h;
    w_ = w;
    sum_.assign(static_cast<std::size_t>(h * w), 0.0);
  } else if (h != h_ || w != w_) {
    throw ShapeError("average_spectrum planes disagree: " + std::to_string(h) + "x" +
                     std::to_string(w) + " vs " + std::to_string(h_) + "x" +
                     std::to_string(w_));
  }
  const SpectrumMap m = fft2_energy(std::vector<double>(plane, plane + h * w), h, w);
  for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += m.energy[i];
  ++count_;
}

void SpectrumAverager::add(const Tensor<double>& features) {
  for (std::int64_t i = 0; i < features.n(); ++i)
    for (std::int64_t c = 0; c < features.c(); ++c)
      add_plane(features.data.data() + features.offset(i, c, 0, 0), features.h(), features.w());
}

void SpectrumAverager::add(const Tensor<float>& features) {
  std::vector<double> plane(static_cast<std::size_t>(features.h() * features.w()));
  for (std::int64_t i = 0; i < features.n(); ++i)
    for (std::int64_t c = 0; c < features.c(); ++c) {
      const float* src = features.data.data() + features.offset(i, c, 0, 0);
      for (std::size_t s = 0; s < plane.size(); ++s) plane[s] = static_cast<double>(src[s]);
      add_plane(plane.data(), features.h(), features.w());
    }
}

SpectrumMap SpectrumAverager::mean(const std::string& source) const {
  if (count_ == 0) throw ShapeError("average_spectrum has no planes");
  SpectrumMap map;
  map.h = h_;
  map.w = w_;
  map.source = source;
  map.plane_count = count_;
  map.energy.resize(sum_.size());
  for (std::size_t i = 0; i < sum_.size(); ++i)
    map.energy[i] = sum_[i] / static_cast<double>(count_);
  return map;
}

SpectrumMap average_spectrum(const std::vector<Tensor<double>>& features,
                             const std::string& source) {
  SpectrumAverager avg;
  for (const auto& t : features) avg.add(t);
  return avg.mean(source);
}

namespace {

double normalized_radius(const SpectrumMap& map, std::int64_t row, std::int64_t col) {
  // Elliptical normalization: the axis Nyquist frequency maps to radius 1.
  const double fu = static_cast<double>(map.freq_row(row)) / (static_cast<double>(map.h) / 2.0);
  const double fv = static_cast<double>(map.freq_col(col)) / (static_cast<double>(map.w) / 2.0);
  return std::sqrt(fu * fu + fv * fv);
}

}  // namespace

double band_energy_ratio(const SpectrumMap& map, double split_radius_fraction) {
  if (!(split_radius_fraction > 0.0 && split_radius_fraction < 1.0))
    throw ParamError("split radius fraction must lie in (0,1)");
  double low = 0.0, high = 0.0;
  for (std::int64_t r = 0; r < map.h; ++r)
    for (std::int64_t c = 0; c < map.w; ++c) {
      const double e = map.at(r, c);
      if (normalized_radius(map, r, c) <= split_radius_fraction)
        low += e;
      else
        high += e;
    }
  if (low <= 0.0) return std::numeric_limits<double>::infinity();
  return high / low;
}

RadialProfile radial_profile(const SpectrumMap& map, std::int64_t bins) {
  if (bins < 1) throw ParamError("radial profile needs >= 1 bin");
  const double max_radius = std::sqrt(2.0);
  RadialProfile profile;
  profile.bins.resize(static_cast<std::size_t>(bins));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
  for (std::int64_t b = 0; b < bins; ++b) {
    profile.bins[static_cast<std::size_t>(b)].radius_lo =
        max_radius * static_cast<double>(b) / static_cast<double>(bins);
    profile.bins[static_cast<std::size_t>(b)].radius_hi =
        max_radius * static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (std::int64_t r = 0; r < map.h; ++r)
    for (std::int64_t c = 0; c < map.w; ++c) {
      const double rad = normalized_radius(map, r, c);
      auto b = static_cast<std::int64_t>(rad / max_radius * static_cast<double>(bins));
      if (b >= bins) b = bins - 1;
      profile.bins[static_cast<std::size_t>(b)].mean_energy += map.at(r, c);
      ++counts[static_cast<std::size_t>(b)];
    }
  for (std::int64_t b = 0; b < bins; ++b)
    if (counts[static_cast<std::size_t>(b)] > 0)
      profile.bins[static_cast<std::size_t>(b)].mean_energy /=
          static_cast<double>(counts[static_cast<std::size_t>(b)]);
  return profile;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_spectrum_csv(std::ostream& os, const SpectrumMap& map) {
  for (std::int64_t r = 0; r < map.h; ++r) {
    for (std::int64_t c = 0; c < map.w; ++c) {
      if (c) os << ',';
      os << fmt_double(map.at(r, c));
    }
    os << '\n';
  }
}

void write_profile_csv(std::ostream& os, const RadialProfile& profile) {
  os << "radius_lo,radius_hi,energy\n";
  for (const auto& bin : profile.bins)
    os << fmt_double(bin.radius_lo) << ',' << fmt_double(bin.radius_hi) << ','
       << fmt_double(bin.mean_energy) << '\n';
}

}  // namespace freconv
