#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "freconv/tensor.hpp"

namespace freconv {

// Energy per frequency bin of an H x W plane, DC-centered: the zero
// frequency lives at (floor(H/2), floor(W/2)). Convention: unnormalized
// forward DFT, energy = squared magnitude, so Parseval reads
// sum(energy) = H*W*sum(x^2).
struct SpectrumMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<double> energy;  // row-major, DC-centered
  std::string source;          // provenance label (layer id etc.)
  std::int64_t plane_count = 0;

  double at(std::int64_t row, std::int64_t col) const {
    return energy[static_cast<std::size_t>(row * w + col)];
  }
  // Signed frequency of a centered grid index.
  std::int64_t freq_row(std::int64_t row) const { return row - h / 2; }
  std::int64_t freq_col(std::int64_t col) const { return col - w / 2; }
};

// Squared-magnitude 2D DFT of one plane, DC-centered.
SpectrumMap fft2_energy(const std::vector<double>& plane, std::int64_t h, std::int64_t w);

// Mean energy map over every channel plane of every added tensor. Planes
// must share spatial extents; summation order is the insertion order.
class SpectrumAverager {
 public:
  void add(const Tensor<double>& features);
  void add(const Tensor<float>& features);
  SpectrumMap mean(const std::string& source = "") const;
  std::int64_t plane_count() const { return count_; }

 private:
  void add_plane(const double* plane, std::int64_t h, std::int64_t w);
  std::int64_t h_ = 0, w_ = 0;
  std::vector<double> sum_;
  std::int64_t count_ = 0;
};

// Convenience wrapper over SpectrumAverager for a batch held in memory.
SpectrumMap average_spectrum(const std::vector<Tensor<double>>& features,
                             const std::string& source = "");

// (energy above fraction*Nyquist) / (energy at or below). Radius is
// elliptically normalized so the axis Nyquist sits at 1; the DC bin belongs
// to the low band. Returns +infinity when the low band is empty.
double band_energy_ratio(const SpectrumMap& map, double split_radius_fraction);

struct RadialProfile {
  struct Bin {
    double radius_lo = 0.0;
    double radius_hi = 0.0;
    double mean_energy = 0.0;
  };
  std::vector<Bin> bins;
};

// Mean energy per radial band; bands partition [0, sqrt(2)] in normalized
// radius (1 = axis Nyquist, sqrt(2) = the corner bins).
RadialProfile radial_profile(const SpectrumMap& map, std::int64_t bins);

// CSV emitters: the map as a row-major grid, the profile as
// radius_lo,radius_hi,energy rows.
void write_spectrum_csv(std::ostream& os, const SpectrumMap& map);
void write_profile_csv(std::ostream& os, const RadialProfile& profile);

}  // namespace freconv
