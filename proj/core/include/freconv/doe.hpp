#pragma once

#include <cstdint>
#include <vector>

#include "freconv/errors.hpp"

namespace freconv {

// Weighting coefficient of an exponential filter of scale sigma:
// (1 + e^{-1/sigma}) / (1 - e^{-1/sigma}). Strictly > 1, increasing in sigma.
double alpha_coeff(double sigma);

// Difference-of-Exponential high-pass initializer. The filter is the wide
// exponential grid minus a pointwise term:
//   tap(u,v) = alpha(sigma0) * exp(-sqrt(u^2+v^2)/sigma0^2)   (wide part)
//   subtrahend = alpha(sigma1) at the center                  (pointwise part)
// The composite response at the center tap is alpha(sigma0) - alpha(sigma1).
struct DoEInit {
  double sigma0 = 0.0;
  double sigma1 = 0.0;
  std::int64_t kernel = 0;  // odd extent K

  // sigma0 tied to kernel size, sigma1 fixed for the pointwise term.
  static DoEInit for_kernel(std::int64_t k);

  void validate() const;
};

// K x K wide exponential grid, row-major, offsets u,v in [-(K-1)/2, (K-1)/2].
// An optional tap spacing evaluates the grid on dilated offsets (u,v scaled
// by `spacing`), matching a dilated physical kernel's receptive positions.
std::vector<double> doe_wide_taps(const DoEInit& init, std::int64_t spacing = 1);

// Sum of the wide grid; the pointwise subtrahend that makes the composite
// filter exactly zero-DC ("zero-DC normalization").
double doe_zero_dc_subtrahend(const std::vector<double>& wide_taps);

// Composite K x K grid: wide grid with the subtrahend removed at the center.
// zero_dc=false uses the raw alpha(sigma1) subtrahend (nonzero DC residue);
// zero_dc=true rescales the subtrahend so the tap sum is exactly 0.
std::vector<double> doe_composite_taps(const DoEInit& init, bool zero_dc);

// Dilated-kernel rule: K = 3 + 2(r-1) realized as a physical 3x3 kernel with
// dilation r. K in {3,5,7,9} -> r in {1,2,3,4}.
std::int64_t resolve_dck(std::int64_t k);

// Group-kernel rule: raw = K^2 * g1 / 9; g2 is the largest element of
// {2,4,8,16} <= raw (2 when raw < 2). Channel divisibility is handled by
// resolve_gck_for_channels.
std::int64_t resolve_gck(std::int64_t k_target, std::int64_t g1);

// As resolve_gck, but additionally steps down within {2,4,8,16} until the
// group divides both channel counts; throws ConfigError when none does.
std::int64_t resolve_gck_for_channels(std::int64_t k_target, std::int64_t g1,
                                      std::int64_t in_channels, std::int64_t out_channels);

}  // namespace freconv
