#include "freconv/doe.hpp"

#include <cmath>
#include <string>

namespace freconv {

double alpha_coeff(double sigma) {
  if (!(sigma > 0.0)) throw ParamError("alpha_coeff requires sigma > 0");
  const double e = std::exp(-1.0 / sigma);
  return (1.0 + e) / (1.0 - e);
}

DoEInit DoEInit::for_kernel(std::int64_t k) {
  if (k < 3 || k % 2 == 0) throw ParamError("DoE kernel extent must be odd and >= 3");
  DoEInit init;
  init.kernel = k;
  // Grows with the kernel extent but keeps the exponential core compact:
  // wide cores turn the zero-DC composite into a near-allpass with a cutoff
  // far below the half-Nyquist band the branch is meant to favor.
  init.sigma0 = 0.5 * std::sqrt(static_cast<double>(k) / 3.0);
  init.sigma1 = 0.25;
  return init;
}

void DoEInit::validate() const {
  if (kernel < 1 || kernel % 2 == 0) throw ParamError("DoE kernel extent must be odd");
  if (!(sigma0 > sigma1 && sigma1 > 0.0))
    throw ParamError("DoE scales must satisfy sigma0 > sigma1 > 0");
}

std::vector<double> doe_wide_taps(const DoEInit& init, std::int64_t spacing) {
  init.validate();
  if (spacing < 1) throw ParamError("tap spacing must be >= 1");
  const std::int64_t k = init.kernel;
  const std::int64_t half = (k - 1) / 2;
  const double a0 = alpha_coeff(init.sigma0);
  const double s0sq = init.sigma0 * init.sigma0;
  std::vector<double> taps(static_cast<std::size_t>(k * k));
  for (std::int64_t u = -half; u <= half; ++u)
    for (std::int64_t v = -half; v <= half; ++v) {
      const double du = static_cast<double>(u * spacing);
      const double dv = static_cast<double>(v * spacing);
      taps[static_cast<std::size_t>((u + half) * k + (v + half))] =
          a0 * std::exp(-std::sqrt(du * du + dv * dv) / s0sq);
    }
  return taps;
}

double doe_zero_dc_subtrahend(const std::vector<double>& wide_taps) {
  double s = 0.0;
  for (double t : wide_taps) s += t;
  return s;
}

std::vector<double> doe_composite_taps(const DoEInit& init, bool zero_dc) {
  std::vector<double> taps = doe_wide_taps(init);
  const double sub = zero_dc ? doe_zero_dc_subtrahend(taps) : alpha_coeff(init.sigma1);
  const std::int64_t k = init.kernel;
  taps[static_cast<std::size_t>(((k - 1) / 2) * k + (k - 1) / 2)] -= sub;
  return taps;
}

namespace {
constexpr std::int64_t kAllowedKernels[] = {3, 5, 7, 9};
constexpr std::int64_t kAllowedGroups[] = {2, 4, 8, 16};

bool kernel_allowed(std::int64_t k) {
  for (std::int64_t a : kAllowedKernels)
    if (a == k) return true;
  return false;
}

bool group_allowed(std::int64_t g) {
  for (std::int64_t a : kAllowedGroups)
    if (a == g) return true;
  return false;
}
}  // namespace

std::int64_t resolve_dck(std::int64_t k) {
  if (!kernel_allowed(k))
    throw ParamError("DCK kernel extent must be in {3,5,7,9}, got " + std::to_string(k));
  return (k - 3) / 2 + 1;
}

std::int64_t resolve_gck(std::int64_t k_target, std::int64_t g1) {
  if (!kernel_allowed(k_target))
    throw ParamError("GCK kernel extent must be in {3,5,7,9}, got " + std::to_string(k_target));
  if (!group_allowed(g1))
    throw ParamError("GCK base group must be in {2,4,8,16}, got " + std::to_string(g1));
  const double raw = static_cast<double>(k_target * k_target * g1) / 9.0;
  std::int64_t g2 = 2;  // floor of the allowed set when raw < 2
  for (std::int64_t g : kAllowedGroups)
    if (static_cast<double>(g) <= raw) g2 = g;
  return g2;
}

std::int64_t resolve_gck_for_channels(std::int64_t k_target, std::int64_t g1,
                                      std::int64_t in_channels, std::int64_t out_channels) {
  const std::int64_t ideal = resolve_gck(k_target, g1);
  for (std::int64_t g = ideal; g >= 2; g /= 2)
    if (in_channels % g == 0 && out_channels % g == 0) return g;
  throw ConfigError("no group in {2,4,8,16} up to " + std::to_string(ideal) +
                    " divides channel counts " + std::to_string(in_channels) + "->" +
                    std::to_string(out_channels) + " for K=" + std::to_string(k_target));
}

}  // namespace freconv
