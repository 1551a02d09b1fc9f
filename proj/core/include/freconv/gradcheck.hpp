#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace freconv {

struct GradCheckResult {
  std::string op;
  int cases = 0;
  double max_rel_err = 0.0;
  std::string worst;  // coordinate of the worst disagreement
};

struct GradCheckReport {
  double threshold = 1e-4;
  double epsilon = 1e-5;
  std::vector<GradCheckResult> results;

  bool passed() const {
    for (const auto& r : results)
      if (!(r.max_rel_err < threshold)) return false;
    return true;
  }
};

// Central finite-difference checks (double precision) for every operation
// with a backward pass and for the full FreConv module. Deterministic per
// seed.
GradCheckReport grad_check_suite(std::uint64_t seed);

std::string gradcheck_report_json(const GradCheckReport& report);
void write_gradcheck_table(std::ostream& os, const GradCheckReport& report);

}  // namespace freconv
