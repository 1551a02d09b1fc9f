#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "freconv/arch.hpp"

namespace freconv {

enum class FlopsConvention { kMac, kTwoMac };

struct LayerCost {
  std::string id;
  std::string kind;
  long long params = 0;
  long long macs = 0;
};

// Static parameter and multiply-accumulate counts over a graph. Counting is
// purely structural; parameter values never enter.
struct CostReport {
  std::string arch;
  std::array<std::int64_t, 3> input_shape{0, 0, 0};
  std::int64_t classes = 0;
  std::string flops_convention;  // "mac" | "2mac"
  std::vector<LayerCost> per_layer;
  long long total_params = 0;
  long long total_macs = 0;
  std::vector<std::string> notes;  // counting conventions and design deltas
};

// Parameter count of a single FreConv module, derivable from config alone.
long long freconv_param_count(const FreConvConfig& cfg);

// MAC count of a single FreConv module for the given input spatial extents.
long long freconv_mac_count(const FreConvConfig& cfg, std::int64_t in_h, std::int64_t in_w);

CostReport count_cost(const ArchGraph& graph,
                      FlopsConvention convention = FlopsConvention::kMac);

struct ReductionReport {
  CostReport base;
  CostReport variant;
  double param_delta_pct = 0.0;  // rounded half away from zero, 2 decimals
  double macs_delta_pct = 0.0;
};

// Signed percentage 100*(variant-base)/base, rounded half away from zero to
// two decimals.
double delta_pct(long long base, long long variant);

ReductionReport reduction_report(const CostReport& base, const CostReport& variant);

// Renderers. JSON is machine-readable; the table is aligned human output.
std::string cost_report_json(const CostReport& report);
std::string reduction_report_json(const ReductionReport& report);
void write_cost_table(std::ostream& os, const CostReport& report);
void write_cost_csv(std::ostream& os, const CostReport& report);
void write_reduction_table(std::ostream& os, const ReductionReport& report);
void write_reduction_csv(std::ostream& os, const ReductionReport& report);

}  // namespace freconv
