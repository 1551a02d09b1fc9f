#include "freconv/cost.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>

#include <json.hpp>

namespace freconv {

using nlohmann::json;

namespace {

long long conv_param_count(const ConvSpec& spec) {
  long long p = spec.out_channels * (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
  if (spec.has_bias) p += spec.out_channels;
  return p;
}

// out_elems * (in/g) * K^2; dilation does not change MACs, bias not counted.
long long conv_mac_count(const ConvSpec& spec, std::int64_t out_h, std::int64_t out_w) {
  return spec.out_channels * out_h * out_w * (spec.in_channels / spec.groups) * spec.kernel *
         spec.kernel;
}

}  // namespace

long long freconv_param_count(const FreConvConfig& cfg) {
  cfg.validate();
  const auto d = cfg.derived_convs();
  long long p = 0;
  if (cfg.split_mode == SplitMode::kAttention)
    p += 2 * (conv_param_count(d.attn_reduce) + conv_param_count(d.attn_expand));
  if (cfg.branch_mode == BranchMode::kAsymmetric) {
    for (const auto& spec : d.multiscale) p += conv_param_count(spec);
    p += conv_param_count(d.hfe_pointwise);
    p += conv_param_count(d.lfe);
  } else {
    p += 2 * conv_param_count(d.same_branch);
  }
  p += 2 * 2 * cfg.out_channels;  // one affine batch norm per branch output
  return p;
}

long long freconv_mac_count(const FreConvConfig& cfg, std::int64_t in_h, std::int64_t in_w) {
  cfg.validate();
  const auto d = cfg.derived_convs();
  long long m = 0;
  if (cfg.split_mode == SplitMode::kAttention) {
    // Attention convs act on 1x1 channel statistics.
    m += 2 * (conv_mac_count(d.attn_reduce, 1, 1) + conv_mac_count(d.attn_expand, 1, 1));
  }
  if (cfg.branch_mode == BranchMode::kAsymmetric) {
    for (const auto& spec : d.multiscale)
      m += conv_mac_count(spec, spec.out_extent(in_h), spec.out_extent(in_w));
    m += conv_mac_count(d.hfe_pointwise, d.hfe_pointwise.out_extent(in_h),
                        d.hfe_pointwise.out_extent(in_w));
    m += conv_mac_count(d.lfe, d.lfe.out_extent(in_h), d.lfe.out_extent(in_w));
  } else {
    m += 2 * conv_mac_count(d.same_branch, d.same_branch.out_extent(in_h),
                            d.same_branch.out_extent(in_w));
  }
  return m;  // splitting, norms, and the integration sum are elementwise: 0
}

CostReport count_cost(const ArchGraph& graph, FlopsConvention convention) {
  const auto shapes = propagate_shapes(graph);
  const long long mult = convention == FlopsConvention::kTwoMac ? 2 : 1;

  CostReport report;
  report.arch = graph.name;
  report.input_shape = graph.input_shape;
  report.classes = graph.classes;
  report.flops_convention = convention == FlopsConvention::kTwoMac ? "2mac" : "mac";
  report.notes = {
      "flops counted as multiply-accumulates in conv and linear nodes only; "
      "batchnorm, activations, pooling, and elementwise nodes count 0",
      "batchnorm parameters are the affine pair (2 per channel); running statistics "
      "are state, not parameters",
      "freconv: attention split uses two 1x1 reduce/expand pairs (ratio " +
          std::to_string(16) + " by default) with biases; branch convs are bias-free",
      "freconv: one batch norm per branch output; the host batch norm after a replaced "
      "conv is retained",
      "freconv: dck keeps a 3x3 dilated kernel grouped by g1; gck enlarges the kernel "
      "and rounds the group down within {2,4,8,16}, stepping down to divide channels",
      "variant graphs replace max pooling with a strided 3x3 conv (with bn+relu when "
      "the host pairs convs with batch norm)",
  };

  for (const auto& node : graph.nodes) {
    LayerCost cost;
    cost.id = node.id;
    cost.kind = node_kind_name(node.kind);
    const Shape4 in = shapes.at(node.inputs.front());
    const Shape4 out = shapes.at(node.id);
    switch (node.kind) {
      case NodeKind::kConv:
        cost.params = conv_param_count(node.conv);
        cost.macs = conv_mac_count(node.conv, out[2], out[3]);
        break;
      case NodeKind::kFreConv:
        cost.params = freconv_param_count(node.freconv);
        cost.macs = freconv_mac_count(node.freconv, in[2], in[3]);
        break;
      case NodeKind::kBatchNorm:
        cost.params = 2 * node.bn_channels;
        break;
      case NodeKind::kLinear:
        cost.params = node.linear_out * node.linear_in + node.linear_out;
        cost.macs = node.linear_out * node.linear_in;
        break;
      case NodeKind::kActivation:
      case NodeKind::kPool:
      case NodeKind::kGap:
      case NodeKind::kAdd:
      case NodeKind::kConcat:
        break;
    }
    cost.macs *= mult;
    report.total_params += cost.params;
    report.total_macs += cost.macs;
    report.per_layer.push_back(std::move(cost));
  }
  return report;
}

double delta_pct(long long base, long long variant) {
  if (base == 0) throw ParamError("reduction against a zero base total");
  const double raw =
      100.0 * (static_cast<double>(variant) - static_cast<double>(base)) /
      static_cast<double>(base);
  return std::round(raw * 100.0) / 100.0;  // half away from zero, 2 decimals
}

ReductionReport reduction_report(const CostReport& base, const CostReport& variant) {
  if (base.input_shape != variant.input_shape)
    throw ParamError("reduction_report requires matching input shapes");
  ReductionReport r;
  r.base = base;
  r.variant = variant;
  r.param_delta_pct = delta_pct(base.total_params, variant.total_params);
  r.macs_delta_pct = delta_pct(base.total_macs, variant.total_macs);
  return r;
}

namespace {

json report_to_json_obj(const CostReport& report) {
  json j;
  j["arch"] = report.arch;
  j["input_shape"] = report.input_shape;
  j["classes"] = report.classes;
  j["flops_convention"] = report.flops_convention;
  j["total_params"] = report.total_params;
  j["total_macs"] = report.total_macs;
  json layers = json::array();
  for (const auto& l : report.per_layer)
    layers.push_back({{"id", l.id}, {"kind", l.kind}, {"params", l.params}, {"macs", l.macs}});
  j["per_layer"] = std::move(layers);
  j["notes"] = report.notes;
  return j;
}

std::string human_count(long long v) {
  char buf[32];
  if (v >= 1000000000)
    std::snprintf(buf, sizeof(buf), "%.2fG", static_cast<double>(v) / 1e9);
  else if (v >= 1000000)
    std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(v) / 1e6);
  else if (v >= 1000)
    std::snprintf(buf, sizeof(buf), "%.2fK", static_cast<double>(v) / 1e3);
  else
    std::snprintf(buf, sizeof(buf), "%lld", v);
  return buf;
}

std::string pct2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", v);
  return buf;
}

}  // namespace

std::string cost_report_json(const CostReport& report) {
  return report_to_json_obj(report).dump(2) + "\n";
}

std::string reduction_report_json(const ReductionReport& report) {
  json j;
  j["base"] = report_to_json_obj(report.base);
  j["variant"] = report_to_json_obj(report.variant);
  j["param_delta_pct"] = report.param_delta_pct;
  j["macs_delta_pct"] = report.macs_delta_pct;
  return j.dump(2) + "\n";
}

void write_cost_table(std::ostream& os, const CostReport& report) {
  os << "arch: " << report.arch << "  input: " << report.input_shape[0] << "x"
     << report.input_shape[1] << "x" << report.input_shape[2]
     << "  classes: " << report.classes << "  flops: " << report.flops_convention << "\n";
  os << std::left << std::setw(28) << "layer" << std::setw(12) << "kind" << std::right
     << std::setw(14) << "params" << std::setw(16) << "macs" << "\n";
  for (const auto& l : report.per_layer)
    os << std::left << std::setw(28) << l.id << std::setw(12) << l.kind << std::right
       << std::setw(14) << l.params << std::setw(16) << l.macs << "\n";
  os << std::left << std::setw(28) << "TOTAL" << std::setw(12) << "" << std::right
     << std::setw(14) << report.total_params << std::setw(16) << report.total_macs << "\n";
  os << "totals: " << human_count(report.total_params) << " params, "
     << human_count(report.total_macs) << " " << report.flops_convention << "\n";
}

void write_cost_csv(std::ostream& os, const CostReport& report) {
  os << "# arch=" << report.arch << " input=" << report.input_shape[0] << "x"
     << report.input_shape[1] << "x" << report.input_shape[2] << " classes=" << report.classes
     << " flops=" << report.flops_convention << "\n";
  os << "id,kind,params,macs\n";
  for (const auto& l : report.per_layer)
    os << l.id << ',' << l.kind << ',' << l.params << ',' << l.macs << "\n";
  os << "TOTAL,," << report.total_params << ',' << report.total_macs << "\n";
}

void write_reduction_table(std::ostream& os, const ReductionReport& report) {
  os << std::left << std::setw(24) << "graph" << std::right << std::setw(14) << "params"
     << std::setw(16) << "macs" << "\n";
  os << std::left << std::setw(24) << report.base.arch << std::right << std::setw(14)
     << report.base.total_params << std::setw(16) << report.base.total_macs << "\n";
  os << std::left << std::setw(24) << report.variant.arch << std::right << std::setw(14)
     << report.variant.total_params << std::setw(16) << report.variant.total_macs << "\n";
  os << std::left << std::setw(24) << "reduction" << std::right << std::setw(14)
     << pct2(report.param_delta_pct) << std::setw(16) << pct2(report.macs_delta_pct) << "\n";
}

void write_reduction_csv(std::ostream& os, const ReductionReport& report) {
  os << "graph,params,macs\n";
  os << report.base.arch << ',' << report.base.total_params << ',' << report.base.total_macs
     << "\n";
  os << report.variant.arch << ',' << report.variant.total_params << ','
     << report.variant.total_macs << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "delta_pct,%.2f,%.2f", report.param_delta_pct,
                report.macs_delta_pct);
  os << buf << "\n";
}

}  // namespace freconv
