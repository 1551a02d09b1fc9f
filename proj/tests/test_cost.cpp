#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "freconv/cost.hpp"
#include "test_util.hpp"

using namespace freconv;

namespace {

ArchGraph single_conv_graph(const ConvSpec& spec, std::int64_t hw) {
  ArchGraph g;
  g.name = "one-conv";
  g.input_shape = {spec.in_channels, hw, hw};
  g.classes = 1;
  LayerNode n;
  n.id = "c";
  n.kind = NodeKind::kConv;
  n.inputs = {"input"};
  n.conv = spec;
  g.nodes = {n};
  return g;
}

CostReport totals_only(long long params, long long macs) {
  CostReport r;
  r.total_params = params;
  r.total_macs = macs;
  return r;
}

}  // namespace

TEST_CASE("conv parameter formula") {
  // 64 -> 64, K=3: 64*64*9 = 36864; grouped by 16: / 16.
  ConvSpec spec{64, 64, 3, 1, 1, 1, 1, false};
  CHECK(count_cost(single_conv_graph(spec, 8)).total_params == 36864);
  spec.groups = 16;
  CHECK(count_cost(single_conv_graph(spec, 8)).total_params == 2304);
  spec.groups = 1;
  spec.has_bias = true;
  CHECK(count_cost(single_conv_graph(spec, 8)).total_params == 36928);
}

TEST_CASE("conv MAC formula") {
  // 56x56 output, 64->64 K3 pad 1: 56*56*64*64*9.
  ConvSpec spec{64, 64, 3, 1, 1, 1, 1, false};
  CHECK(count_cost(single_conv_graph(spec, 56)).total_macs == 115605504ll);
  // 1x1 conv: out_elems * in.
  ConvSpec pw{64, 32, 1, 1, 0, 1, 1, false};
  CHECK(count_cost(single_conv_graph(pw, 7)).total_macs == 7ll * 7 * 32 * 64);
  // Dilation changes nothing.
  ConvSpec dil{64, 64, 3, 1, 2, 2, 1, false};
  CHECK(count_cost(single_conv_graph(dil, 56)).total_macs == 115605504ll);
}

TEST_CASE("2mac convention doubles the flop totals") {
  ConvSpec spec{8, 8, 3, 1, 1, 1, 1, false};
  const auto mac = count_cost(single_conv_graph(spec, 8), FlopsConvention::kMac);
  const auto two = count_cost(single_conv_graph(spec, 8), FlopsConvention::kTwoMac);
  CHECK(two.total_macs == 2 * mac.total_macs);
  CHECK(two.total_params == mac.total_params);
}

TEST_CASE("baseline anchors match the published totals") {
  const CostReport resnet =
      count_cost(build_arch(ArchFamily::kResNet50, ArchVariant::kBaseline, {}));
  CHECK(resnet.total_params == 25557032ll);  // within 0.1% of 25.56M
  CHECK(std::abs(resnet.total_macs / 1e9 - 4.14) / 4.14 < 0.02);

  const CostReport vgg = count_cost(build_arch(ArchFamily::kVgg16, ArchVariant::kBaseline, {}));
  CHECK(vgg.total_params == 138357544ll);
  CHECK(std::abs(vgg.total_macs / 1e9 - 15.53) / 15.53 < 0.02);

  const CostReport dense =
      count_cost(build_arch(ArchFamily::kDenseNet121, ArchVariant::kBaseline, {}));
  CHECK(dense.total_params == 7978856ll);
  CHECK(std::abs(dense.total_macs / 1e9 - 2.88) / 2.88 < 0.03);
}

TEST_CASE("counting is structural: equal graphs yield equal reports") {
  const ArchGraph g1 = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, {});
  const ArchGraph g2 = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, {});
  const CostReport a = count_cost(g1), b = count_cost(g2);
  CHECK(a.total_params == b.total_params);
  CHECK(a.total_macs == b.total_macs);
}

TEST_CASE("DCK nodes cost exactly what the 3x3 node costs") {
  // Eq-parity: realizing K in {5,7,9} as a dilated 3x3 leaves params and
  // MACs identical to the K=3 realization.
  for (const std::int64_t k : {5, 7, 9}) {
    FreConvConfig big;
    big.in_channels = 64;
    big.out_channels = 64;
    big.n_split = 2;
    big.kernel_set = {k};
    big.mode = KernelMode::kDck;
    FreConvConfig three = big;
    three.kernel_set = {3};
    CHECK(freconv_param_count(big) == freconv_param_count(three));
    CHECK(freconv_mac_count(big, 14, 14) == freconv_mac_count(three, 14, 14));
  }
}

TEST_CASE("reduction of a report against itself is zero") {
  const CostReport r = count_cost(build_arch(ArchFamily::kResNet50, ArchVariant::kBaseline, {}));
  const ReductionReport red = reduction_report(r, r);
  CHECK(red.param_delta_pct == 0.0);
  CHECK(red.macs_delta_pct == 0.0);
}

TEST_CASE("percentage arithmetic reproduces the published reductions exactly") {
  // Each pair is (base, variant) in the published absolute units.
  CHECK(delta_pct(25560000, 18710000) == -26.80);
  CHECK(delta_pct(4140, 3070) == -25.85);
  CHECK(delta_pct(138370000, 129590000) == -6.35);
  CHECK(delta_pct(15530, 7670) == -50.61);
  CHECK(delta_pct(7980000, 6890000) == -13.66);
  CHECK(delta_pct(2880, 2330) == -19.10);
}

TEST_CASE("reduction report carries both totals") {
  const ReductionReport r = reduction_report(totals_only(1000, 2000), totals_only(900, 1500));
  CHECK(r.param_delta_pct == -10.0);
  CHECK(r.macs_delta_pct == -25.0);
  CHECK_THROWS_AS(reduction_report(totals_only(0, 1), totals_only(1, 1)), ParamError);
}

TEST_CASE("freconv cost rows stay inside the published tolerance band") {
  struct Row {
    ArchFamily family;
    KernelMode mode;
    std::int64_t n;
    double params_m;
    double macs_g;
  };
  const std::vector<Row> rows = {
      {ArchFamily::kResNet50, KernelMode::kGck, 2, 18.71, 3.07},
      {ArchFamily::kResNet50, KernelMode::kDck, 2, 18.50, 2.98},
      {ArchFamily::kResNet50, KernelMode::kGck, 4, 16.56, 2.69},
      {ArchFamily::kVgg16, KernelMode::kGck, 2, 129.59, 7.67},
      {ArchFamily::kDenseNet121, KernelMode::kGck, 2, 6.89, 2.33},
  };
  for (const Row& row : rows) {
    FreConvBuildOptions options;
    options.mode = row.mode;
    options.n_split = row.n;
    const CostReport r = count_cost(build_arch(row.family, ArchVariant::kFreConv, options));
    CHECK(std::abs(r.total_params / 1e6 - row.params_m) / row.params_m < 0.10);
    CHECK(std::abs(r.total_macs / 1e9 - row.macs_g) / row.macs_g < 0.10);
  }
}

TEST_CASE("report renderers emit every layer and the totals") {
  const ArchGraph g = build_arch(ArchFamily::kResNet50, ArchVariant::kBaseline, {}, 10, 64);
  const CostReport r = count_cost(g);
  std::ostringstream table, csv;
  write_cost_table(table, r);
  write_cost_csv(csv, r);
  CHECK(table.str().find("TOTAL") != std::string::npos);
  CHECK(csv.str().find("stem.conv,conv,9408,") != std::string::npos);
  const std::string json = cost_report_json(r);
  CHECK(json.find("\"total_params\"") != std::string::npos);
  // Report metadata logs the counting conventions and design deltas.
  CHECK(!r.notes.empty());
  CHECK(json.find("\"notes\"") != std::string::npos);
}
