#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "freconv/arch.hpp"
#include "freconv/executor.hpp"
#include "freconv/parallel.hpp"
#include "test_util.hpp"

using namespace freconv;
using namespace freconv::testutil;

TEST_CASE("stage kernel schedule drops the largest kernel per stage") {
  CHECK(stage_kernel_schedule(1) == std::vector<std::int64_t>{3, 5, 7, 9});
  CHECK(stage_kernel_schedule(2) == std::vector<std::int64_t>{3, 5, 7});
  CHECK(stage_kernel_schedule(3) == std::vector<std::int64_t>{3, 5});
  CHECK(stage_kernel_schedule(4) == std::vector<std::int64_t>{3});
  CHECK(stage_kernel_schedule(6) == std::vector<std::int64_t>{3});
  CHECK_THROWS_AS(stage_kernel_schedule(0), ParamError);
}

namespace {

std::int64_t count_kind(const ArchGraph& g, NodeKind kind) {
  return std::count_if(g.nodes.begin(), g.nodes.end(),
                       [&](const LayerNode& n) { return n.kind == kind; });
}

std::int64_t count_max_pools(const ArchGraph& g) {
  return std::count_if(g.nodes.begin(), g.nodes.end(), [&](const LayerNode& n) {
    return n.kind == NodeKind::kPool && n.pool.kind == PoolSpec::Kind::kMax;
  });
}

}  // namespace

TEST_CASE("resnet50 baseline has the canonical conv structure") {
  const ArchGraph g = build_arch(ArchFamily::kResNet50, ArchVariant::kBaseline, {});
  // 1 stem + 16 blocks x 3 + 4 projection shortcuts = 53 convolutions.
  CHECK(count_kind(g, NodeKind::kConv) == 53);
  CHECK(count_kind(g, NodeKind::kFreConv) == 0);
  CHECK(count_max_pools(g) == 1);
  const auto shapes = propagate_shapes(g);
  CHECK(shapes.at("gap") == Shape4{1, 2048, 1, 1});
  CHECK(shapes.at("fc") == Shape4{1, 1000, 1, 1});
}

TEST_CASE("resnet50 freconv variant replaces each 3x3 conv and the max pool") {
  const ArchGraph g = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, {});
  CHECK(count_kind(g, NodeKind::kFreConv) == 16);  // one per bottleneck block
  CHECK(count_max_pools(g) == 0);
  CHECK(g.find("stem.pool.conv") != nullptr);
  // Stem 7x7 is kept as a plain conv.
  CHECK(g.find("stem.conv")->kind == NodeKind::kConv);
  CHECK(g.find("stem.conv")->conv.kernel == 7);
  // The variant type-checks end to end.
  CHECK_NOTHROW(propagate_shapes(g));
}

TEST_CASE("freconv kernel sets follow the stage schedule") {
  const ArchGraph g = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, {});
  for (const auto& n : g.nodes)
    if (n.kind == NodeKind::kFreConv)
      CHECK(n.freconv.kernel_set == stage_kernel_schedule(n.stage));
}

TEST_CASE("vgg16 freconv variant has no max pools and keeps the image conv") {
  const ArchGraph base = build_arch(ArchFamily::kVgg16, ArchVariant::kBaseline, {});
  CHECK(count_kind(base, NodeKind::kConv) == 13);
  CHECK(count_max_pools(base) == 5);

  const ArchGraph g = build_arch(ArchFamily::kVgg16, ArchVariant::kFreConv, {});
  CHECK(count_max_pools(g) == 0);
  CHECK(count_kind(g, NodeKind::kFreConv) == 12);  // conv1_1 reads the raw image
  CHECK(g.find("conv1_1")->kind == NodeKind::kConv);
  CHECK_NOTHROW(propagate_shapes(g));
}

TEST_CASE("densenet121 freconv variant replaces the dense-layer 3x3 convs") {
  const ArchGraph base = build_arch(ArchFamily::kDenseNet121, ArchVariant::kBaseline, {});
  CHECK(count_max_pools(base) == 1);
  const ArchGraph g = build_arch(ArchFamily::kDenseNet121, ArchVariant::kFreConv, {});
  CHECK(count_kind(g, NodeKind::kFreConv) == 6 + 12 + 24 + 16);
  CHECK(count_max_pools(g) == 0);
  // Transitions keep their 1x1 convs and average pools.
  CHECK(g.find("tr1.conv")->kind == NodeKind::kConv);
  CHECK(g.find("tr1.pool")->pool.kind == PoolSpec::Kind::kAvg);
  CHECK_NOTHROW(propagate_shapes(g));
}

TEST_CASE("pool-ablation toggle keeps the max pools") {
  FreConvBuildOptions options;
  options.downsample = Downsample::kPool;
  const ArchGraph g = build_arch(ArchFamily::kVgg16, ArchVariant::kFreConv, options);
  CHECK(count_max_pools(g) == 5);
}

TEST_CASE("ablation toggles change only freconv node internals") {
  FreConvBuildOptions attention, direct;
  direct.split_mode = SplitMode::kDirect;
  const ArchGraph a = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, attention);
  const ArchGraph b = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, direct);
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].id == b.nodes[i].id);
    CHECK(a.nodes[i].kind == b.nodes[i].kind);
    CHECK(a.nodes[i].inputs == b.nodes[i].inputs);
  }
}

TEST_CASE("graph validation rejects malformed graphs") {
  ArchGraph g;
  g.name = "bad";
  g.input_shape = {1, 4, 4};
  g.classes = 2;
  LayerNode n;
  n.id = "a";
  n.kind = NodeKind::kGap;
  n.inputs = {"missing"};
  g.nodes = {n};
  CHECK_THROWS_AS(g.validate(), ConfigError);

  n.inputs = {"input"};
  g.nodes = {n, n};  // duplicate id
  CHECK_THROWS_AS(g.validate(), ConfigError);

  LayerNode m = n;
  m.id = "b";
  m.inputs = {"input"};
  g.nodes = {n, m};  // two terminals
  CHECK_THROWS_AS(g.validate(), ConfigError);

  g.nodes = {};
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("execute composes node oracles on a tiny graph") {
  // conv (all-ones 3x3, pad 0) then gap over the 2x2 result.
  ArchGraph g;
  g.name = "tiny";
  g.input_shape = {1, 4, 4};
  g.classes = 1;
  LayerNode conv;
  conv.id = "c";
  conv.kind = NodeKind::kConv;
  conv.inputs = {"input"};
  conv.conv = ConvSpec{1, 1, 3, 1, 0, 1, 1, false};
  LayerNode gap;
  gap.id = "g";
  gap.kind = NodeKind::kGap;
  gap.inputs = {"c"};
  g.nodes = {conv, gap};
  g.validate();

  GraphParams<double> params = init_graph_params<double>(g, 1);
  std::fill(params.nodes.at("c").conv.weights.data.begin(),
            params.nodes.at("c").conv.weights.data.end(), 1.0);
  Tensor<double> x(1, 1, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) x.data[i] = static_cast<double>(i);
  const Tensor<double> y = execute(g, x, params, Mode::kEval);
  // Each 3x3 window sum: 45, 54, 81, 90 -> mean 67.5.
  CHECK(y.shape == Shape4{1, 1, 1, 1});
  CHECK(y.data[0] == doctest::Approx(67.5));
}

TEST_CASE("eval execution is bitwise pure") {
  const ArchGraph g = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, {}, 10, 64);
  GraphParams<float> params = init_graph_params<float>(g, 3);
  Tensor<float> x(1, 3, 64, 64);
  Rng rng(5);
  seeded_fill(rng, x, Dist::normal(0.0, 1.0));
  const Tensor<float> a = execute(g, x, params, Mode::kEval);
  const Tensor<float> b = execute(g, x, params, Mode::kEval);
  CHECK(a.shape == Shape4{1, 10, 1, 1});
  CHECK(bitwise_equal(a, b));
  for (float v : a.data) CHECK(std::isfinite(v));
}

TEST_CASE("architecture JSON round-trips losslessly") {
  for (const ArchVariant variant : {ArchVariant::kBaseline, ArchVariant::kFreConv}) {
    const ArchGraph g = build_arch(ArchFamily::kDenseNet121, variant, {});
    const ArchGraph back = graph_from_json(graph_to_json(g));
    CHECK(back == g);
  }
  TempDir dir("archjson");
  const ArchGraph g = build_arch(ArchFamily::kVgg16, ArchVariant::kFreConv, {});
  write_graph(dir.file("a.json"), g);
  CHECK(read_graph(dir.file("a.json")) == g);
}

TEST_CASE("graph JSON parse failures carry format errors") {
  CHECK_THROWS_AS(graph_from_json("not json"), FormatError);
  CHECK_THROWS_AS(graph_from_json("{\"name\":\"x\"}"), FormatError);
}

TEST_CASE("execute errors carry the node id") {
  const ArchGraph g = build_arch(ArchFamily::kResNet50, ArchVariant::kBaseline, {}, 10, 64);
  GraphParams<float> params = init_graph_params<float>(g, 1);
  Tensor<float> wrong(1, 4, 64, 64);
  CHECK_THROWS_AS(execute(g, wrong, params, Mode::kEval), ShapeError);
}

TEST_CASE("executor backward matches finite differences across node kinds") {
  // One graph touching conv (with bias), batchnorm, sigmoid, max/avg pool,
  // concat, add, freconv, gap, and the linear head.
  ArchGraph g;
  g.name = "mixed";
  g.input_shape = {4, 8, 8};
  g.classes = 3;
  auto node = [&](const std::string& id, NodeKind kind,
                  std::vector<std::string> inputs) -> LayerNode& {
    LayerNode n;
    n.id = id;
    n.kind = kind;
    n.inputs = std::move(inputs);
    g.nodes.push_back(std::move(n));
    return g.nodes.back();
  };
  node("c1", NodeKind::kConv, {"input"}).conv = ConvSpec{4, 4, 3, 1, 1, 1, 1, true};
  node("b1", NodeKind::kBatchNorm, {"c1"}).bn_channels = 4;
  node("s1", NodeKind::kActivation, {"b1"}).activation = Activation::kSigmoid;
  node("c2", NodeKind::kConv, {"input"}).conv = ConvSpec{4, 4, 1, 1, 0, 1, 1, false};
  node("cat", NodeKind::kConcat, {"s1", "c2"});
  node("mp", NodeKind::kPool, {"cat"}).pool = PoolSpec{PoolSpec::Kind::kMax, 2, 2, 0};
  {
    LayerNode& f = node("fre", NodeKind::kFreConv, {"mp"});
    f.freconv.in_channels = 8;
    f.freconv.out_channels = 8;
    f.freconv.n_split = 2;
    f.freconv.kernel_set = {3};
    f.freconv.mode = KernelMode::kDck;
    f.freconv.attn_reduction = 4;
  }
  node("c3", NodeKind::kConv, {"mp"}).conv = ConvSpec{8, 8, 1, 1, 0, 1, 1, false};
  node("add", NodeKind::kAdd, {"fre", "c3"});
  node("ap", NodeKind::kPool, {"add"}).pool = PoolSpec{PoolSpec::Kind::kAvg, 2, 2, 0};
  node("gap", NodeKind::kGap, {"ap"});
  LayerNode& fc = node("fc", NodeKind::kLinear, {"gap"});
  fc.linear_in = 8;
  fc.linear_out = 3;
  g.validate();
  REQUIRE_NOTHROW(propagate_shapes(g));

  GraphParams<double> params = init_graph_params<double>(g, 42);
  Tensor<double> x(2, 4, 8, 8);
  Rng rng(9);
  seeded_fill(rng, x, Dist::uniform(-1.0, 1.0));
  const std::vector<std::int64_t> labels = {1, 2};

  ExecTrace<double> trace;
  Tensor<double> grad_logits;
  cross_entropy(execute(g, x, params, Mode::kTrain, &trace), labels, &grad_logits);
  GraphParams<double> grads = clone_zeroed(g, params);
  const Tensor<double> grad_x = execute_backward(g, params, trace, grad_logits, grads);

  auto loss = [&] {
    return cross_entropy(execute(g, x, params, Mode::kTrain), labels, (Tensor<double>*)nullptr);
  };
  const double eps = 1e-5;
  auto fd_check = [&](const std::string& name, double* data, std::size_t len,
                      const double* analytic) {
    for (std::size_t i = 0; i < len; ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss();
      data[i] = saved - eps;
      const double down = loss();
      data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      INFO(name, "[", i, "]");
      REQUIRE(rel_err(analytic[i], numeric) < 1e-4);
    }
  };
  fd_check("input", x.data.data(), x.size(), grad_x.data.data());
  auto p_entries = collect_params(g, params);
  auto g_entries = collect_params(g, grads);
  REQUIRE(p_entries.size() == g_entries.size());
  for (std::size_t i = 0; i < p_entries.size(); ++i) {
    if (!p_entries[i].trainable) continue;
    fd_check(p_entries[i].name, p_entries[i].values->data(), p_entries[i].values->size(),
             g_entries[i].values->data());
  }
}

TEST_CASE("worker count never changes results") {
  ConvSpec spec{8, 8, 3, 1, 1, 1, 2, true};
  Rng rng(31);
  Tensor<float> x(5, 8, 12, 12);
  seeded_fill(rng, x, Dist::normal(0.0, 1.0));
  ConvParams<float> params = ConvParams<float>::zeros(spec);
  seeded_fill(rng, params.weights, Dist::normal(0.0, 0.2));
  for (auto& b : params.bias) b = static_cast<float>(rng.uniform(-0.5, 0.5));

  set_num_threads(1);
  const Tensor<float> serial = conv2d_forward(x, spec, params);
  set_num_threads(4);
  const Tensor<float> threaded = conv2d_forward(x, spec, params);
  set_num_threads(1);
  CHECK(bitwise_equal(serial, threaded));
}
