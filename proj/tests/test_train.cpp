#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "freconv/gradcheck.hpp"
#include "freconv/spectrum.hpp"
#include "freconv/train.hpp"
#include "test_util.hpp"

using namespace freconv;
using namespace freconv::testutil;

namespace {

SynthSpec tiny_spec(std::int64_t per_class = 40, std::uint64_t seed = 5) {
  SynthSpec spec;
  spec.image_size = 32;
  spec.channels = 4;
  spec.samples_per_class = per_class;
  spec.noise_sigma = 0.1;
  spec.seed = seed;
  return spec;
}

double plane_band_ratio(const Tensor<float>& images, std::int64_t index) {
  std::vector<double> plane(static_cast<std::size_t>(images.h() * images.w()));
  const float* src = images.data.data() + images.offset(index, 0, 0, 0);
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = src[i];
  return band_energy_ratio(fft2_energy(plane, images.h(), images.w()), 0.5);
}

}  // namespace

TEST_CASE("synthetic dataset is bitwise deterministic and balanced") {
  const SynthSpec spec = tiny_spec();
  const SynthDataset<float> a = gen_synth_dataset<float>(spec);
  const SynthDataset<float> b = gen_synth_dataset<float>(spec);
  CHECK(bitwise_equal(a.images, b.images));
  CHECK(a.labels == b.labels);

  std::int64_t zeros = 0;
  for (auto v : a.labels) zeros += v == 0;
  CHECK(zeros == spec.samples_per_class);

  SynthSpec other = spec;
  other.seed = spec.seed + 1;
  const SynthDataset<float> c = gen_synth_dataset<float>(other);
  CHECK(!bitwise_equal(a.images, c.images));
}

TEST_CASE("class frequency bands separate as constructed") {
  const SynthSpec spec = tiny_spec(100, 9);  // 200 samples
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  double low_mean = 0.0, high_mean = 0.0;
  std::int64_t in_band = 0;
  for (std::int64_t i = 0; i < ds.images.n(); ++i) {
    const double ratio = plane_band_ratio(ds.images, i);
    if (ds.labels[static_cast<std::size_t>(i)] == 0) {
      low_mean += ratio;
      in_band += ratio < 1.0;
    } else {
      high_mean += ratio;
      in_band += ratio > 1.0;
    }
  }
  low_mean /= spec.samples_per_class;
  high_mean /= spec.samples_per_class;
  CHECK(low_mean < high_mean);
  // The class property holds for at least 95% of generated images.
  CHECK(static_cast<double>(in_band) >= 0.95 * static_cast<double>(ds.images.n()));
}

TEST_CASE("toy net validates and runs the stage schedule") {
  const ArchGraph g = build_toy_net(tiny_spec());
  CHECK(g.find("fre1")->freconv.kernel_set == stage_kernel_schedule(1));
  CHECK(g.find("fre2")->freconv.kernel_set == stage_kernel_schedule(2));
  CHECK_NOTHROW(propagate_shapes(g));
}

TEST_CASE("zero learning rate changes nothing but running stats") {
  const SynthSpec spec = tiny_spec(8);
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);
  GraphParams<float> params = init_graph_params<float>(g, 1);
  GraphParams<float> before = params;

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.learning_rate = 0.0;
  train(g, params, ds, tc);

  auto entries = collect_params(g, params);
  auto entries_before = collect_params(g, before);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].trainable) {
      CHECK(*entries[i].values == *entries_before[i].values);
    }
  }
  // Running stats did move.
  bool stats_moved = false;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!entries[i].trainable && *entries[i].values != *entries_before[i].values)
      stats_moved = true;
  CHECK(stats_moved);
}

TEST_CASE("training is deterministic and the loss trends down") {
  const SynthSpec spec = tiny_spec(24, 3);
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);

  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 16;
  tc.learning_rate = 0.05;
  tc.seed = 2;

  GraphParams<float> p1 = init_graph_params<float>(g, tc.seed);
  const TrainResult r1 = train(g, p1, ds, tc);
  GraphParams<float> p2 = init_graph_params<float>(g, tc.seed);
  const TrainResult r2 = train(g, p2, ds, tc);
  CHECK(r1.epoch_losses == r2.epoch_losses);

  auto e1 = collect_params(g, p1);
  auto e2 = collect_params(g, p2);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(*e1[i].values == *e2[i].values);

  CHECK(r1.epoch_losses.back() < r1.epoch_losses.front());
}

TEST_CASE("random-init accuracy sits at chance level") {
  const SynthSpec spec = tiny_spec(25, 13);
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);
  double lo = 1.0, hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GraphParams<float> params = init_graph_params<float>(g, seed);
    const double acc = evaluate(g, params, ds);
    lo = std::min(lo, acc);
    hi = std::max(hi, acc);
    CHECK(acc >= 0.3);
    CHECK(acc <= 0.7);
  }
  CHECK(lo <= hi);
}

TEST_CASE("evaluation is invariant to dataset order") {
  const SynthSpec spec = tiny_spec(16, 21);
  SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);
  GraphParams<float> params = init_graph_params<float>(g, 4);
  const double acc = evaluate(g, params, ds);

  // Reverse the sample order.
  SynthDataset<float> rev = ds;
  const std::int64_t n = ds.images.n();
  const std::int64_t sample = ds.images.c() * ds.images.h() * ds.images.w();
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(ds.images.data.data() + i * sample, sample,
                rev.images.data.data() + (n - 1 - i) * sample);
    rev.labels[static_cast<std::size_t>(n - 1 - i)] = ds.labels[static_cast<std::size_t>(i)];
  }
  CHECK(evaluate(g, params, rev) == acc);
}

TEST_CASE("a two-sample set is memorized to accuracy 1.0") {
  const SynthSpec spec = tiny_spec(1, 31);
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);
  GraphParams<float> params = init_graph_params<float>(g, 6);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 2;
  tc.learning_rate = 0.05;
  train(g, params, ds, tc);
  CHECK(evaluate(g, params, ds) == 1.0);
}

TEST_CASE("checkpoints round-trip bitwise") {
  TempDir dir("ckpt");
  const SynthSpec spec = tiny_spec(6, 17);
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);
  GraphParams<float> params = init_graph_params<float>(g, 8);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 6;
  const TrainResult result = train(g, params, ds, tc);
  save_checkpoint(dir.path(), g, params, tc, spec, result);

  Checkpoint ck = load_checkpoint(dir.path());
  CHECK(ck.graph == g);
  CHECK(ck.data_spec == spec);
  CHECK(ck.epoch_losses == result.epoch_losses);
  auto a = collect_params(g, params);
  auto b = collect_params(ck.graph, ck.params);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(*a[i].values == *b[i].values);
  }
  CHECK(evaluate(ck.graph, ck.params, ds) == evaluate(g, params, ds));
}

TEST_CASE("divergence aborts with diagnostics") {
  const SynthSpec spec = tiny_spec(8, 41);
  const SynthDataset<float> ds = gen_synth_dataset<float>(spec);
  const ArchGraph g = build_toy_net(spec);
  GraphParams<float> params = init_graph_params<float>(g, 2);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 8;
  tc.learning_rate = 1e8;
  try {
    train(g, params, ds, tc);
    FAIL("expected divergence");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("gradient check suite passes in double precision") {
  const GradCheckReport report = grad_check_suite(7);
  int total_cases = 0;
  for (const auto& r : report.results) {
    INFO(r.op, " worst=", r.worst, " err=", r.max_rel_err);
    CHECK(r.max_rel_err < report.threshold);
    total_cases += r.cases;
  }
  CHECK(total_cases >= 100);
  CHECK(report.passed());

  // Deterministic per seed.
  const GradCheckReport again = grad_check_suite(7);
  for (std::size_t i = 0; i < report.results.size(); ++i)
    CHECK(report.results[i].max_rel_err == again.results[i].max_rel_err);
}
