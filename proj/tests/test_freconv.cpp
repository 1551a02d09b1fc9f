#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "freconv/arch.hpp"
#include "freconv/freconv_layer.hpp"
#include "test_util.hpp"

using namespace freconv;
using namespace freconv::testutil;

namespace {

FreConvConfig small_config() {
  FreConvConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.n_split = 2;
  cfg.kernel_set = {3, 5};
  cfg.mode = KernelMode::kDck;
  cfg.attn_reduction = 4;
  return cfg;
}

Tensor<double> random_tensor(Rng& rng, const Shape4& shape) {
  Tensor<double> t(shape);
  seeded_fill(rng, t, Dist::uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("config validation rejects degenerate setups") {
  FreConvConfig cfg = small_config();
  cfg.in_channels = 2;  // N >= C
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config();
  cfg.in_channels = 6;  // not divisible by N... 6 % 2 == 0, force N=4
  cfg.n_split = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config();
  cfg.attn_reduction = 3;  // does not divide branch channels 4
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config();
  cfg.kernel_set = {5, 3};  // not ascending
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config();
  cfg.kernel_set.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("parameter shapes are derivable from the config alone") {
  // The paper's variant grid: N in {2,4}, both modes, all stage kernel sets.
  for (const std::int64_t n : {2, 4}) {
    for (const KernelMode mode : {KernelMode::kDck, KernelMode::kGck}) {
      for (std::int64_t stage = 1; stage <= 4; ++stage) {
        FreConvConfig cfg;
        cfg.in_channels = 64;
        cfg.out_channels = 64;
        cfg.n_split = n;
        cfg.kernel_set = stage_kernel_schedule(stage);
        cfg.mode = mode;
        cfg.attn_reduction = 16;
        REQUIRE_NOTHROW(cfg.validate());

        Rng rng(1234);
        FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
        const auto d = cfg.derived_convs();
        REQUIRE(params.multiscale.size() == d.multiscale.size());
        for (std::size_t i = 0; i < d.multiscale.size(); ++i)
          REQUIRE(params.multiscale[i].weights.shape == d.multiscale[i].weight_shape());
        REQUIRE(params.hfe_pointwise.weights.shape == d.hfe_pointwise.weight_shape());
        REQUIRE(params.lfe.weights.shape == d.lfe.weight_shape());

        // Forward and backward run without shape errors.
        Tensor<double> x(1, 64, 6, 6);
        Rng xr(7);
        seeded_fill(xr, x, Dist::normal(0.0, 1.0));
        FreConvState<double> state = FreConvState<double>::fresh(cfg);
        FreConvCache<double> cache;
        const Tensor<double> y = freconv_forward(x, cfg, params, state, Mode::kTrain, &cache);
        REQUIRE(y.shape == Shape4{1, 64, 6, 6});
        Tensor<double> gout(y.shape, 1.0);
        REQUIRE_NOTHROW(freconv_backward(cfg, params, state, cache, gout));
      }
    }
  }
}

TEST_CASE("direct split sums channel chunks") {
  FreConvConfig cfg;
  cfg.in_channels = 4;
  cfg.out_channels = 4;
  cfg.n_split = 2;
  cfg.kernel_set = {3};
  cfg.attn_reduction = 2;
  cfg.split_mode = SplitMode::kDirect;
  cfg.mode = KernelMode::kDck;

  Tensor<double> x(1, 4, 2, 2);
  for (std::int64_t c = 0; c < 4; ++c)
    for (std::int64_t s = 0; s < 4; ++s) x.data[x.offset(0, c, 0, 0) + s] = double(c + 1);

  Rng rng(5);
  const FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  auto [top, bottom] = feature_split(x, cfg, params);
  CHECK(top.shape == Shape4{1, 2, 2, 2});
  // Chunks {c0,c1} and {c2,c3}: sums are {1+3, 2+4}.
  for (std::int64_t s = 0; s < 4; ++s) {
    CHECK(top.data[top.offset(0, 0, 0, 0) + s] == doctest::Approx(4.0));
    CHECK(top.data[top.offset(0, 1, 0, 0) + s] == doctest::Approx(6.0));
  }
  CHECK(bitwise_equal(top, bottom));
}

TEST_CASE("direct split conserves the channel sum at every site") {
  FreConvConfig cfg = small_config();
  cfg.split_mode = SplitMode::kDirect;
  Rng rng(6);
  const FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  const Tensor<double> x = random_tensor(rng, {2, 8, 3, 3});
  auto [top, bottom] = feature_split(x, cfg, params);
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t s = 0; s < 9; ++s) {
      double full = 0.0, reduced = 0.0;
      for (std::int64_t c = 0; c < 8; ++c) full += x.data[x.offset(i, c, 0, 0) + s];
      for (std::int64_t c = 0; c < 4; ++c) reduced += top.data[top.offset(i, c, 0, 0) + s];
      CHECK(full == doctest::Approx(reduced).epsilon(1e-12));
    }
}

TEST_CASE("attention split with forced gate value scales the chunk sum") {
  FreConvConfig cfg;
  cfg.in_channels = 4;
  cfg.out_channels = 4;
  cfg.n_split = 2;
  cfg.kernel_set = {3};
  cfg.attn_reduction = 2;
  cfg.mode = KernelMode::kDck;

  Rng rng(9);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  // Zero the attention convs and pin the expand bias at logit(a).
  const double a = 0.73;
  const double logit = std::log(a / (1.0 - a));
  for (auto* conv : {&params.attn_a1, &params.attn_a2, &params.attn_b1, &params.attn_b2}) {
    std::fill(conv->weights.data.begin(), conv->weights.data.end(), 0.0);
    std::fill(conv->bias.begin(), conv->bias.end(), 0.0);
  }
  std::fill(params.attn_a2.bias.begin(), params.attn_a2.bias.end(), logit);

  const double v = 1.7;
  const Tensor<double> x({1, 4, 3, 3}, v);
  auto [top, bottom] = feature_split(x, cfg, params);
  // alpha_j = a for all j: every x_top element is N * a * v = 2av.
  for (double e : top.data) CHECK(e == doctest::Approx(2.0 * a * v).epsilon(1e-12));
  // beta path stayed at sigmoid(0) = 0.5.
  for (double e : bottom.data) CHECK(e == doctest::Approx(2.0 * 0.5 * v).epsilon(1e-12));
}

TEST_CASE("attention gates lie strictly inside (0,1)") {
  FreConvConfig cfg = small_config();
  Rng rng(10);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  const Tensor<double> x = random_tensor(rng, {3, 8, 5, 5});
  SplitCache<double> cache;
  feature_split(x, cfg, params, &cache);
  for (double g : cache.alpha.data) {
    CHECK(g > 0.0);
    CHECK(g < 1.0);
  }
  for (double g : cache.beta.data) {
    CHECK(g > 0.0);
    CHECK(g < 1.0);
  }
}

TEST_CASE("DoE-initialized HFE kills spatially constant input in the interior") {
  for (const KernelMode mode : {KernelMode::kDck, KernelMode::kGck}) {
    FreConvConfig cfg;
    cfg.in_channels = 8;
    cfg.out_channels = 8;
    cfg.n_split = 2;
    cfg.kernel_set = stage_kernel_schedule(1);  // {3,5,7,9}
    cfg.mode = mode;
    cfg.attn_reduction = 4;

    Rng rng(77);
    const FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
    // Per-channel constants; zero-DC holds per (out,in) channel pair.
    Tensor<double> x_bottom(1, 4, 24, 24);
    for (std::int64_t c = 0; c < 4; ++c)
      for (std::int64_t s = 0; s < 24 * 24; ++s)
        x_bottom.data[x_bottom.offset(0, c, 0, 0) + s] = 0.5 + 0.25 * double(c);

    const Tensor<double> high = hfe_forward(x_bottom, cfg, params);
    // Interior sites see the full tap stencil (max pad is 4 for K=9).
    double worst = 0.0;
    for (std::int64_t c = 0; c < 8; ++c)
      for (std::int64_t y = 4; y < 20; ++y)
        for (std::int64_t x = 4; x < 20; ++x)
          worst = std::max(worst, std::abs(high.at(0, c, y, x)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("zero-initialized HFE sub-convs give a zero branch") {
  FreConvConfig cfg = small_config();
  cfg.kernel_set = {3};
  Rng rng(3);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  std::fill(params.multiscale[0].weights.data.begin(), params.multiscale[0].weights.data.end(),
            0.0);
  std::fill(params.hfe_pointwise.weights.data.begin(), params.hfe_pointwise.weights.data.end(),
            0.0);
  const Tensor<double> x = random_tensor(rng, {1, 4, 5, 5});
  const Tensor<double> high = hfe_forward(x, cfg, params);
  for (double v : high.data) CHECK(v == 0.0);
}

TEST_CASE("HFE respects the stride shape contract") {
  FreConvConfig cfg = small_config();
  cfg.stride = 2;
  cfg.out_channels = 6;
  Rng rng(4);
  const FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  const Tensor<double> x = random_tensor(rng, {1, 4, 8, 8});
  const Tensor<double> high = hfe_forward(x, cfg, params);
  CHECK(high.shape == Shape4{1, 6, 4, 4});
}

TEST_CASE("LFE is exactly a pointwise convolution") {
  FreConvConfig cfg = small_config();
  Rng rng(8);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  const Tensor<double> x_top = random_tensor(rng, {2, 4, 5, 5});
  const Tensor<double> low = lfe_forward(x_top, cfg, params);
  const Tensor<double> ref =
      conv2d_forward_direct(x_top, cfg.derived_convs().lfe, params.lfe);
  CHECK(max_rel_diff(low, ref) < 1e-12);

  // Identity pointwise weights reproduce the input (square case).
  cfg.out_channels = 4;
  FreConvParams<double> id = init_freconv_params<double>(cfg, rng);
  std::fill(id.lfe.weights.data.begin(), id.lfe.weights.data.end(), 0.0);
  for (std::int64_t c = 0; c < 4; ++c) id.lfe.weights.at(c, c, 0, 0) = 1.0;
  CHECK(bitwise_equal(lfe_forward(x_top, cfg, id), x_top));

  std::fill(id.lfe.weights.data.begin(), id.lfe.weights.data.end(), 0.0);
  for (double v : lfe_forward(x_top, cfg, id).data) CHECK(v == 0.0);
}

TEST_CASE("module forward: zero input gives zero output") {
  FreConvConfig cfg = small_config();
  Rng rng(12);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  FreConvState<double> state = FreConvState<double>::fresh(cfg);
  const Tensor<double> x({2, 8, 6, 6}, 0.0);
  const Tensor<double> y = freconv_forward(x, cfg, params, state, Mode::kTrain);
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("zeroing one branch leaves the other") {
  FreConvConfig cfg = small_config();
  Rng rng(14);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  const Tensor<double> x = random_tensor(rng, {2, 8, 6, 6});

  FreConvParams<double> lfe_zero = params;
  std::fill(lfe_zero.lfe.weights.data.begin(), lfe_zero.lfe.weights.data.end(), 0.0);
  FreConvState<double> s1 = FreConvState<double>::fresh(cfg);
  const Tensor<double> out = freconv_forward(x, cfg, lfe_zero, s1, Mode::kEval);

  // Expected: batch-normed HFE branch alone (eval mode, fresh stats).
  auto [top, bottom] = feature_split(x, cfg, params);
  Tensor<double> high = hfe_forward(bottom, cfg, params);
  BnStats<double> fresh = BnStats<double>::fresh(cfg.out_channels);
  const Tensor<double> expect =
      batchnorm_forward(high, params.bn_hfe, fresh, Mode::kEval);
  CHECK(max_rel_diff(out, expect) < 1e-12);
}

TEST_CASE("same-branch mode makes the two branches identical") {
  FreConvConfig cfg = small_config();
  cfg.branch_mode = BranchMode::kSame;
  cfg.split_mode = SplitMode::kDirect;  // identical branch inputs
  cfg.kernel_set.clear();
  Rng rng(15);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  CHECK(bitwise_equal(params.same_hfe.weights, params.same_lfe.weights));

  const Tensor<double> x = random_tensor(rng, {1, 8, 6, 6});
  FreConvState<double> state = FreConvState<double>::fresh(cfg);
  FreConvCache<double> cache;
  freconv_forward(x, cfg, params, state, Mode::kTrain, &cache);
  CHECK(bitwise_equal(cache.hfe_raw, cache.lfe_raw));
}

TEST_CASE("module backward matches finite differences on the spec case") {
  // C=8, N=2, kernels {3,5}, H=W=6, double precision.
  FreConvConfig cfg = small_config();
  Rng rng(16);
  FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
  Tensor<double> x = random_tensor(rng, {1, 8, 6, 6});
  const Tensor<double> r = random_tensor(rng, {1, 8, 6, 6});

  FreConvState<double> state = FreConvState<double>::fresh(cfg);
  FreConvCache<double> cache;
  freconv_forward(x, cfg, params, state, Mode::kTrain, &cache);
  const FreConvGrads<double> g = freconv_backward(cfg, params, state, cache, r);

  auto loss = [&] {
    FreConvState<double> fresh = FreConvState<double>::fresh(cfg);
    const Tensor<double> y = freconv_forward(x, cfg, params, fresh, Mode::kTrain);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y.data[i] * r.data[i];
    return acc;
  };
  const double eps = 1e-5;
  auto check_var = [&](const char* name, double* data, std::size_t len,
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
  check_var("x", x.data.data(), x.size(), g.grad_x.data.data());
  check_var("lfe.w", params.lfe.weights.data.data(), params.lfe.weights.size(),
            g.params.lfe.weights.data.data());
  check_var("ms3.w", params.multiscale[0].weights.data.data(),
            params.multiscale[0].weights.size(), g.params.multiscale[0].weights.data.data());
  check_var("hfe_pw.w", params.hfe_pointwise.weights.data.data(),
            params.hfe_pointwise.weights.size(), g.params.hfe_pointwise.weights.data.data());
  check_var("attn_a1.w", params.attn_a1.weights.data.data(), params.attn_a1.weights.size(),
            g.params.attn_a1.weights.data.data());
  check_var("bn_hfe.gamma", params.bn_hfe.gamma.data(), params.bn_hfe.gamma.size(),
            g.params.bn_hfe.gamma.data());
}
