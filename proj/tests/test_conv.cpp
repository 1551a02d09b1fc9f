#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "freconv/conv.hpp"
#include "test_util.hpp"

using namespace freconv;
using namespace freconv::testutil;

namespace {

ConvParams<double> random_params(Rng& rng, const ConvSpec& spec) {
  ConvParams<double> p = ConvParams<double>::zeros(spec);
  for (auto& v : p.weights.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : p.bias) v = rng.uniform(-0.5, 0.5);
  return p;
}

Tensor<double> random_input(Rng& rng, const Shape4& shape) {
  Tensor<double> t(shape);
  seeded_fill(rng, t, Dist::uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("identity 1x1 kernel reproduces the input") {
  const ConvSpec spec{1, 1, 1, 1, 0, 1, 1, false};
  ConvParams<double> p = ConvParams<double>::zeros(spec);
  p.weights.data[0] = 1.0;
  Rng rng(3);
  const Tensor<double> x = random_input(rng, {2, 1, 4, 4});
  CHECK(bitwise_equal(conv2d_forward(x, spec, p), x));
  CHECK(bitwise_equal(conv2d_forward_direct(x, spec, p), x));
}

TEST_CASE("all-ones 3x3 kernel sums the window") {
  const ConvSpec spec{1, 1, 3, 1, 0, 1, 1, false};
  ConvParams<double> p = ConvParams<double>::zeros(spec);
  for (auto& v : p.weights.data) v = 1.0;
  const Tensor<double> x({1, 1, 3, 3}, 1.0);
  const Tensor<double> y = conv2d_forward(x, spec, p);
  CHECK(y.shape == Shape4{1, 1, 1, 1});
  CHECK(y.data[0] == doctest::Approx(9.0));
}

TEST_CASE("grouped dilated case matches the direct-loop oracle") {
  // Spec example: x=[2,4,8,8], K=3, g=2, r=2, pad=2, stride=1.
  const ConvSpec spec{4, 4, 3, 1, 2, 2, 2, false};
  Rng rng(17);
  const Tensor<double> x = random_input(rng, {2, 4, 8, 8});
  const ConvParams<double> p = random_params(rng, spec);
  const Tensor<double> fast = conv2d_forward(x, spec, p);
  const Tensor<double> direct = conv2d_forward_direct(x, spec, p);
  CHECK(max_rel_diff(fast, direct) < 1e-6);
}

TEST_CASE("lowered path equals the direct path over a (K,r,g,s) sample") {
  Rng rng(23);
  for (const std::int64_t k : {1, 3, 5}) {
    for (const std::int64_t r : {1, 2, 4}) {
      for (const std::int64_t g : {1, 2, 8}) {
        for (const std::int64_t s : {1, 2}) {
          ConvSpec spec;
          spec.in_channels = 16;
          spec.out_channels = 16;
          spec.kernel = k;
          spec.dilation = r;
          spec.groups = g;
          spec.stride = s;
          spec.padding = spec.same_padding();
          spec.has_bias = true;
          const Tensor<double> x = random_input(rng, {1, 16, 9, 9});
          const ConvParams<double> p = random_params(rng, spec);
          const Tensor<double> fast = conv2d_forward(x, spec, p);
          const Tensor<double> direct = conv2d_forward_direct(x, spec, p);
          REQUIRE(max_rel_diff(fast, direct) < 1e-6);

          // Output spatial-size formula.
          const std::int64_t eff = k + (k - 1) * (r - 1);
          REQUIRE(spec.effective_kernel() == eff);
          REQUIRE(fast.h() == (9 + 2 * spec.padding - eff) / s + 1);
        }
      }
    }
  }
}

TEST_CASE("grouped conv equals independent per-group convolutions") {
  const std::int64_t g = 4;
  ConvSpec spec{8, 8, 3, 1, 1, 1, g, false};
  Rng rng(31);
  const Tensor<double> x = random_input(rng, {1, 8, 6, 6});
  const ConvParams<double> p = random_params(rng, spec);
  const Tensor<double> whole = conv2d_forward(x, spec, p);

  const std::int64_t cpg = 2, opg = 2;
  ConvSpec sub{cpg, opg, 3, 1, 1, 1, 1, false};
  for (std::int64_t gi = 0; gi < g; ++gi) {
    Tensor<double> xs(1, cpg, 6, 6);
    for (std::int64_t c = 0; c < cpg; ++c)
      std::copy_n(x.data.data() + x.offset(0, gi * cpg + c, 0, 0), 36,
                  xs.data.data() + xs.offset(0, c, 0, 0));
    ConvParams<double> ps = ConvParams<double>::zeros(sub);
    std::copy_n(p.weights.data.data() + gi * opg * cpg * 9, opg * cpg * 9,
                ps.weights.data.data());
    const Tensor<double> ys = conv2d_forward(xs, sub, ps);
    for (std::int64_t c = 0; c < opg; ++c)
      for (std::int64_t y = 0; y < 6; ++y)
        for (std::int64_t xx = 0; xx < 6; ++xx)
          REQUIRE(ys.at(0, c, y, xx) ==
                  doctest::Approx(whole.at(0, gi * opg + c, y, xx)).epsilon(1e-12));
  }
}

TEST_CASE("shape errors name the offending dimension") {
  const ConvSpec spec{4, 4, 3, 1, 0, 1, 1, false};
  const ConvParams<double> p = ConvParams<double>::zeros(spec);
  Rng rng(5);
  CHECK_THROWS_AS(conv2d_forward(random_input(rng, {1, 3, 6, 6}), spec, p), ShapeError);
  CHECK_THROWS_AS(conv2d_forward(random_input(rng, {1, 4, 2, 2}), spec, p), ShapeError);

  ConvSpec bad = spec;
  bad.groups = 3;
  CHECK_THROWS_AS(conv2d_forward(random_input(rng, {1, 4, 6, 6}), bad, p), ParamError);
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
  const ConvSpec spec{2, 3, 3, 1, 1, 1, 1, true};
  Rng rng(9);
  const Tensor<double> x = random_input(rng, {1, 2, 5, 5});
  const ConvParams<double> p = random_params(rng, spec);
  const Tensor<double> zeros({1, 3, 5, 5}, 0.0);
  const ConvGrads<double> g = conv2d_backward(x, spec, p, zeros);
  for (double v : g.grad_x.data) CHECK(v == 0.0);
  for (double v : g.grad_weights.data) CHECK(v == 0.0);
  for (double v : g.grad_bias) CHECK(v == 0.0);
}

TEST_CASE("backward: identity conv passes the gradient through") {
  const ConvSpec spec{1, 1, 1, 1, 0, 1, 1, false};
  ConvParams<double> p = ConvParams<double>::zeros(spec);
  p.weights.data[0] = 1.0;
  Rng rng(13);
  const Tensor<double> x = random_input(rng, {1, 1, 4, 4});
  const Tensor<double> gout = random_input(rng, {1, 1, 4, 4});
  const ConvGrads<double> g = conv2d_backward(x, spec, p, gout);
  CHECK(bitwise_equal(g.grad_x, gout));
}

TEST_CASE("backward matches central finite differences") {
  const ConvSpec spec{2, 2, 3, 1, 1, 1, 1, false};
  Rng rng(19);
  Tensor<double> x = random_input(rng, {1, 2, 5, 5});
  ConvParams<double> p = random_params(rng, spec);
  const Tensor<double> r = random_input(rng, {1, 2, 5, 5});

  const ConvGrads<double> g = conv2d_backward(x, spec, p, r);
  auto loss = [&] {
    const Tensor<double> y = conv2d_forward(x, spec, p);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y.data[i] * r.data[i];
    return acc;
  };
  const double eps = 1e-5;
  auto check_var = [&](double* data, std::size_t len, const double* analytic) {
    for (std::size_t i = 0; i < len; ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss();
      data[i] = saved - eps;
      const double down = loss();
      data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      REQUIRE(rel_err(analytic[i], numeric) < 1e-6);
    }
  };
  check_var(x.data.data(), x.size(), g.grad_x.data.data());
  check_var(p.weights.data.data(), p.weights.size(), g.grad_weights.data.data());
}
