#include "freconv/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>

#include <json.hpp>

#include "freconv/freconv_layer.hpp"

namespace freconv {

namespace {

constexpr double kEps = 1e-5;

struct Var {
  std::string name;
  double* data = nullptr;
  std::size_t len = 0;
  const double* analytic = nullptr;
};

// Central differences over every coordinate of every variable; returns the
// worst relative error against the analytic gradient.
double check_vars(const std::function<double()>& loss, const std::vector<Var>& vars,
                  std::string* worst) {
  double max_rel = 0.0;
  for (const auto& v : vars) {
    for (std::size_t i = 0; i < v.len; ++i) {
      const double saved = v.data[i];
      v.data[i] = saved + kEps;
      const double up = loss();
      v.data[i] = saved - kEps;
      const double down = loss();
      v.data[i] = saved;
      const double numeric = (up - down) / (2.0 * kEps);
      const double analytic = v.analytic[i];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1.0});
      if (rel > max_rel) {
        max_rel = rel;
        if (worst) *worst = v.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return max_rel;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y.data[i] * r.data[i];
  return acc;
}

Tensor<double> random_tensor(Rng& rng, const Shape4& shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

void merge(GradCheckResult& agg, double rel, const std::string& worst) {
  ++agg.cases;
  if (rel > agg.max_rel_err) {
    agg.max_rel_err = rel;
    agg.worst = worst;
  }
}

GradCheckResult check_conv(Rng& rng) {
  GradCheckResult agg;
  agg.op = "conv2d_backward";
  struct Case {
    ConvSpec spec;
    Shape4 x;
  };
  const std::vector<Case> cases = {
      {ConvSpec{2, 3, 3, 1, 1, 1, 1, true}, {1, 2, 5, 5}},
      {ConvSpec{4, 4, 3, 1, 1, 1, 2, false}, {2, 4, 5, 5}},
      {ConvSpec{2, 2, 3, 1, 2, 2, 1, false}, {1, 2, 6, 6}},
      {ConvSpec{4, 6, 1, 2, 0, 1, 2, true}, {1, 4, 5, 5}},
      {ConvSpec{2, 4, 5, 2, 2, 1, 1, false}, {1, 2, 7, 7}},
  };
  for (const auto& c : cases) {
    for (int rep = 0; rep < 12; ++rep) {
      Tensor<double> x = random_tensor(rng, c.x);
      ConvParams<double> params = ConvParams<double>::zeros(c.spec);
      for (auto& v : params.weights.data) v = rng.uniform(-1.0, 1.0);
      for (auto& v : params.bias) v = rng.uniform(-0.5, 0.5);
      const std::int64_t oh = c.spec.out_extent(c.x[2]);
      const std::int64_t ow = c.spec.out_extent(c.x[3]);
      Tensor<double> r = random_tensor(rng, {c.x[0], c.spec.out_channels, oh, ow});

      ConvGrads<double> g = conv2d_backward(x, c.spec, params, r);
      auto loss = [&] { return weighted_sum(conv2d_forward(x, c.spec, params), r); };
      std::vector<Var> vars = {
          {"x", x.data.data(), x.size(), g.grad_x.data.data()},
          {"w", params.weights.data.data(), params.weights.size(),
           g.grad_weights.data.data()}};
      if (c.spec.has_bias)
        vars.push_back({"b", params.bias.data(), params.bias.size(), g.grad_bias.data()});
      std::string worst;
      merge(agg, check_vars(loss, vars, &worst), worst);
    }
  }
  return agg;
}

GradCheckResult check_batchnorm(Rng& rng) {
  GradCheckResult agg;
  agg.op = "batchnorm_backward";
  for (int rep = 0; rep < 10; ++rep) {
    Tensor<double> x = random_tensor(rng, {3, 2, 4, 4});
    BnParams<double> params = BnParams<double>::identity(2);
    for (auto& v : params.gamma) v = rng.uniform(0.5, 1.5);
    for (auto& v : params.beta) v = rng.uniform(-0.5, 0.5);
    Tensor<double> r = random_tensor(rng, x.shape);

    BnStats<double> stats = BnStats<double>::fresh(2);
    BnCache<double> cache;
    batchnorm_forward(x, params, stats, Mode::kTrain, &cache);
    BnGrads<double> g = batchnorm_backward(x, params, cache, r);

    auto loss = [&] {
      BnStats<double> fresh = BnStats<double>::fresh(2);
      return weighted_sum(batchnorm_forward(x, params, fresh, Mode::kTrain), r);
    };
    std::string worst;
    const std::vector<Var> vars = {
        {"x", x.data.data(), x.size(), g.grad_x.data.data()},
        {"gamma", params.gamma.data(), params.gamma.size(), g.grad_gamma.data()},
        {"beta", params.beta.data(), params.beta.size(), g.grad_beta.data()}};
    merge(agg, check_vars(loss, vars, &worst), worst);
  }
  return agg;
}

GradCheckResult check_activation(Rng& rng, Activation kind) {
  GradCheckResult agg;
  agg.op = kind == Activation::kRelu ? "relu_backward" : "sigmoid_backward";
  for (int rep = 0; rep < 6; ++rep) {
    Tensor<double> x(1, 2, 4, 4);
    for (auto& v : x.data) {
      // Keep relu probes away from the kink so the difference quotient is valid.
      v = rng.uniform(0.01, 1.0) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
    }
    Tensor<double> r = random_tensor(rng, x.shape);
    Tensor<double> y = activation_forward(x, kind);
    Tensor<double> g = activation_backward(x, y, kind, r);
    auto loss = [&] { return weighted_sum(activation_forward(x, kind), r); };
    std::string worst;
    const std::vector<Var> vars = {{"x", x.data.data(), x.size(), g.data.data()}};
    merge(agg, check_vars(loss, vars, &worst), worst);
  }
  return agg;
}

GradCheckResult check_gap(Rng& rng) {
  GradCheckResult agg;
  agg.op = "global_avg_pool_backward";
  for (int rep = 0; rep < 5; ++rep) {
    Tensor<double> x = random_tensor(rng, {2, 3, 4, 5});
    Tensor<double> r = random_tensor(rng, {2, 3, 1, 1});
    Tensor<double> g = global_avg_pool_backward(x.shape, r);
    auto loss = [&] { return weighted_sum(global_avg_pool(x), r); };
    std::string worst;
    const std::vector<Var> vars = {{"x", x.data.data(), x.size(), g.data.data()}};
    merge(agg, check_vars(loss, vars, &worst), worst);
  }
  return agg;
}

GradCheckResult check_maxpool(Rng& rng) {
  GradCheckResult agg;
  agg.op = "maxpool_backward";
  const PoolSpec spec{PoolSpec::Kind::kMax, 3, 2, 1};
  for (int rep = 0; rep < 5; ++rep) {
    Tensor<double> x = random_tensor(rng, {1, 2, 6, 6});
    Tensor<double> r =
        random_tensor(rng, {1, 2, spec.out_extent(6), spec.out_extent(6)});
    std::vector<std::int64_t> argmax;
    pool_forward(x, spec, &argmax);
    Tensor<double> g = pool_backward(x, spec, r, argmax);
    auto loss = [&] { return weighted_sum(pool_forward(x, spec), r); };
    std::string worst;
    const std::vector<Var> vars = {{"x", x.data.data(), x.size(), g.data.data()}};
    merge(agg, check_vars(loss, vars, &worst), worst);
  }
  return agg;
}

GradCheckResult check_linear_ce(Rng& rng) {
  GradCheckResult agg;
  agg.op = "linear_cross_entropy_backward";
  for (int rep = 0; rep < 10; ++rep) {
    const std::int64_t n = 4, features = 6, classes = 3;
    Tensor<double> x = random_tensor(rng, {n, features, 1, 1});
    LinearParams<double> params = LinearParams<double>::zeros(features, classes);
    for (auto& v : params.weights.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : params.bias) v = rng.uniform(-0.5, 0.5);
    std::vector<std::int64_t> labels;
    for (std::int64_t i = 0; i < n; ++i)
      labels.push_back(static_cast<std::int64_t>(rng.below(classes)));

    Tensor<double> grad_logits;
    cross_entropy(linear_forward(x, params), labels, &grad_logits);
    LinearGrads<double> g = linear_backward(x, params, grad_logits);
    auto loss = [&] {
      return cross_entropy(linear_forward(x, params), labels, (Tensor<double>*)nullptr);
    };
    std::string worst;
    const std::vector<Var> vars = {
        {"x", x.data.data(), x.size(), g.grad_x.data.data()},
        {"w", params.weights.data.data(), params.weights.size(), g.grad_weights.data.data()},
        {"b", params.bias.data(), params.bias.size(), g.grad_bias.data()}};
    merge(agg, check_vars(loss, vars, &worst), worst);
  }
  return agg;
}

std::vector<Var> freconv_param_vars(const FreConvConfig& cfg, FreConvParams<double>& p,
                                    FreConvParams<double>& g) {
  std::vector<Var> vars;
  auto add = [&](const std::string& name, std::vector<double>& values,
                 std::vector<double>& grad) {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    vars.push_back(Var{name, values.data(), values.size(), grad.data()});
  };
  if (cfg.split_mode == SplitMode::kAttention) {
    add("attn_a1.w", p.attn_a1.weights.data, g.attn_a1.weights.data);
    add("attn_a1.b", p.attn_a1.bias, g.attn_a1.bias);
    add("attn_a2.w", p.attn_a2.weights.data, g.attn_a2.weights.data);
    add("attn_a2.b", p.attn_a2.bias, g.attn_a2.bias);
    add("attn_b1.w", p.attn_b1.weights.data, g.attn_b1.weights.data);
    add("attn_b1.b", p.attn_b1.bias, g.attn_b1.bias);
    add("attn_b2.w", p.attn_b2.weights.data, g.attn_b2.weights.data);
    add("attn_b2.b", p.attn_b2.bias, g.attn_b2.bias);
  }
  if (cfg.branch_mode == BranchMode::kAsymmetric) {
    for (std::size_t k = 0; k < p.multiscale.size(); ++k)
      add("ms" + std::to_string(cfg.kernel_set[k]) + ".w", p.multiscale[k].weights.data,
          g.multiscale[k].weights.data);
    add("hfe_pw.w", p.hfe_pointwise.weights.data, g.hfe_pointwise.weights.data);
    add("lfe.w", p.lfe.weights.data, g.lfe.weights.data);
  } else {
    add("same_hfe.w", p.same_hfe.weights.data, g.same_hfe.weights.data);
    add("same_lfe.w", p.same_lfe.weights.data, g.same_lfe.weights.data);
  }
  add("bn_hfe.gamma", p.bn_hfe.gamma, g.bn_hfe.gamma);
  add("bn_hfe.beta", p.bn_hfe.beta, g.bn_hfe.beta);
  add("bn_lfe.gamma", p.bn_lfe.gamma, g.bn_lfe.gamma);
  add("bn_lfe.beta", p.bn_lfe.beta, g.bn_lfe.beta);
  return vars;
}

GradCheckResult check_freconv(Rng& rng) {
  GradCheckResult agg;
  agg.op = "freconv_backward";
  std::vector<FreConvConfig> configs;
  {
    FreConvConfig a;
    a.in_channels = 8;
    a.out_channels = 8;
    a.n_split = 2;
    a.kernel_set = {3, 5};
    a.mode = KernelMode::kDck;
    a.attn_reduction = 4;
    configs.push_back(a);
    FreConvConfig b = a;
    b.mode = KernelMode::kGck;
    b.split_mode = SplitMode::kDirect;
    b.stride = 2;
    configs.push_back(b);
    FreConvConfig c = a;
    c.branch_mode = BranchMode::kSame;
    c.kernel_set.clear();
    configs.push_back(c);
  }
  for (const auto& cfg : configs) {
    for (int rep = 0; rep < 4; ++rep) {
      FreConvParams<double> params = init_freconv_params<double>(cfg, rng);
      // Push the attention pre-activations away from the relu kink so the
      // central difference quotient stays valid.
      if (cfg.split_mode == SplitMode::kAttention)
        for (auto* conv : {&params.attn_a1, &params.attn_b1})
          for (auto& b : conv->bias)
            b = rng.uniform(0.05, 0.15) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
      Tensor<double> x = random_tensor(rng, {2, cfg.in_channels, 6, 6});
      const std::int64_t oh = (6 - 1) / cfg.stride + 1;
      Tensor<double> r = random_tensor(rng, {2, cfg.out_channels, oh, oh});

      FreConvState<double> state = FreConvState<double>::fresh(cfg);
      FreConvCache<double> cache;
      freconv_forward(x, cfg, params, state, Mode::kTrain, &cache);
      FreConvGrads<double> g = freconv_backward(cfg, params, state, cache, r);

      auto loss = [&] {
        FreConvState<double> fresh = FreConvState<double>::fresh(cfg);
        return weighted_sum(freconv_forward(x, cfg, params, fresh, Mode::kTrain), r);
      };
      std::vector<Var> vars = freconv_param_vars(cfg, params, g.params);
      vars.push_back(Var{"x", x.data.data(), x.size(), g.grad_x.data.data()});
      std::string worst;
      merge(agg, check_vars(loss, vars, &worst), worst);
    }
  }
  return agg;
}

}  // namespace

GradCheckReport grad_check_suite(std::uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report;
  report.epsilon = kEps;
  report.results.push_back(check_conv(rng));
  report.results.push_back(check_batchnorm(rng));
  report.results.push_back(check_activation(rng, Activation::kRelu));
  report.results.push_back(check_activation(rng, Activation::kSigmoid));
  report.results.push_back(check_gap(rng));
  report.results.push_back(check_maxpool(rng));
  report.results.push_back(check_linear_ce(rng));
  report.results.push_back(check_freconv(rng));
  return report;
}

std::string gradcheck_report_json(const GradCheckReport& report) {
  nlohmann::json j;
  j["threshold"] = report.threshold;
  j["epsilon"] = report.epsilon;
  j["passed"] = report.passed();
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& r : report.results)
    ops.push_back({{"op", r.op},
                   {"cases", r.cases},
                   {"max_rel_err", r.max_rel_err},
                   {"worst", r.worst},
                   {"passed", r.max_rel_err < report.threshold}});
  j["ops"] = std::move(ops);
  return j.dump(2) + "\n";
}

void write_gradcheck_table(std::ostream& os, const GradCheckReport& report) {
  os << std::left << std::setw(32) << "op" << std::right << std::setw(8) << "cases"
     << std::setw(14) << "max_rel_err" << "  status\n";
  for (const auto& r : report.results) {
    char err[24];
    std::snprintf(err, sizeof(err), "%.3e", r.max_rel_err);
    os << std::left << std::setw(32) << r.op << std::right << std::setw(8) << r.cases
       << std::setw(14) << err << "  "
       << (r.max_rel_err < report.threshold ? "ok" : ("FAIL worst=" + r.worst)) << "\n";
  }
}

}  // namespace freconv
