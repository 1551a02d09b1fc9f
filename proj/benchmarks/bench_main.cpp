#include <benchmark/benchmark.h>

#include "freconv/arch.hpp"
#include "freconv/cost.hpp"
#include "freconv/executor.hpp"
#include "freconv/freconv_layer.hpp"
#include "freconv/spectrum.hpp"
#include "freconv/train.hpp"

using namespace freconv;

namespace {

template <typename T>
Tensor<T> random_tensor(std::uint64_t seed, const Shape4& shape) {
  Tensor<T> t(shape);
  Rng rng(seed);
  seeded_fill(rng, t, Dist::normal(0.0, 1.0));
  return t;
}

void BM_Conv2dDirect(benchmark::State& state) {
  const auto k = state.range(0);
  ConvSpec spec{32, 32, k, 1, 0, 1, 1, false};
  spec.padding = spec.same_padding();
  const auto x = random_tensor<float>(1, {1, 32, 32, 32});
  ConvParams<float> params = ConvParams<float>::zeros(spec);
  Rng rng(2);
  seeded_fill(rng, params.weights, Dist::normal(0.0, 0.1));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward_direct(x, spec, params));
}
BENCHMARK(BM_Conv2dDirect)->Arg(3)->Arg(5);

void BM_Conv2dLowered(benchmark::State& state) {
  const auto k = state.range(0);
  ConvSpec spec{32, 32, k, 1, 0, 1, 1, false};
  spec.padding = spec.same_padding();
  const auto x = random_tensor<float>(1, {1, 32, 32, 32});
  ConvParams<float> params = ConvParams<float>::zeros(spec);
  Rng rng(2);
  seeded_fill(rng, params.weights, Dist::normal(0.0, 0.1));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, spec, params));
}
BENCHMARK(BM_Conv2dLowered)->Arg(3)->Arg(5)->Arg(9);

void BM_FreConvForward(benchmark::State& state) {
  FreConvConfig cfg;
  cfg.in_channels = 32;
  cfg.out_channels = 32;
  cfg.n_split = 2;
  cfg.kernel_set = stage_kernel_schedule(state.range(0));
  cfg.mode = state.range(1) == 0 ? KernelMode::kDck : KernelMode::kGck;
  cfg.attn_reduction = 16;
  Rng rng(3);
  const auto params = init_freconv_params<float>(cfg, rng);
  FreConvState<float> fc_state = FreConvState<float>::fresh(cfg);
  const auto x = random_tensor<float>(4, {2, 32, 32, 32});
  for (auto _ : state)
    benchmark::DoNotOptimize(freconv_forward(x, cfg, params, fc_state, Mode::kEval));
}
BENCHMARK(BM_FreConvForward)->Args({1, 0})->Args({1, 1})->Args({4, 0})->Args({4, 1});

void BM_Fft2Energy(benchmark::State& state) {
  const auto n = state.range(0);
  std::vector<double> plane(static_cast<std::size_t>(n * n));
  Rng rng(7);
  for (auto& v : plane) v = rng.normal(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fft2_energy(plane, n, n));
}
BENCHMARK(BM_Fft2Energy)->Arg(16)->Arg(64)->Arg(128);

void BM_CostAnalysis(benchmark::State& state) {
  const ArchGraph graph = build_arch(ArchFamily::kResNet50, ArchVariant::kFreConv, {});
  for (auto _ : state) benchmark::DoNotOptimize(count_cost(graph));
}
BENCHMARK(BM_CostAnalysis);

void BM_ToyNetTrainStep(benchmark::State& state) {
  SynthSpec spec;
  spec.image_size = 32;
  spec.samples_per_class = 16;
  const auto ds = gen_synth_dataset<float>(spec);
  const ArchGraph graph = build_toy_net(spec);
  GraphParams<float> params = init_graph_params<float>(graph, 1);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 32;
  for (auto _ : state) benchmark::DoNotOptimize(train(graph, params, ds, tc));
}
BENCHMARK(BM_ToyNetTrainStep);

}  // namespace

BENCHMARK_MAIN();
