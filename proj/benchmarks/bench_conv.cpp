#include <benchmark/benchmark.h>

#include <random>

#include "atse/anisotropy.hpp"
#include "atse/model.hpp"
#include "atse/nn.hpp"
#include "atse/pipeline.hpp"

using namespace atse;

namespace {

NumArray<float> random_input(std::size_t h, std::size_t w, std::size_t c) {
  NumArray<float> a({h, w, c});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : a.data()) v = u(rng);
  return a;
}

ConvLayer<float> layer(std::size_t k, std::size_t c_in, std::size_t c_out, bool masked) {
  std::optional<CausalityMask> mask;
  if (masked) mask = build_mask(MaskKind::FreeFlow, k, k, 10, 1, 30, -5);
  return init_layer<float>({k, k, c_in, c_out}, mask, Activation::ReLU, 1, 1.0);
}

// Args: kernel, c_in, c_out, masked.
void BM_ConvForward(benchmark::State& state) {
  const auto L = layer(state.range(0), state.range(1), state.range(2), state.range(3) != 0);
  const auto x = random_input(50, 60, L.dims.c_in);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(x, L));
  state.SetItemsProcessed(state.iterations() * 50 * 60);
}
BENCHMARK(BM_ConvForward)->Args({5, 3, 20, 1})->Args({7, 40, 24, 1})->Args({7, 40, 24, 0})->Args({9, 40, 56, 0});

void BM_ConvBackward(benchmark::State& state) {
  const auto L = layer(state.range(0), state.range(1), state.range(2), state.range(3) != 0);
  const auto x = random_input(50, 60, L.dims.c_in);
  const auto y = conv_forward(x, L);
  const auto g = random_input(50, 60, L.dims.c_out);
  for (auto _ : state) benchmark::DoNotOptimize(conv_backward(g, x, y, L, true));
  state.SetItemsProcessed(state.iterations() * 50 * 60);
}
BENCHMARK(BM_ConvBackward)->Args({7, 40, 24, 1})->Args({7, 40, 24, 0});

// Arg: channel scale in percent.
void BM_ModelForward(benchmark::State& state) {
  const auto cfg = ModelConfig::standard(GridSpec{}).with_channel_scale(state.range(0) / 100.0);
  const auto m = build_model(cfg, 1);
  const auto x = random_input(50, 60, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
}
BENCHMARK(BM_ModelForward)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TrainingSample(benchmark::State& state) {
  const auto cfg = ModelConfig::standard(GridSpec{}).with_channel_scale(state.range(0) / 100.0);
  const auto m = build_model(cfg, 1);
  const auto x = random_input(50, 60, 3);
  std::vector<float> target(50 * 60, 0.5f);
  auto grads = ModelGrads<float>::zeros_like(m);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients<float>(m, x, target, &grads));
}
BENCHMARK(BM_TrainingSample)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_NearestFill(benchmark::State& state) {
  GridSpec g;
  g.nx = 50;
  g.nt = 60;
  std::vector<std::optional<double>> s(g.cells());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : s)
    if (u(rng) < 0.05) v = 30.0 * u(rng);
  const auto p = encode_partial(s, g);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_observed_fill(p));
}
BENCHMARK(BM_NearestFill);

}  // namespace

BENCHMARK_MAIN();
