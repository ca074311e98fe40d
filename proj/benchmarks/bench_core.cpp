// Microbenchmarks for the kernels that dominate training time. Shapes match
// the training defaults (64 features on 64x64 patches) so the numbers map
// directly onto iteration cost.

#include <benchmark/benchmark.h>

#include <random>

#include "hsr/filters.hpp"
#include "hsr/metrics.hpp"
#include "hsr/network.hpp"
#include "hsr/ops.hpp"

using namespace hsr;

namespace {

template <typename T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  Tensor<T> t = Tensor<T>::zeros(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : t.v) v = static_cast<T>(dist(rng));
  return t;
}

void flops_counter(benchmark::State& state, double flops_per_iter) {
  state.counters["flops"] = benchmark::Counter(
      flops_per_iter * static_cast<double>(state.iterations()),
      benchmark::Counter::kIsRate);
}

}  // namespace

static void BM_Conv3x3Forward(benchmark::State& state) {
  const Tensor<float> x = random_tensor<float>(1, 64, 64, 64, 1);
  ConvParams<float> p;
  p.w = random_tensor<float>(64, 64, 3, 3, 2);
  p.b = random_tensor<float>(1, 64, 1, 1, 3);
  p.padding = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, p));
  }
  flops_counter(state, 2.0 * 64 * 64 * 9 * 64 * 64);
}
BENCHMARK(BM_Conv3x3Forward);

static void BM_Conv3x3Backward(benchmark::State& state) {
  const Tensor<float> x = random_tensor<float>(1, 64, 64, 64, 4);
  ConvParams<float> p;
  p.w = random_tensor<float>(64, 64, 3, 3, 5);
  p.b = random_tensor<float>(1, 64, 1, 1, 6);
  p.padding = 1;
  const Tensor<float> gout = random_tensor<float>(1, 64, 64, 64, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d_backward(x, p, gout, true));
  }
  flops_counter(state, 2.0 * 2.0 * 64 * 64 * 9 * 64 * 64);
}
BENCHMARK(BM_Conv3x3Backward);

static void BM_TransposedUpsample(benchmark::State& state) {
  // learned x4 upsampler of the detail branch: 64 -> 64 channels, 6x6 taps
  const Tensor<float> x = random_tensor<float>(1, 64, 16, 16, 8);
  ConvParams<float> p;
  p.w = random_tensor<float>(64, 64, 6, 6, 9);
  p.b = random_tensor<float>(1, 64, 1, 1, 10);
  p.stride = 4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(transposed_conv2d(x, p));
  }
  flops_counter(state, 2.0 * 16 * 16 * 64 * 64 * 36);
}
BENCHMARK(BM_TransposedUpsample);

static void BM_BoxHighpass(benchmark::State& state) {
  const Tensor<float> x = random_tensor<float>(1, 31, 64, 64, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(highpass(x, 6));
  }
}
BENCHMARK(BM_BoxHighpass);

static void BM_FullForward(benchmark::State& state) {
  NetworkConfig cfg;  // 31 bands, x4, 64 features, 6 blocks
  const NetworkParams<float> params = init_network<float>(cfg, 12);
  const Tensor<float> y = random_tensor<float>(1, 31, 16, 16, 13);
  const Tensor<float> z = random_tensor<float>(1, 3, 64, 64, 14);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(params, cfg, y, z, false));
  }
}
BENCHMARK(BM_FullForward);

static void BM_FullTrainingStep(benchmark::State& state) {
  NetworkConfig cfg;
  const NetworkParams<float> params = init_network<float>(cfg, 15);
  const Tensor<float> y = random_tensor<float>(1, 31, 16, 16, 16);
  const Tensor<float> z = random_tensor<float>(1, 3, 64, 64, 17);
  const Tensor<float> x = random_tensor<float>(1, 31, 64, 64, 18);
  for (auto _ : state) {
    ForwardCache<float> cache = forward(params, cfg, y, z, true);
    benchmark::DoNotOptimize(backward(params, cfg, cache, x));
  }
}
BENCHMARK(BM_FullTrainingStep);

static void BM_Metrics(benchmark::State& state) {
  HyperCube ref(64, 64, 31), est(64, 64, 31);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  for (int b = 0; b < 31; ++b) {
    ref.wavelengths[b] = 400 + 10 * b;
    est.wavelengths[b] = 400 + 10 * b;
  }
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    ref.data[i] = dist(rng);
    est.data[i] = ref.data[i] + 0.01 * dist(rng);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(report(ref, est, 4.0));
  }
}
BENCHMARK(BM_Metrics);

BENCHMARK_MAIN();
