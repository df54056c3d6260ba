#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "gainattn/array.hpp"
#include "gainattn/attention.hpp"
#include "gainattn/signal.hpp"

using namespace gainattn;

namespace {

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = dist(rng);
  return x;
}

// One token on a full paper-size head (16 tiles, M = 1024).
void BM_HeadStep(benchmark::State& state) {
  const AttentionHeadConfig config = AttentionHeadConfig::paper_default();
  SlidingWindowCache cache(config);
  std::mt19937_64 rng(1);
  std::vector<std::vector<double>> tokens;
  for (int i = 0; i < 64; ++i) tokens.push_back(gaussian(rng, config.d));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& x = tokens[i++ % tokens.size()];
    benchmark::DoNotOptimize(cache.step(x, x, x));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HeadStep)->Unit(benchmark::kMicrosecond);

void BM_BitlineMac(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  DeviceModel model;
  model.kind = DeviceKind::Cubic;
  const QuantizerSpec stored{8, -1.0, 1.0};
  std::vector<GainCellState> column(n);
  std::vector<PwmPulse> pulses(n);
  for (std::size_t i = 0; i < n; ++i) {
    column[i] = write_cell({}, static_cast<std::int64_t>(i % 8), stored, 0);
    pulses[i] = {static_cast<double>(i % 16)};
  }
  for (auto _ : state) benchmark::DoNotOptimize(bitline_mac(pulses, column, model, 100));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BitlineMac)->Arg(64)->Arg(256);

void BM_Quantize(benchmark::State& state) {
  const QuantizerSpec spec{16, 0.0, 15.0};
  std::mt19937_64 rng(2);
  const auto xs = gaussian(rng, 4096);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(quantize(7.5 + 4.0 * xs[i++ & 4095], spec));
}
BENCHMARK(BM_Quantize);

}  // namespace

// The packaged benchmark_main archive carries LTO bytecode from another compiler.
BENCHMARK_MAIN();
