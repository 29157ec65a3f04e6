// OpenMP path batches against the serial reference on the same workload.
#include <benchmark/benchmark.h>

#include "trailstop/simulate.hpp"

using namespace trailstop;

namespace {

const Reward kReward = Reward::linear(0.02);

PathConfig workload(std::uint64_t paths) {
  PathConfig cfg;
  cfg.model = {0.6, 1.0, 0.2};
  cfg.n_paths = paths;
  cfg.seed = 42;
  return cfg;
}

StrategySpec strategy() { return StrategySpec::barrier_or_trailing(2.8845, FloorSpec::percentage(0.3), 2.0, 2.0); }

void BM_parallel(benchmark::State& state) {
  auto cfg = workload(static_cast<std::uint64_t>(state.range(0)));
  cfg.threads = static_cast<int>(state.range(1));
  const auto s = strategy();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_value(cfg, s, 0.05, kReward));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_serial(benchmark::State& state) {
  const auto cfg = workload(static_cast<std::uint64_t>(state.range(0)));
  const auto s = strategy();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_value_serial(cfg, s, 0.05, kReward));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_serial)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_parallel)->Args({20000, 1})->Args({20000, 2})->Args({20000, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
