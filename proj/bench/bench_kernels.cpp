// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include "dpspin/cavity.hpp"
#include "dpspin/exact.hpp"
#include "dpspin/model.hpp"
#include "dpspin/reference.hpp"

namespace {

dpspin::HamiltonianInstance instance(int n) {
  dpspin::ModelParams m;
  m.p = 3;
  m.lambda = 1.0;
  m.beta = 1.0;
  m.h = 0.2;
  return dpspin::sample_instance(m, n, {}, dpspin::Stream(1));
}

void BM_LogPartitionGray(benchmark::State& state) {
  const auto inst = instance(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dpspin::log_partition(inst));
}

void BM_LogPartitionNaive(benchmark::State& state) {
  const auto inst = instance(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dpspin::reference::log_partition_naive(inst));
}

struct PopulationFixture {
  dpspin::ModelParams params;
  dpspin::PopDynConfig config;
  dpspin::Population population;

  explicit PopulationFixture(std::size_t size) {
    params.p = 2;
    params.lambda = 1.0;
    params.beta = 1.0;
    params.h = 0.3;
    config.s_out = size;
    config.s_in = size;
    population = dpspin::popdyn_init(config, dpspin::Stream(2));
  }
};

void BM_PopDynStepParallel(benchmark::State& state) {
  const PopulationFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpspin::popdyn_step(f.population, f.params, 0.5, f.config, dpspin::Stream(3)));
  }
}

void BM_PopDynStepSerial(benchmark::State& state) {
  const PopulationFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        dpspin::reference::popdyn_step_serial(f.population, f.params, 0.5, f.config, dpspin::Stream(3)));
  }
}

}  // namespace

BENCHMARK(BM_LogPartitionGray)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogPartitionNaive)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PopDynStepParallel)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PopDynStepSerial)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
