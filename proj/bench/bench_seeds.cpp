// Seed loop throughput, serial vs OpenMP. Both modes produce identical output
// (see tests/test_parallel.cpp); only wall time differs.

#include <benchmark/benchmark.h>

#include "lowswitch/harness.hpp"

using namespace lowswitch;

namespace {

ExperimentConfig config(const char* algorithm) {
  return parse_config(std::string(R"({"env": {"family": "onehot_random", "num_states": 3, "num_actions": 2,
                                              "horizon": 3, "env_seed": 1},
                                      "algorithm": ")") +
                      algorithm + R"(", "K": 500, "seeds": [1, 2, 3, 4, 5, 6, 7, 8]})");
}

void run(benchmark::State& state, const char* algorithm, Execution mode) {
  const ExperimentConfig c = config(algorithm);
  for (auto _ : state) {
    ExperimentResult r = run_experiment(c, mode);
    benchmark::DoNotOptimize(r.summary.mean_regret);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(c.seeds.size()));
}

void BM_EleanorSerial(benchmark::State& s) { run(s, "eleanor", Execution::kSerial); }
void BM_EleanorParallel(benchmark::State& s) { run(s, "eleanor", Execution::kParallel); }
void BM_GlmSerial(benchmark::State& s) { run(s, "glm", Execution::kSerial); }
void BM_GlmParallel(benchmark::State& s) { run(s, "glm", Execution::kParallel); }

}  // namespace

BENCHMARK(BM_EleanorSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EleanorParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GlmSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GlmParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
