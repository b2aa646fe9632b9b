// OpenMP Monte Carlo driver against the single-threaded reference on the
// same network. Both produce bitwise-identical series; only wall time differs.

#include "ilms/config.hpp"
#include "ilms/engine.hpp"

#include <benchmark/benchmark.h>

namespace {

ilms::config::LoadedConfig bench_config(int runs) {
    auto doc = nlohmann::json::parse(R"({
      "network": {"n": 20, "m": 4, "w_true": [0.5, 0.5, 0.5, 0.5], "seed": 20240601},
      "profiles": {
        "mu": 0.02,
        "sigma_v2": {"uniform": [0.001, 0.01]},
        "ru": {"spread": 4, "trace": {"uniform": [1, 5]}, "basis": "shared"},
        "q": {"sigma_c2": {"uniform": [0.0001, 0.001]}}
      },
      "channels": {"law": "rayleigh", "mean": 0.7071067811865476},
      "plan": {"mode": "fading", "iterations": 300, "tail": 100}
    })");
    doc["plan"]["runs"] = runs;
    return ilms::config::parse_config_json(doc);
}

void BM_Serial(benchmark::State& state) {
    const auto cfg = bench_config(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(ilms::engine::run_monte_carlo_serial(cfg.network, cfg.plan));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_OpenMP(benchmark::State& state) {
    auto cfg = bench_config(static_cast<int>(state.range(0)));
    cfg.plan.workers = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(ilms::engine::run_monte_carlo(cfg.network, cfg.plan));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Serial)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_OpenMP)->Args({64, 1})->Args({64, 2})->Args({64, 4})->Args({64, 8})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
