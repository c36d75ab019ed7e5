#include <benchmark/benchmark.h>

#include "sensemap/explorer.hpp"
#include "sensemap/rng.hpp"
#include "sensemap/simworld.hpp"

using namespace sensemap;

namespace {

TrinaryMap bench_world(int side, std::uint64_t seed) {
    FloorplanConfig cfg;
    cfg.width = side;
    cfg.height = side;
    cfg.min_rooms = 5;
    cfg.max_rooms = 9;
    cfg.seed = seed;
    return generate_floorplan(cfg);
}

Cell first_free(const TrinaryMap& m) {
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            if (m(r, c) == CellState::Free) return Cell{r, c};
    return Cell{0, 0};
}

void bench_sense(benchmark::State& state) {
    const TrinaryMap truth = bench_world(64, 7);
    const Cell start = first_free(truth);
    const SensorSpec spec{static_cast<int>(state.range(0)), 360};
    for (auto _ : state) {
        TrinaryMap observed(64, 64);
        benchmark::DoNotOptimize(
            sense_and_update(truth, observed, RobotState{start, 0.0, 0}, spec));
    }
}

void bench_astar(benchmark::State& state) {
    const TrinaryMap truth = bench_world(static_cast<int>(state.range(0)), 11);
    const Cell start = first_free(truth);
    Cell goal = start;
    for (int r = truth.height() - 1; r >= 0; --r) {
        for (int c = truth.width() - 1; c >= 0; --c)
            if (truth(r, c) == CellState::Free) {
                goal = Cell{r, c};
                r = -1;
                break;
            }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(astar(truth, start, goal));
    }
}

void bench_frontier_episode(benchmark::State& state) {
    const TrinaryMap truth = bench_world(64, 13);
    const Cell start = first_free(truth);
    const SensorSpec spec{16, 360};
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_frontier_baseline(truth, spec, 4000, start));
    }
}

void bench_oracle_episode(benchmark::State& state) {
    const TrinaryMap truth = bench_world(64, 13);
    const Cell start = first_free(truth);
    const SensorSpec spec{16, 360};
    const OraclePredictor oracle(truth);
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_exploration(truth, spec, oracle, FusionConfig{},
                                                 CostWeights::for_map_side(64), 4000,
                                                 start));
    }
}

} // namespace

BENCHMARK(bench_sense)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(bench_astar)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bench_frontier_episode)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_oracle_episode)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
