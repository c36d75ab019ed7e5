#include <benchmark/benchmark.h>

#include "sensemap/nnet.hpp"
#include "sensemap/rng.hpp"
#include "sensemap/training.hpp"

using namespace sensemap;

namespace {

Tensor random_input(const NetConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({3, cfg.side, cfg.side});
    for (int r = 0; r < cfg.side; ++r)
        for (int c = 0; c < cfg.side; ++c)
            x[(static_cast<std::size_t>(rng.uniform_int(0, 2)) * cfg.side + r) *
                  cfg.side +
              c] = 1.0;
    return x;
}

void bench_forward(benchmark::State& state) {
    NetConfig cfg;
    cfg.side = static_cast<int>(state.range(0));
    cfg.base = static_cast<int>(state.range(1));
    cfg.patch = 8;
    const NetParams params = init_params(cfg, 1);
    const Tensor x = random_input(cfg, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(cfg, params, x));
    }
}

void bench_backward(benchmark::State& state) {
    NetConfig cfg;
    cfg.side = static_cast<int>(state.range(0));
    cfg.base = static_cast<int>(state.range(1));
    cfg.patch = 8;
    const NetParams params = init_params(cfg, 1);
    const Tensor x = random_input(cfg, 2);
    Rng rng(3);
    Tensor gt({1, cfg.side, cfg.side});
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const FeatureNet phi(4);
    const LossWeights w{10.0, 1.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_gradients(cfg, params, x, gt, w, phi));
    }
}

} // namespace

BENCHMARK(bench_forward)->Args({32, 4})->Args({32, 16})->Args({64, 16})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bench_backward)->Args({32, 4})->Args({32, 8})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
