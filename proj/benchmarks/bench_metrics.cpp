#include <benchmark/benchmark.h>

#include "sensemap/metrics.hpp"
#include "sensemap/rng.hpp"

using namespace sensemap;

namespace {

Tensor random_image(int side, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({side, side});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return t;
}

void bench_ssim(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Tensor x = random_image(side, 1);
    const Tensor y = random_image(side, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ssim(x, y));
    }
}

void bench_plpips(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const FeatureNet phi(3);
    const Tensor x = random_image(side, 1);
    const Tensor y = random_image(side, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(plpips(phi, x, y));
    }
}

void bench_pfid(benchmark::State& state) {
    Rng rng(5);
    std::vector<std::vector<double>> x, y;
    for (int i = 0; i < 64; ++i) {
        std::vector<double> a(32), b(32);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal() + 0.1;
        x.push_back(a);
        y.push_back(b);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(pfid(x, y));
    }
}

} // namespace

BENCHMARK(bench_ssim)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bench_plpips)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bench_pfid)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
