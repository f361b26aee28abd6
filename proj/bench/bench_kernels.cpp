// Serial reference kernels against their OpenMP versions at model scale
// (the Transformer has ~423k parameters).

#include "grokforge/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <span>
#include <vector>

namespace k = grokforge::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<float> normal;
    std::vector<float> v(n);
    for (auto& x : v)
        x = normal(rng);
    return v;
}

template <bool Parallel>
void BM_EmaUpdate(benchmark::State& state)
{
    const auto n = std::size_t(state.range(0));
    auto mu = random_vec(n, 1);
    const auto g = random_vec(n, 2);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::ema_update<float>(0.98f, g, mu);
        else
            k::serial::ema_update<float>(0.98f, g, mu);
        benchmark::DoNotOptimize(mu.data());
    }
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(n) * 3 * int64_t(sizeof(float)));
}

template <bool Parallel>
void BM_WindowSum(benchmark::State& state)
{
    const auto n = std::size_t(state.range(0));
    std::vector<std::vector<float>> slots;
    for (unsigned i = 0; i < 100; ++i)
        slots.push_back(random_vec(n, i));
    std::vector<std::span<const float>> views(slots.begin(), slots.end());
    std::vector<float> out(n);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::window_sum<float>(views, out);
        else
            k::serial::window_sum<float>(views, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Gram(benchmark::State& state)
{
    const auto rows = std::size_t(state.range(0));
    std::vector<std::vector<float>> data;
    for (unsigned i = 0; i < rows; ++i)
        data.push_back(random_vec(50000, i));
    std::vector<std::span<const float>> views(data.begin(), data.end());
    std::vector<double> out(rows * rows);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::gram<float>(views, out);
        else
            k::serial::gram<float>(views, out);
        benchmark::DoNotOptimize(out.data());
    }
}

} // namespace

BENCHMARK(BM_EmaUpdate<false>)->Arg(1 << 12)->Arg(422784);
BENCHMARK(BM_EmaUpdate<true>)->Arg(1 << 12)->Arg(422784);
BENCHMARK(BM_WindowSum<false>)->Arg(65536);
BENCHMARK(BM_WindowSum<true>)->Arg(65536);
BENCHMARK(BM_Gram<false>)->Arg(32);
BENCHMARK(BM_Gram<true>)->Arg(32);

BENCHMARK_MAIN();
