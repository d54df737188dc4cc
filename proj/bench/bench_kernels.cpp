// Serial reference kernels against their OpenMP counterparts.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sdd/kernels.hpp"

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

template <auto Kernel>
void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = filled(n * n, 1), b = filled(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        Kernel(a, b, c, n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <auto Kernel>
void bm_softmax(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    constexpr std::size_t cols = 64;
    const auto in = filled(rows * cols, 3);
    std::vector<double> out(rows * cols);
    for (auto _ : state) {
        Kernel(in, out, rows, cols);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * cols));
}

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
    sdd::kernels::serial::matmul(a, b, c, m, k, n);
}
void matmul_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    sdd::kernels::matmul(a, b, c, m, k, n);
}
void softmax_serial(std::span<const double> in, std::span<double> out, std::size_t r, std::size_t c) {
    sdd::kernels::serial::softmax_rows(in, out, r, c);
}
void softmax_parallel(std::span<const double> in, std::span<double> out, std::size_t r, std::size_t c) {
    sdd::kernels::softmax_rows(in, out, r, c);
}

}  // namespace

BENCHMARK(bm_matmul<matmul_serial>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_matmul<matmul_parallel>)->Name("matmul/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_softmax<softmax_serial>)->Name("softmax_rows/serial")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(bm_softmax<softmax_parallel>)->Name("softmax_rows/openmp")->RangeMultiplier(4)->Range(64, 16384);

BENCHMARK_MAIN();
