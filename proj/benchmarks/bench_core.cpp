#include <benchmark/benchmark.h>

#include "emospace/gbm.hpp"
#include "emospace/sae.hpp"
#include "emospace/space.hpp"
#include "emospace/stats.hpp"
#include "emospace/steer.hpp"
#include "test_support.hpp"

using namespace emospace;

static void BM_Encode(benchmark::State& state) {
    Rng rng(1);
    const auto d = static_cast<std::size_t>(state.range(0));
    const SaeModel sae = emospace::testing::random_sae(rng, d, 16 * d);
    const auto x = emospace::testing::random_vector(rng, d);
    for (auto _ : state) benchmark::DoNotOptimize(encode(sae, x));
}
BENCHMARK(BM_Encode)->Arg(16)->Arg(64)->Arg(256);

static void BM_GbmTrain(benchmark::State& state) {
    Rng rng(2);
    const auto n = static_cast<std::size_t>(state.range(0));
    MatrixD x(n, 20);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 20; ++j) x(i, j) = rng.normal();
        y[i] = x(i, 0) - 0.5 * x(i, 1) + 0.1 * rng.normal();
    }
    const GbmParams params{.rounds = 50};
    for (auto _ : state) benchmark::DoNotOptimize(train_gbm(x, y, params));
}
BENCHMARK(BM_GbmTrain)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_Nmf(benchmark::State& state) {
    Rng rng(3);
    MatrixD s(10, static_cast<std::size_t>(state.range(0)));
    for (double& v : s.data()) v = rng.uniform() < 0.2 ? rng.uniform() : 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(nmf(s, {5, 100, 1}));
}
BENCHMARK(BM_Nmf)->Arg(256)->Arg(4096)->Unit(benchmark::kMillisecond);

static void BM_ClusterPermutation(benchmark::State& state) {
    Rng rng(4);
    MatrixD p(260, 32);
    std::vector<int> labels;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        labels.push_back(static_cast<int>(i % 26));
        for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) = rng.normal();
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(cluster_permutation_test(ClusterMetric::CalinskiHarabasz, p, labels, 100, 1));
}
BENCHMARK(BM_ClusterPermutation)->Unit(benchmark::kMillisecond);

static void BM_LmmFit(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> y, x;
    std::vector<std::string> g;
    for (int i = 0; i < 400; ++i) {
        const double u = rng.normal();
        for (double f : {0.0, 5.0, 10.0, 15.0, 20.0}) {
            x.push_back(f);
            y.push_back(0.5 * f + u + rng.normal());
            g.push_back(std::to_string(i));
        }
    }
    const auto data = stats::make_lmm_data(y, x, g);
    for (auto _ : state) benchmark::DoNotOptimize(stats::fit_lmm_random_intercept(data));
}
BENCHMARK(BM_LmmFit);
BENCHMARK_MAIN();
