// Microbenchmarks for the pieces that dominate a search run: transform
// evaluation, the unified loss on a minibatch, one training epoch, and the
// outer REINFORCE update.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "amlfs/data.hpp"
#include "amlfs/losses.hpp"
#include "amlfs/nnet.hpp"
#include "amlfs/piecewise.hpp"
#include "amlfs/rng.hpp"
#include "amlfs/search.hpp"

using namespace amlfs;

namespace {

LossParams random_params(int m, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> theta(4 * static_cast<std::size_t>(m));
    for (double& v : theta) v = rng.gaussian(0.5, 0.3);
    return LossParams::from_theta(theta, m);
}

LogitsBatch random_batch(int n, int c, std::uint64_t seed) {
    Rng rng(seed);
    LogitsBatch b;
    b.values = Matrix(n, c);
    b.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) b.values(i, j) = rng.uniform(-10.0, 10.0);
        b.labels[i] = rng.uniform_int(c);
    }
    return b;
}

void BM_PiecewiseEval(benchmark::State& state) {
    auto params = random_params(static_cast<int>(state.range(0)), 1);
    Rng rng(2);
    std::vector<double> xs(1024);
    for (double& x : xs) x = rng.uniform(-1.0, 1.0);
    for (auto _ : state) {
        double acc = 0.0;
        for (double x : xs) acc += params.t_fn.eval(x);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(xs.size()));
}
BENCHMARK(BM_PiecewiseEval)->Arg(6)->Arg(12);

void BM_UnifiedLoss(benchmark::State& state) {
    auto params = random_params(6, 3);
    auto batch = random_batch(static_cast<int>(state.range(0)), 10, 4);
    for (auto _ : state) {
        auto out = unified_loss(batch, params, 10.0);
        benchmark::DoNotOptimize(out.loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_UnifiedLoss)->Arg(32)->Arg(256);

void BM_TrainEpoch(benchmark::State& state) {
    DatasetSplit data = make_blobs(10, 100, 16, 0.3, 5);
    ModelConfig mc;
    mc.input_dim = 16;
    mc.hidden_dims = {32};
    mc.feature_dim = 16;
    mc.num_classes = 10;
    TrainConfig tc;
    auto params = random_params(6, 6);
    LossFn loss = [&params](const LogitsBatch& b) {
        return unified_loss(b, params, 10.0);
    };
    for (auto _ : state) {
        state.PauseTiming();
        ModelState model = ModelState::init(mc, 7);
        Rng rng(8);
        state.ResumeTiming();
        auto stats = train_one_epoch(model, data.train_x, data.train_y, loss, tc, rng);
        benchmark::DoNotOptimize(stats.mean_loss);
    }
    state.SetItemsProcessed(state.iterations() * data.train_x.rows);
}
BENCHMARK(BM_TrainEpoch);

void BM_ReinforceUpdate(benchmark::State& state) {
    const int population = static_cast<int>(state.range(0));
    SearchDistribution dist = SearchDistribution::identity_init(6, 0.2, 0.05);
    Rng rng(9);
    auto thetas = sample_population(dist, population, rng);
    std::vector<double> rewards(static_cast<std::size_t>(population));
    for (double& r : rewards) r = rng.uniform();
    for (auto _ : state) {
        SearchDistribution d = dist;
        reinforce_update(d, thetas, normalize_rewards(rewards), OuterOptimizer::Adam);
        benchmark::DoNotOptimize(d.mu[0]);
    }
}
BENCHMARK(BM_ReinforceUpdate)->Arg(8)->Arg(32);

} // namespace

BENCHMARK_MAIN();
