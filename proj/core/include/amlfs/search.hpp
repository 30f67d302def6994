#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "amlfs/data.hpp"
#include "amlfs/nnet.hpp"
#include "amlfs/piecewise.hpp"
#include "amlfs/rng.hpp"

namespace amlfs {

// Sub-stream ids hung off the user seed. Candidate training uses
// derive_stream(seed, epoch, candidate) directly, so these constants live in
// (epoch 0, ...) and (..., kThetaStream) slots candidates never occupy.
inline constexpr std::uint64_t kModelInitStream = 0xa31fULL;
inline constexpr std::uint64_t kThetaStream = 0xffffffffffffffffULL;

enum class OuterOptimizer { Adam, Sgd };
enum class RewardKind { Top1Accuracy };

// The reward: top-1 accuracy on the validation half.
inline double evaluate(const ModelState& model, const DatasetSplit& split,
                       double scale_s) {
    return evaluate(model, split.val_x, split.val_y, scale_s);
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

// Sampling distribution over theta: independent gaussians, fixed sigma.
struct SearchDistribution {
    std::vector<double> mu;
    double sigma = 0.2;
    double eta = 0.05; // outer learning rate
    AdamState adam;

    static SearchDistribution identity_init(int num_intervals, double sigma,
                                            double eta);
};

struct SearchConfig {
    int population = 32;
    int num_intervals = 6;
    int epochs = 10;
    double sigma = 0.2;
    double eta = 0.05;
    std::vector<double> mu_init; // empty = identity transforms
    TrainConfig inner;           // inner.epochs/seed unused: one epoch per
                                 // candidate, streams derived from seed below
    ModelConfig model;
    RewardKind reward = RewardKind::Top1Accuracy;
    int worker_count = 1;
    std::uint64_t seed = 0;
    OuterOptimizer outer_opt = OuterOptimizer::Adam;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;                         // 1-based
    std::vector<std::vector<double>> thetas;
    std::vector<double> raw_rewards;       // val top-1 accuracy; -inf = failed
    std::vector<double> normalized_rewards;
    int winner = -1;
    std::vector<double> mu_before;
    std::vector<double> mu_after;
    int clamp_events = 0;
    double duration_seconds = 0.0; // informational; never serialized
};

struct SearchResult {
    ModelState model;
    std::vector<EpochRecord> records;
    SearchDistribution dist;
};

// theta_i = mu + sigma * z, drawn candidate-major then coordinate-minor.
std::vector<std::vector<double>> sample_population(const SearchDistribution& dist,
                                                   int population, Rng& rng);

// Zero mean, unit variance over the finite entries. Non-finite rewards are
// excluded from the statistics and map to 0. If the finite spread is below
// 1e-12 every entry maps to 0.
std::vector<double> normalize_rewards(const std::vector<double>& rewards);

// Ascends mu along (1/B) sum_i R_i (theta_i - mu) / sigma^2. An exactly zero
// gradient decays the Adam moments but leaves mu untouched.
void reinforce_update(SearchDistribution& dist,
                      const std::vector<std::vector<double>>& thetas,
                      const std::vector<double>& normalized_rewards,
                      OuterOptimizer opt);

// Independent copies of the parent for each candidate; 0 gives an empty
// population.
std::vector<ModelState> broadcast(const ModelState& parent, int population);

// Shared model initialization so a plain baseline starts from the identical
// parent a search would use.
ModelState init_search_model(const ModelConfig& config, std::uint64_t seed);

// The full bilevel loop. Per epoch: sample B thetas, train each candidate
// one epoch from the shared parent (workers striped over candidates), score
// on validation accuracy, update mu via REINFORCE, and promote the best
// candidate to parent. Results are identical for any worker_count.
SearchResult run_search(const SearchConfig& cfg, const DatasetSplit& data,
                        const std::function<void(const EpochRecord&)>& on_epoch = {});

// Plain training with a fixed loss, stream-aligned with search candidate 0.
struct BaselineEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct BaselineResult {
    ModelState model;
    std::vector<BaselineEpoch> history;
};

// Uses inner.epochs and inner.seed.
BaselineResult run_baseline(const ModelConfig& model_cfg, const TrainConfig& inner,
                            const LossFn& loss_fn, const DatasetSplit& data);

// One JSON object per record, keys sorted, no whitespace; -inf rewards
// serialize as null. Exact bytes are part of the contract.
std::string epoch_record_to_json(const EpochRecord& rec);

// Columns: epoch,coord,value. Epoch 0 carries mu before the first update.
void write_mu_trajectory_csv(std::ostream& os, const std::vector<EpochRecord>& records);

} // namespace amlfs
