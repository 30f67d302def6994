#include "amlfs/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "amlfs/errors.hpp"
#include "amlfs/losses.hpp"

namespace amlfs {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_data_model(const DatasetSplit& data, const ModelConfig& model) {
    if (data.train_x.rows < 1 || data.val_x.rows < 1) {
        throw ShapeError("need non-empty train and val splits");
    }
    if (data.train_x.cols != model.input_dim) {
        throw ConsistencyError("data has " + std::to_string(data.train_x.cols) +
                               " features but the model expects " +
                               std::to_string(model.input_dim));
    }
    if (data.num_classes != model.num_classes) {
        throw ConsistencyError("data has " + std::to_string(data.num_classes) +
                               " classes but the model expects " +
                               std::to_string(model.num_classes));
    }
}

} // namespace

SearchDistribution SearchDistribution::identity_init(int num_intervals, double sigma,
                                                     double eta) {
    SearchDistribution d;
    d.mu = LossParams::identity(num_intervals).to_theta();
    d.sigma = sigma;
    d.eta = eta;
    d.adam.m.assign(d.mu.size(), 0.0);
    d.adam.v.assign(d.mu.size(), 0.0);
    return d;
}

void SearchConfig::validate() const {
    if (population < 1) throw ShapeError("population must be >= 1");
    if (num_intervals < 1) throw ShapeError("num_intervals must be >= 1");
    if (epochs < 1) throw ShapeError("search epochs must be >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("sigma must be finite and positive");
    }
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw DomainError("eta must be finite and positive");
    }
    if (worker_count < 1) throw ShapeError("worker_count must be >= 1");
    if (!mu_init.empty() &&
        mu_init.size() != static_cast<std::size_t>(4 * num_intervals)) {
        throw ShapeError("mu_init must have 4*M entries");
    }
    inner.validate();
    model.validate();
}

std::vector<std::vector<double>> sample_population(const SearchDistribution& dist,
                                                   int population, Rng& rng) {
    if (population < 1) throw ShapeError("population must be >= 1");
    std::vector<std::vector<double>> thetas(population);
    for (int i = 0; i < population; ++i) {
        thetas[i].resize(dist.mu.size());
        for (std::size_t d = 0; d < dist.mu.size(); ++d) {
            thetas[i][d] = dist.mu[d] + dist.sigma * rng.gaussian();
        }
    }
    return thetas;
}

std::vector<double> normalize_rewards(const std::vector<double>& rewards) {
    if (rewards.empty()) throw ShapeError("cannot normalize an empty reward vector");
    double sum = 0.0;
    int n = 0;
    for (double r : rewards) {
        if (std::isfinite(r)) {
            sum += r;
            ++n;
        }
    }
    std::vector<double> out(rewards.size(), 0.0);
    if (n == 0) return out;
    const double mean = sum / n;
    double ss = 0.0;
    for (double r : rewards) {
        if (std::isfinite(r)) ss += (r - mean) * (r - mean);
    }
    const double sd = std::sqrt(ss / n);
    if (sd < 1e-12) return out; // equal rewards carry no signal
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        if (std::isfinite(rewards[i])) out[i] = (rewards[i] - mean) / sd;
    }
    return out;
}

void reinforce_update(SearchDistribution& dist,
                      const std::vector<std::vector<double>>& thetas,
                      const std::vector<double>& normalized_rewards,
                      OuterOptimizer opt) {
    const std::size_t D = dist.mu.size();
    const std::size_t B = thetas.size();
    if (B == 0 || normalized_rewards.size() != B) {
        throw ShapeError("reward count does not match population");
    }
    for (const auto& t : thetas) {
        if (t.size() != D) throw ShapeError("theta dimension does not match mu");
    }

    std::vector<double> g(D, 0.0);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t d = 0; d < D; ++d) {
            g[d] += normalized_rewards[i] * (thetas[i][d] - dist.mu[d]);
        }
    }
    const double scale = 1.0 / (static_cast<double>(B) * dist.sigma * dist.sigma);
    bool all_zero = true;
    for (double& v : g) {
        v *= scale;
        if (!std::isfinite(v)) throw NumericError("non-finite REINFORCE gradient");
        if (v != 0.0) all_zero = false;
    }

    if (opt == OuterOptimizer::Sgd) {
        for (std::size_t d = 0; d < D; ++d) dist.mu[d] += dist.eta * g[d];
        return;
    }

    AdamState& a = dist.adam;
    if (a.m.size() != D || a.v.size() != D) {
        throw ShapeError("Adam state does not match mu dimension");
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    a.step += 1;
    for (std::size_t d = 0; d < D; ++d) {
        a.m[d] = b1 * a.m[d] + (1.0 - b1) * g[d];
        a.v[d] = b2 * a.v[d] + (1.0 - b2) * g[d] * g[d];
    }
    if (all_zero) return; // moments decayed above; mu stays put
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(a.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(a.step));
    for (std::size_t d = 0; d < D; ++d) {
        const double mhat = a.m[d] / c1;
        const double vhat = a.v[d] / c2;
        dist.mu[d] += dist.eta * mhat / (std::sqrt(vhat) + eps);
    }
}

std::vector<ModelState> broadcast(const ModelState& parent, int population) {
    if (population < 0) throw ShapeError("population must be >= 0");
    return std::vector<ModelState>(static_cast<std::size_t>(population), parent);
}

ModelState init_search_model(const ModelConfig& config, std::uint64_t seed) {
    return ModelState::init(config, derive_stream(seed, 0, kModelInitStream));
}

SearchResult run_search(const SearchConfig& cfg, const DatasetSplit& data,
                        const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    data.validate();
    check_data_model(data, cfg.model);

    const int B = cfg.population;
    SearchDistribution dist =
        SearchDistribution::identity_init(cfg.num_intervals, cfg.sigma, cfg.eta);
    if (!cfg.mu_init.empty()) dist.mu = cfg.mu_init;
    ModelState parent = init_search_model(cfg.model, cfg.seed);

    SearchResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng theta_rng(derive_stream(cfg.seed, epoch, kThetaStream));
        auto thetas = sample_population(dist, B, theta_rng);

        std::vector<ModelState> clones = broadcast(parent, B);
        std::vector<double> rewards(B, -kInf);
        std::vector<int> clamps(B, 0);
        std::vector<std::string> failures(B);

        // Each candidate touches only its own slots, so scheduling cannot
        // change the results.
        auto run_candidate = [&](int i) {
            try {
                LossParams lp = LossParams::from_theta(thetas[i], cfg.num_intervals);
                LossFn fn = [lp, s = cfg.inner.scale_s](const LogitsBatch& b) {
                    return unified_loss(b, lp, s);
                };
                Rng rng(derive_stream(cfg.seed, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(i)));
                EpochStats st = train_one_epoch(clones[i], data.train_x, data.train_y,
                                                fn, cfg.inner, rng);
                clamps[i] = st.clamp_events;
                rewards[i] = evaluate(clones[i], data.val_x, data.val_y,
                                      cfg.inner.scale_s);
            } catch (const NumericError& e) {
                rewards[i] = -kInf; // diverged candidates lose, search continues
                failures[i] = e.what();
            }
        };

        const int W = std::min(cfg.worker_count, B);
        if (W <= 1) {
            for (int i = 0; i < B; ++i) run_candidate(i);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(W);
            for (int w = 0; w < W; ++w) {
                pool.emplace_back([&, w]() {
                    try {
                        for (int i = w; i < B; i += W) run_candidate(i);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto& t : pool) t.join();
            for (auto& e : errors) {
                if (e) std::rethrow_exception(e);
            }
        }

        int winner = -1;
        for (int i = 0; i < B; ++i) {
            if (std::isfinite(rewards[i]) &&
                (winner < 0 || rewards[i] > rewards[winner])) {
                winner = i; // strict > keeps the lowest index on ties
            }
        }
        if (winner < 0) {
            std::string msg = "search epoch " + std::to_string(epoch) + ": all " +
                              std::to_string(B) + " candidates failed";
            for (const auto& f : failures) {
                if (!f.empty()) {
                    msg += " (first failure: " + f + ")";
                    break;
                }
            }
            throw NumericError(msg);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.raw_rewards = rewards;
        rec.normalized_rewards = normalize_rewards(rewards);
        rec.winner = winner;
        rec.mu_before = dist.mu;
        reinforce_update(dist, thetas, rec.normalized_rewards, cfg.outer_opt);
        for (double v : dist.mu) {
            if (!std::isfinite(v)) {
                throw NumericError("mu became non-finite at epoch " +
                                   std::to_string(epoch));
            }
        }
        rec.mu_after = dist.mu;
        rec.thetas = std::move(thetas);
        for (int c : clamps) rec.clamp_events += c;
        rec.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        parent = std::move(clones[winner]);
        result.records.push_back(std::move(rec));
        if (on_epoch) on_epoch(result.records.back());
    }
    result.model = std::move(parent);
    result.dist = std::move(dist);
    return result;
}

BaselineResult run_baseline(const ModelConfig& model_cfg, const TrainConfig& inner,
                            const LossFn& loss_fn, const DatasetSplit& data) {
    inner.validate();
    model_cfg.validate();
    data.validate();
    check_data_model(data, model_cfg);

    const std::uint64_t seed = inner.seed;
    BaselineResult res;
    res.model = init_search_model(model_cfg, seed);
    for (int epoch = 1; epoch <= inner.epochs; ++epoch) {
        // candidate-0 stream: a search with sigma -> 0 walks this exact path
        Rng rng(derive_stream(seed, static_cast<std::uint64_t>(epoch), 0));
        EpochStats st = train_one_epoch(res.model, data.train_x, data.train_y,
                                        loss_fn, inner, rng);
        double acc = evaluate(res.model, data.val_x, data.val_y, inner.scale_s);
        res.history.push_back({epoch, st.mean_loss, acc});
    }
    return res;
}

std::string epoch_record_to_json(const EpochRecord& rec) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["winner"] = rec.winner;
    j["clamp_events"] = rec.clamp_events;
    j["thetas"] = rec.thetas;
    j["raw_rewards"] = rec.raw_rewards;       // -inf dumps as null
    j["normalized_rewards"] = rec.normalized_rewards;
    j["mu_before"] = rec.mu_before;
    j["mu_after"] = rec.mu_after;
    return j.dump();
}

void write_mu_trajectory_csv(std::ostream& os,
                             const std::vector<EpochRecord>& records) {
    os << "epoch,coord,value\n";
    char buf[32];
    auto row = [&](int epoch, const std::vector<double>& mu) {
        for (std::size_t d = 0; d < mu.size(); ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", mu[d]);
            os << epoch << ',' << d << ',' << buf << '\n';
        }
    };
    if (!records.empty()) row(0, records.front().mu_before);
    for (const auto& rec : records) row(rec.epoch, rec.mu_after);
}

} // namespace amlfs
