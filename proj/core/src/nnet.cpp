#include "amlfs/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "amlfs/errors.hpp"

namespace amlfs {
namespace {

void check_grad_finite(const Matrix& g, const std::string& name) {
    for (double v : g.data) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite gradient in " + name);
        }
    }
}

// y (n x out) = x (n x in) * w^T + b
void linear_forward(const Matrix& x, const LinearLayer& layer, Matrix& out) {
    const int n = x.rows, in = x.cols, o = layer.w.rows;
    out = Matrix(n, o);
    for (int i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        for (int r = 0; r < o; ++r) {
            const double* wr = layer.w.row(r);
            double acc = layer.b(0, r);
            for (int c = 0; c < in; ++c) acc += wr[c] * xi[c];
            oi[r] = acc;
        }
    }
}

} // namespace

void ModelConfig::validate() const {
    if (input_dim < 1) throw ShapeError("input_dim must be >= 1");
    if (feature_dim < 1) throw ShapeError("feature_dim must be >= 1");
    if (num_classes < 2) throw ShapeError("num_classes must be >= 2");
    for (int h : hidden_dims) {
        if (h < 1) throw ShapeError("hidden layer width must be >= 1");
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw DomainError("momentum must be in [0, 1)");
    }
    if (batch_size < 1) throw ShapeError("batch_size must be >= 1");
    if (!(scale_s > 0.0)) throw DomainError("scale_s must be positive");
    if (epochs < 1) throw ShapeError("epochs must be >= 1");
}

ModelState ModelState::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelState m;
    m.config = config;
    m.rng_seed = seed;
    Rng rng(seed);

    auto make_layer = [&rng](int out, int in) {
        LinearLayer layer;
        layer.w = Matrix(out, in);
        layer.b = Matrix(1, out);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
        for (double& v : layer.b.data) v = rng.uniform(-bound, bound);
        return layer;
    };

    int prev = config.input_dim;
    for (int h : config.hidden_dims) {
        m.layers.push_back(make_layer(h, prev));
        prev = h;
    }
    m.layers.push_back(make_layer(config.feature_dim, prev));

    m.head_w = Matrix(config.feature_dim, config.num_classes);
    const double hb = 1.0 / std::sqrt(static_cast<double>(config.feature_dim));
    for (double& v : m.head_w.data) v = rng.uniform(-hb, hb);

    for (const LinearLayer& l : m.layers) {
        LinearLayer v;
        v.w = Matrix(l.w.rows, l.w.cols);
        v.b = Matrix(1, l.b.cols);
        m.layer_vel.push_back(std::move(v));
    }
    m.head_vel = Matrix(config.feature_dim, config.num_classes);
    return m;
}

Matrix forward(const ModelState& model, const Matrix& inputs, double scale_s,
               ForwardCache* cache) {
    if (inputs.cols != model.config.input_dim) {
        throw ShapeError("input has " + std::to_string(inputs.cols) +
                         " columns, model expects " +
                         std::to_string(model.config.input_dim));
    }
    if (inputs.rows < 1) throw ShapeError("empty input batch");
    if (model.config.head == HeadKind::Cosine && !(scale_s > 0.0)) {
        throw DomainError("scale_s must be positive");
    }

    const int L = static_cast<int>(model.layers.size());
    if (cache) {
        cache->inputs = inputs;
        cache->pre_act.assign(L, Matrix());
        cache->activations.assign(L, Matrix());
        cache->guarded_norm_events = 0;
    }

    Matrix act = inputs;
    for (int l = 0; l < L; ++l) {
        Matrix pre;
        linear_forward(act, model.layers[l], pre);
        if (cache) cache->pre_act[l] = pre;
        if (l + 1 < L) { // hidden layers get ReLU; the feature layer is linear
            for (double& v : pre.data) v = std::max(0.0, v);
        }
        if (cache) cache->activations[l] = pre;
        act = std::move(pre);
    }

    const int N = act.rows, F = act.cols, C = model.config.num_classes;
    Matrix logits(N, C);

    if (model.config.head == HeadKind::Linear) {
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < C; ++j) {
                double acc = 0.0;
                for (int r = 0; r < F; ++r) acc += act(i, r) * model.head_w(r, j);
                logits(i, j) = acc;
            }
        }
        return logits;
    }

    std::vector<double> wnorm(C);
    for (int j = 0; j < C; ++j) {
        double s2 = 0.0;
        for (int r = 0; r < F; ++r) s2 += model.head_w(r, j) * model.head_w(r, j);
        wnorm[j] = std::max(std::sqrt(s2), kNormFloor);
    }
    std::vector<double> xnorm(N);
    int guarded = 0;
    for (int i = 0; i < N; ++i) {
        double s2 = 0.0;
        for (int r = 0; r < F; ++r) s2 += act(i, r) * act(i, r);
        double n = std::sqrt(s2);
        if (n <= kNormFloor) ++guarded;
        xnorm[i] = std::max(n, kNormFloor);
    }
    Matrix cosines(N, C);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < C; ++j) {
            double acc = 0.0;
            for (int r = 0; r < F; ++r) acc += act(i, r) * model.head_w(r, j);
            // clamp: fp roundoff can push |cos| past 1 by a few ulps
            double c = std::clamp(acc / (xnorm[i] * wnorm[j]), -1.0, 1.0);
            cosines(i, j) = c;
            logits(i, j) = scale_s * c;
        }
    }
    if (cache) {
        cache->cosines = std::move(cosines);
        cache->feat_norms = std::move(xnorm);
        cache->weight_norms = std::move(wnorm);
        cache->guarded_norm_events = guarded;
    }
    return logits;
}

Gradients backward(const ModelState& model, const ForwardCache& cache,
                   const Matrix& grad_logits, double scale_s) {
    const int L = static_cast<int>(model.layers.size());
    const int N = grad_logits.rows, C = grad_logits.cols;
    const int F = model.config.feature_dim;
    if (C != model.config.num_classes || N != cache.inputs.rows) {
        throw ShapeError("grad_logits shape does not match the forward cache");
    }
    const Matrix& feat = cache.activations[L - 1];

    Gradients g;
    g.head_w = Matrix(F, C);
    Matrix dfeat(N, F);

    if (model.config.head == HeadKind::Linear) {
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < C; ++j) {
                double gij = grad_logits(i, j);
                for (int r = 0; r < F; ++r) {
                    dfeat(i, r) += gij * model.head_w(r, j);
                    g.head_w(r, j) += gij * feat(i, r);
                }
            }
        }
    } else {
        // f_ij = s * (x_i . w_j) / (dx_i * dw_j) with dx, dw floored at
        // kNormFloor. Where the floor is active the norm is a constant, so
        // the corresponding projection term drops out.
        for (int i = 0; i < N; ++i) {
            const double dx = cache.feat_norms[i];
            const bool x_free = dx > kNormFloor;
            for (int j = 0; j < C; ++j) {
                double gij = grad_logits(i, j);
                if (gij == 0.0) continue;
                const double dw = cache.weight_norms[j];
                const bool w_free = dw > kNormFloor;
                const double cos_ij = cache.cosines(i, j);
                for (int r = 0; r < F; ++r) {
                    double xhat = feat(i, r) / dx;
                    double what = model.head_w(r, j) / dw;
                    dfeat(i, r) += gij * scale_s * (what - (x_free ? cos_ij * xhat : 0.0)) / dx;
                    g.head_w(r, j) += gij * scale_s * (xhat - (w_free ? cos_ij * what : 0.0)) / dw;
                }
            }
        }
    }

    g.layers.resize(L);
    Matrix delta = std::move(dfeat); // dL/d activations of layer l
    for (int l = L - 1; l >= 0; --l) {
        if (l + 1 < L) { // undo ReLU (feature layer has none)
            const Matrix& pre = cache.pre_act[l];
            for (std::size_t k = 0; k < delta.data.size(); ++k) {
                if (pre.data[k] <= 0.0) delta.data[k] = 0.0;
            }
        }
        const Matrix& below = (l == 0) ? cache.inputs : cache.activations[l - 1];
        const int out = model.layers[l].w.rows, in = model.layers[l].w.cols;
        g.layers[l].w = Matrix(out, in);
        g.layers[l].b = Matrix(1, out);
        for (int i = 0; i < N; ++i) {
            const double* di = delta.row(i);
            const double* bi = below.row(i);
            for (int r = 0; r < out; ++r) {
                double* gw = g.layers[l].w.row(r);
                for (int c = 0; c < in; ++c) gw[c] += di[r] * bi[c];
                g.layers[l].b(0, r) += di[r];
            }
        }
        if (l > 0) {
            Matrix next(N, in);
            for (int i = 0; i < N; ++i) {
                const double* di = delta.row(i);
                double* ni = next.row(i);
                for (int r = 0; r < out; ++r) {
                    const double* wr = model.layers[l].w.row(r);
                    for (int c = 0; c < in; ++c) ni[c] += di[r] * wr[c];
                }
            }
            delta = std::move(next);
        }
    }
    return g;
}

void apply_sgd(ModelState& model, const Gradients& grads, double learning_rate,
               double momentum) {
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        check_grad_finite(grads.layers[l].w, "layers." + std::to_string(l) + ".w");
        check_grad_finite(grads.layers[l].b, "layers." + std::to_string(l) + ".b");
    }
    check_grad_finite(grads.head_w, "head.w");

    auto step = [learning_rate, momentum](Matrix& p, Matrix& v, const Matrix& g) {
        for (std::size_t k = 0; k < p.data.size(); ++k) {
            v.data[k] = momentum * v.data[k] + g.data[k];
            p.data[k] -= learning_rate * v.data[k];
        }
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        step(model.layers[l].w, model.layer_vel[l].w, grads.layers[l].w);
        step(model.layers[l].b, model.layer_vel[l].b, grads.layers[l].b);
    }
    step(model.head_w, model.head_vel, grads.head_w);
}

void backward_and_step(ModelState& model, const ForwardCache& cache,
                       const Matrix& grad_logits, const TrainConfig& cfg) {
    Gradients g = backward(model, cache, grad_logits, cfg.scale_s);
    apply_sgd(model, g, cfg.learning_rate, cfg.momentum);
}

double evaluate(const ModelState& model, const Matrix& inputs,
                const std::vector<int>& labels, double scale_s) {
    if (inputs.rows < 1) throw ShapeError("cannot evaluate on an empty split");
    if (static_cast<int>(labels.size()) != inputs.rows) {
        throw ShapeError("label count does not match row count");
    }
    Matrix logits = forward(model, inputs, scale_s);
    int correct = 0;
    for (int i = 0; i < logits.rows; ++i) {
        const double* row = logits.row(i);
        int best = 0;
        for (int j = 1; j < logits.cols; ++j) {
            if (row[j] > row[best]) best = j; // ties keep the lowest index
        }
        if (best == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / logits.rows;
}

EpochStats train_one_epoch(ModelState& model, const Matrix& inputs,
                           const std::vector<int>& labels, const LossFn& loss_fn,
                           const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    const int n = inputs.rows;
    if (n < 1) throw ShapeError("cannot train on an empty split");
    if (static_cast<int>(labels.size()) != n) {
        throw ShapeError("label count does not match row count");
    }

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i >= 1; --i) {
        std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    }

    EpochStats stats;
    double total = 0.0;
    const int D = inputs.cols;
    for (int start = 0; start < n; start += cfg.batch_size) {
        const int bs = std::min(cfg.batch_size, n - start);
        LogitsBatch batch;
        Matrix xb(bs, D);
        batch.labels.resize(bs);
        for (int i = 0; i < bs; ++i) {
            const int src = perm[start + i];
            std::copy(inputs.row(src), inputs.row(src) + D, xb.row(i));
            batch.labels[i] = labels[src];
        }
        ForwardCache cache;
        batch.values = forward(model, xb, cfg.scale_s, &cache);
        LossOutput out = loss_fn(batch);
        total += out.loss * bs;
        stats.clamp_events += out.clamp_events;
        stats.guarded_norm_events += cache.guarded_norm_events;
        backward_and_step(model, cache, out.grad, cfg);
    }
    stats.mean_loss = total / n;
    return stats;
}

} // namespace amlfs
