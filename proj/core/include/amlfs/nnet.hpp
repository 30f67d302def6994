#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "amlfs/losses.hpp"
#include "amlfs/matrix.hpp"
#include "amlfs/rng.hpp"

namespace amlfs {

// Norms below this floor are replaced by it before dividing, so zero feature
// vectors produce defined cosines instead of NaN.
inline constexpr double kNormFloor = 1e-12;

enum class HeadKind { Cosine, Linear };

struct ModelConfig {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int feature_dim = 0;
    int num_classes = 0;
    HeadKind head = HeadKind::Cosine;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    int batch_size = 32;
    double scale_s = 10.0; // cosine-head scale
    int epochs = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LinearLayer {
    Matrix w; // out x in
    Matrix b; // 1 x out

    bool operator==(const LinearLayer&) const = default;
};

// MLP with ReLU hidden layers, a linear feature layer, and either a cosine
// head (f_j = s * cos angle between feature and class weight) or a plain
// linear head. Momentum buffers live with the parameters so a checkpoint
// resumes mid-training exactly.
struct ModelState {
    ModelConfig config;
    std::vector<LinearLayer> layers;   // hidden layers then the feature layer
    Matrix head_w;                     // feature_dim x num_classes
    std::vector<LinearLayer> layer_vel;
    Matrix head_vel;
    std::uint64_t rng_seed = 0;

    static ModelState init(const ModelConfig& config, std::uint64_t seed);
    bool operator==(const ModelState&) const = default;
};

struct ForwardCache {
    Matrix inputs;
    std::vector<Matrix> pre_act;     // per layer, before ReLU
    std::vector<Matrix> activations; // per layer, after ReLU (feature layer: linear)
    Matrix cosines;                  // cosine head only, batch x C
    std::vector<double> feat_norms;  // clamped at kNormFloor
    std::vector<double> weight_norms;
    int guarded_norm_events = 0;
};

struct Gradients {
    std::vector<LinearLayer> layers;
    Matrix head_w;
};

// Returns logits (batch x C). With the cosine head the cosine is clamped
// into [-1, 1] before scaling, so downstream transforms stay in domain.
Matrix forward(const ModelState& model, const Matrix& inputs, double scale_s,
               ForwardCache* cache = nullptr);

Gradients backward(const ModelState& model, const ForwardCache& cache,
                   const Matrix& grad_logits, double scale_s);

// SGD with classical momentum: v = mu*v + g; p -= lr*v.
void apply_sgd(ModelState& model, const Gradients& grads, double learning_rate,
               double momentum);

void backward_and_step(ModelState& model, const ForwardCache& cache,
                       const Matrix& grad_logits, const TrainConfig& cfg);

// Top-1 accuracy; argmax ties go to the lowest class index.
double evaluate(const ModelState& model, const Matrix& inputs,
                const std::vector<int>& labels, double scale_s);

using LossFn = std::function<LossOutput(const LogitsBatch&)>;

struct EpochStats {
    double mean_loss = 0.0; // mean per-sample loss over the epoch
    int clamp_events = 0;
    int guarded_norm_events = 0;
};

// One pass over the data: seeded shuffle, minibatches (last one short), one
// SGD step per batch.
EpochStats train_one_epoch(ModelState& model, const Matrix& inputs,
                           const std::vector<int>& labels, const LossFn& loss_fn,
                           const TrainConfig& cfg, Rng& rng);

} // namespace amlfs
