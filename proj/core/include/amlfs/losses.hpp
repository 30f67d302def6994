#pragma once

#include <functional>
#include <ostream>
#include <string_view>
#include <vector>

#include "amlfs/matrix.hpp"
#include "amlfs/piecewise.hpp"

namespace amlfs {

// tau outputs below this are clamped before the log; each clamp is counted
// so searches that lean on clamping stay visible in the run log.
inline constexpr double kProbFloor = 1e-12;

// Per-class activations f (batch x C) plus labels. Under the cosine head
// with scale s, every value is s*cos(theta_j).
struct LogitsBatch {
    Matrix values;
    std::vector<int> labels;

    int size() const { return values.rows; }
    int num_classes() const { return values.cols; }
    void validate() const;
};

struct LossOutput {
    double loss = 0.0;                   // mean over the batch
    Matrix grad;                         // dL/df, same shape as the input
    std::vector<double> per_sample_loss; // before the 1/N reduction
    int clamp_events = 0;
};

// Scalar transform with derivative; the t() of margin-based losses.
struct Transform {
    std::function<double(double)> value;
    std::function<double(double)> deriv;
};

Transform identity_transform();
Transform affine_transform(double a, double b);
Transform piecewise_transform(const PiecewiseLinearFn& fn);

enum class MarginKind { LSoftmax, ASoftmax, ArcFace };

// Closed-form margin transforms:
//   LSoftmax  t(x) = cos(m * arccos(x))
//   ASoftmax  t(x) = x + m
//   ArcFace   t(x) = cos(arccos(x) + m)
struct MarginTransform {
    MarginKind kind = MarginKind::ArcFace;
    double m = 0.5;

    double value(double x) const;
    double derivative(double x) const;
};

Transform margin_transform(const MarginTransform& t);

struct FocalParams {
    double alpha = 2.0;
};

// Plain cross-entropy over softmax(f), max-shifted log-sum-exp inside.
LossOutput softmax_loss(const LogitsBatch& batch);

// Target-class logit becomes s*t(f_y/s); non-target logits pass through.
LossOutput margin_loss(const LogitsBatch& batch, const Transform& t, double scale_s);

// L_i = -log(p_y) * (1 - p_y)^alpha.
LossOutput focal_loss(const LogitsBatch& batch, const FocalParams& params);

// The searched family: L_i = -log(tau(p^t_y)) with both transforms piecewise
// linear. Gradients run through the exact interval slopes.
LossOutput unified_loss(const LogitsBatch& batch, const LossParams& params, double scale_s);

// Ratio of per-sample gradient-norm ratios (target over non-target) between
// the transformed loss and plain softmax, computed from the actual gradients.
// The non-target index is the largest non-target logit; the ratio is
// independent of that choice. Samples whose non-target probability
// underflows are flagged invalid.
struct SignificanceRatios {
    std::vector<double> ratio;
    std::vector<char> valid;
};
SignificanceRatios significance_ratio(const LogitsBatch& batch, const Transform& t,
                                      double scale_s);

// d^2 = 2 - 2f for normalized feature and class weight; returns d.
double distance_from_activation(double f_j);

// log p_label for one row of logits, max-shifted.
double target_log_prob(const double* logits, int num_classes, int label);

// One CSV row per sample: f_target, per-sample |dL/df_target|, loss_name.
void write_grad_distribution_csv(std::ostream& os, const LogitsBatch& batch,
                                 const LossOutput& out, std::string_view loss_name,
                                 bool write_header);

} // namespace amlfs
