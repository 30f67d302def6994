#include "amlfs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "amlfs/errors.hpp"

namespace amlfs {
namespace {

// Cosines arrive from a normalized head, so anything beyond [-1,1] by more
// than float roundoff is a caller bug rather than noise.
constexpr double kCosSlack = 1e-9;

double clamp_cosine(double x) {
    if (std::abs(x) > 1.0 + kCosSlack) {
        throw DomainError("cosine activation " + std::to_string(x) +
                          " outside [-1, 1]");
    }
    return std::clamp(x, -1.0, 1.0);
}

double log_sum_exp(const double* z, int n) {
    double m = z[0];
    for (int j = 1; j < n; ++j) m = std::max(m, z[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(z[j] - m);
    return m + std::log(s);
}

void check_finite_loss(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string(what) + " produced a non-finite loss");
    }
}

// Shared margin-loss core: fills the per-sample gradient row (not yet divided
// by the batch size) and returns the per-sample loss. Callers own reduction.
double margin_sample(const double* f, int C, int y, const Transform& t, double s,
                     double* grad_row) {
    std::vector<double> z(f, f + C);
    double cos_y = clamp_cosine(f[y] / s);
    z[y] = s * t.value(cos_y);
    double lse = log_sum_exp(z.data(), C);
    for (int j = 0; j < C; ++j) grad_row[j] = std::exp(z[j] - lse);
    // p_y in exact arithmetic is exp(z_y - lse); 1 - p_y via expm1 keeps the
    // target gradient accurate when the sample is already confident.
    double one_minus_p = -std::expm1(z[y] - lse);
    grad_row[y] = -one_minus_p * t.deriv(cos_y);
    return lse - z[y];
}

} // namespace

void LogitsBatch::validate() const {
    if (values.rows <= 0 || values.cols < 2) {
        throw ShapeError("logits batch must be non-empty with at least 2 classes");
    }
    if (static_cast<int>(labels.size()) != values.rows) {
        throw ShapeError("label count " + std::to_string(labels.size()) +
                         " does not match batch size " + std::to_string(values.rows));
    }
    for (int i = 0; i < values.rows; ++i) {
        if (labels[i] < 0 || labels[i] >= values.cols) {
            throw ShapeError("label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " outside [0, " +
                             std::to_string(values.cols) + ")");
        }
    }
    for (double v : values.data) {
        if (!std::isfinite(v)) throw NumericError("non-finite logit in batch");
    }
}

Transform identity_transform() {
    return {[](double x) { return x; }, [](double) { return 1.0; }};
}

Transform affine_transform(double a, double b) {
    return {[a, b](double x) { return a * x + b; }, [a](double) { return a; }};
}

Transform piecewise_transform(const PiecewiseLinearFn& fn) {
    return {[fn](double x) { return fn.eval(x); },
            [fn](double x) { return fn.derivative(x); }};
}

double MarginTransform::value(double x) const {
    switch (kind) {
        case MarginKind::LSoftmax: return std::cos(m * std::acos(x));
        case MarginKind::ASoftmax: return x + m;
        case MarginKind::ArcFace: return std::cos(std::acos(x) + m);
    }
    throw DomainError("unknown margin kind");
}

double MarginTransform::derivative(double x) const {
    switch (kind) {
        case MarginKind::LSoftmax: {
            double root = std::sqrt(std::max(0.0, 1.0 - x * x));
            if (root == 0.0) {
                // limit of m*sin(m*acos x)/sin(acos x) as x -> +-1
                double sign = (x > 0.0) ? 1.0 : ((static_cast<long long>(m) % 2 == 0) ? -1.0 : 1.0);
                return sign * m * m;
            }
            return m * std::sin(m * std::acos(x)) / root;
        }
        case MarginKind::ASoftmax: return 1.0;
        case MarginKind::ArcFace: {
            double root = std::sqrt(std::max(0.0, 1.0 - x * x));
            if (root == 0.0) {
                throw NumericError("arcface derivative diverges at cos = +-1");
            }
            return std::sin(std::acos(x) + m) / root;
        }
    }
    throw DomainError("unknown margin kind");
}

Transform margin_transform(const MarginTransform& t) {
    return {[t](double x) { return t.value(x); },
            [t](double x) { return t.derivative(x); }};
}

LossOutput softmax_loss(const LogitsBatch& batch) {
    batch.validate();
    const int N = batch.size(), C = batch.num_classes();
    LossOutput out;
    out.grad = Matrix(N, C);
    out.per_sample_loss.resize(N);
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        const double* f = batch.values.row(i);
        int y = batch.labels[i];
        double lse = log_sum_exp(f, C);
        out.per_sample_loss[i] = lse - f[y];
        total += out.per_sample_loss[i];
        double* g = out.grad.row(i);
        for (int j = 0; j < C; ++j) g[j] = std::exp(f[j] - lse) / N;
        g[y] -= 1.0 / N;
    }
    out.loss = total / N;
    check_finite_loss(out.loss, "softmax_loss");
    return out;
}

LossOutput margin_loss(const LogitsBatch& batch, const Transform& t, double scale_s) {
    batch.validate();
    if (!(scale_s > 0.0)) throw DomainError("scale must be positive");
    const int N = batch.size(), C = batch.num_classes();
    LossOutput out;
    out.grad = Matrix(N, C);
    out.per_sample_loss.resize(N);
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        double li = margin_sample(batch.values.row(i), C, batch.labels[i], t,
                                  scale_s, out.grad.row(i));
        out.per_sample_loss[i] = li;
        total += li;
        for (int j = 0; j < C; ++j) out.grad(i, j) /= N;
    }
    out.loss = total / N;
    check_finite_loss(out.loss, "margin_loss");
    return out;
}

LossOutput focal_loss(const LogitsBatch& batch, const FocalParams& params) {
    batch.validate();
    if (!(params.alpha >= 0.0) || !std::isfinite(params.alpha)) {
        throw DomainError("focal alpha must be finite and >= 0");
    }
    const int N = batch.size(), C = batch.num_classes();
    const double a = params.alpha;
    LossOutput out;
    out.grad = Matrix(N, C);
    out.per_sample_loss.resize(N);
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        const double* f = batch.values.row(i);
        int y = batch.labels[i];
        double lse = log_sum_exp(f, C);
        double lp = f[y] - lse;         // log p_y, <= 0
        double q = -std::expm1(lp);     // 1 - p_y without cancellation
        double qa = std::pow(q, a);
        out.per_sample_loss[i] = -lp * qa;
        total += out.per_sample_loss[i];
        // L_i = -tau(log p_y) with tau(x) = x(1-e^x)^a, so
        // dL_i/df_j = -tau'(log p_y) * (1{j=y} - p_j).
        double tau_prime;
        if (q <= 0.0) {
            tau_prime = (a == 0.0) ? 1.0 : 0.0; // p_y == 1 exactly
        } else {
            tau_prime = qa - a * lp * std::exp(lp) * std::pow(q, a - 1.0);
        }
        double* g = out.grad.row(i);
        for (int j = 0; j < C; ++j) {
            double p_j = std::exp(f[j] - lse);
            g[j] = tau_prime * p_j / N;
        }
        g[y] -= tau_prime / N;
    }
    out.loss = total / N;
    check_finite_loss(out.loss, "focal_loss");
    return out;
}

LossOutput unified_loss(const LogitsBatch& batch, const LossParams& params,
                        double scale_s) {
    batch.validate();
    if (!(scale_s > 0.0)) throw DomainError("scale must be positive");
    const int N = batch.size(), C = batch.num_classes();
    LossOutput out;
    out.grad = Matrix(N, C);
    out.per_sample_loss.resize(N);
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        const double* f = batch.values.row(i);
        int y = batch.labels[i];
        std::vector<double> z(f, f + C);
        double cos_y = clamp_cosine(f[y] / scale_s);
        z[y] = scale_s * params.t_fn.eval(cos_y);
        double lse = log_sum_exp(z.data(), C);
        double p = std::exp(z[y] - lse);       // p^t_y, inside tau's [0,1] domain
        double one_minus_p = -std::expm1(z[y] - lse);

        double tv = params.tau_fn.eval(p);
        double dtau;
        if (tv < kProbFloor) {
            // Clamp keeps the log finite; the sample contributes no gradient
            // while the clamp is active.
            tv = kProbFloor;
            dtau = 0.0;
            ++out.clamp_events;
        } else {
            dtau = params.tau_fn.derivative(p);
        }
        out.per_sample_loss[i] = -std::log(tv);
        total += out.per_sample_loss[i];

        // dL/dp = -tau'(p)/tau(p); dp/dz_y = p(1-p); dp/dz_j = -p*p_j;
        // dz_y/df_y = t'(cos_y) since the 1/s and s factors cancel.
        double common = dtau / tv;
        double* g = out.grad.row(i);
        for (int j = 0; j < C; ++j) {
            double p_j = std::exp(z[j] - lse);
            g[j] = common * p * p_j / N;
        }
        g[y] = -common * p * one_minus_p * params.t_fn.derivative(cos_y) / N;
    }
    out.loss = total / N;
    check_finite_loss(out.loss, "unified_loss");
    return out;
}

SignificanceRatios significance_ratio(const LogitsBatch& batch, const Transform& t,
                                      double scale_s) {
    batch.validate();
    if (!(scale_s > 0.0)) throw DomainError("scale must be positive");
    const int N = batch.size(), C = batch.num_classes();
    SignificanceRatios res;
    res.ratio.assign(N, 0.0);
    res.valid.assign(N, 1);
    Transform ident = identity_transform();
    std::vector<double> gt(C), go(C);
    for (int i = 0; i < N; ++i) {
        const double* f = batch.values.row(i);
        int y = batch.labels[i];
        margin_sample(f, C, y, t, scale_s, gt.data());
        margin_sample(f, C, y, ident, scale_s, go.data());
        int j = -1;
        for (int k = 0; k < C; ++k) {
            if (k != y && (j < 0 || f[k] > f[j])) j = k;
        }
        // go[j] is p^o_j; an underflowed denominator makes the ratio
        // meaningless, so flag instead of dividing.
        if (std::abs(go[j]) < 1e-300 || std::abs(gt[j]) < 1e-300) {
            res.valid[i] = 0;
            continue;
        }
        double r_t = std::abs(gt[y]) / std::abs(gt[j]);
        double r_o = std::abs(go[y]) / std::abs(go[j]);
        if (r_o == 0.0 || !std::isfinite(r_t) || !std::isfinite(r_o)) {
            res.valid[i] = 0;
            continue;
        }
        res.ratio[i] = r_t / r_o;
    }
    return res;
}

double distance_from_activation(double f_j) {
    if (!(f_j >= -1.0 && f_j <= 1.0)) {
        throw DomainError("activation " + std::to_string(f_j) +
                          " outside [-1, 1]; distance is undefined");
    }
    return std::sqrt(2.0 - 2.0 * f_j);
}

double target_log_prob(const double* logits, int num_classes, int label) {
    if (num_classes <= 0 || label < 0 || label >= num_classes) {
        throw ShapeError("label outside [0, num_classes)");
    }
    return logits[label] - log_sum_exp(logits, num_classes);
}

void write_grad_distribution_csv(std::ostream& os, const LogitsBatch& batch,
                                 const LossOutput& out, std::string_view loss_name,
                                 bool write_header) {
    if (out.grad.rows != batch.size() || out.grad.cols != batch.num_classes()) {
        throw ShapeError("gradient shape does not match batch");
    }
    if (write_header) os << "f_target,grad_norm_target,loss_name\n";
    const int N = batch.size();
    char buf[64];
    for (int i = 0; i < N; ++i) {
        int y = batch.labels[i];
        // Per-sample norm: undo the 1/N batch reduction.
        double gnorm = std::abs(out.grad(i, y)) * N;
        std::snprintf(buf, sizeof(buf), "%.17g", batch.values(i, y));
        os << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", gnorm);
        os << buf << ',' << loss_name << '\n';
    }
}

} // namespace amlfs
