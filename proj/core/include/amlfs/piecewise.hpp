#pragma once

#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace amlfs {

// Sampled slopes below this are raised to it when a parameter vector is
// unpacked for use inside a loss, where transforms must be increasing.
inline constexpr double kSlopeFloor = 1e-3;

// Piecewise-linear function over M equal-width intervals of [domain_lo,
// domain_hi]. Each interval carries an independent slope and bias, so the
// function may jump at interval boundaries. Immutable after construction;
// safe to share across threads.
class PiecewiseLinearFn {
public:
    PiecewiseLinearFn() = default;
    PiecewiseLinearFn(double domain_lo, double domain_hi,
                      std::vector<double> slopes, std::vector<double> biases);

    static PiecewiseLinearFn identity(double domain_lo, double domain_hi, int num_intervals);

    double domain_lo() const { return lo_; }
    double domain_hi() const { return hi_; }
    int num_intervals() const { return static_cast<int>(slopes_.size()); }
    const std::vector<double>& slopes() const { return slopes_; }
    const std::vector<double>& biases() const { return biases_; }

    // zeta_i = lo + i*(hi-lo)/M, derived on demand.
    double boundary(int i) const;

    // Interval owning x. Half-open [zeta_i, zeta_{i+1}); the last interval is
    // closed. Throws DomainError for x outside [lo, hi].
    int interval_index(double x) const;

    // a_i*x + b_i for the interval owning x.
    double eval(double x) const;

    // a_i for the interval owning x. At an interior boundary this is the
    // right interval's slope, matching the subgradient used in backprop.
    double derivative(double x) const;

private:
    double lo_ = 0.0;
    double hi_ = 1.0;
    std::vector<double> slopes_;
    std::vector<double> biases_;
};

// The two transforms that define one candidate loss: t over [-1, 1] (the
// range of a cosine) and tau over [0, 1] (the range of a probability).
struct LossParams {
    PiecewiseLinearFn t_fn;
    PiecewiseLinearFn tau_fn;

    int num_intervals() const { return t_fn.num_intervals(); }

    // Flattens as [a^t | b^t | a^tau | b^tau], length 4M. This order is fixed
    // across the codebase and the serialized form.
    std::vector<double> to_theta() const;

    // Unpacks a theta vector. Slopes are floored at kSlopeFloor; biases pass
    // through untouched.
    static LossParams from_theta(std::span<const double> theta, int num_intervals);

    static LossParams identity(int num_intervals);
};

nlohmann::json loss_params_to_json(const LossParams& params);
LossParams loss_params_from_json(const nlohmann::json& j);

struct PiecewiseFit {
    PiecewiseLinearFn fn;
    double sup_error = 0.0; // max |fit - target| over the sample grid
};

// Least-squares fit of target on a uniform grid of grid_size points over
// [domain_lo, domain_hi], fit independently per interval. Discontinuities at
// boundaries are allowed, matching the search space.
PiecewiseFit fit_to_reference(const std::function<double(double)>& target,
                              double domain_lo, double domain_hi,
                              int num_intervals, int grid_size);

} // namespace amlfs
