#include "amlfs/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amlfs/errors.hpp"

namespace amlfs {

PiecewiseLinearFn::PiecewiseLinearFn(double domain_lo, double domain_hi,
                                     std::vector<double> slopes,
                                     std::vector<double> biases)
    : lo_(domain_lo), hi_(domain_hi), slopes_(std::move(slopes)), biases_(std::move(biases)) {
    if (!(lo_ < hi_)) {
        throw DomainError("piecewise: domain_lo must be < domain_hi");
    }
    if (slopes_.empty() || slopes_.size() != biases_.size()) {
        throw ShapeError("piecewise: need one slope and one bias per interval");
    }
}

PiecewiseLinearFn PiecewiseLinearFn::identity(double domain_lo, double domain_hi,
                                              int num_intervals) {
    return PiecewiseLinearFn(domain_lo, domain_hi,
                             std::vector<double>(num_intervals, 1.0),
                             std::vector<double>(num_intervals, 0.0));
}

double PiecewiseLinearFn::boundary(int i) const {
    const int m = num_intervals();
    return lo_ + static_cast<double>(i) * (hi_ - lo_) / static_cast<double>(m);
}

int PiecewiseLinearFn::interval_index(double x) const {
    if (!(x >= lo_ && x <= hi_)) {
        throw DomainError("piecewise: x=" + std::to_string(x) + " outside [" +
                          std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
    }
    const int m = num_intervals();
    const int i = static_cast<int>(std::floor((x - lo_) / (hi_ - lo_) * m));
    return std::clamp(i, 0, m - 1);
}

double PiecewiseLinearFn::eval(double x) const {
    const int i = interval_index(x);
    return slopes_[i] * x + biases_[i];
}

double PiecewiseLinearFn::derivative(double x) const {
    return slopes_[interval_index(x)];
}

std::vector<double> LossParams::to_theta() const {
    std::vector<double> theta;
    theta.reserve(4 * static_cast<std::size_t>(num_intervals()));
    auto append = [&theta](const std::vector<double>& v) {
        theta.insert(theta.end(), v.begin(), v.end());
    };
    append(t_fn.slopes());
    append(t_fn.biases());
    append(tau_fn.slopes());
    append(tau_fn.biases());
    return theta;
}

LossParams LossParams::from_theta(std::span<const double> theta, int num_intervals) {
    if (num_intervals < 1) {
        throw ShapeError("from_theta: num_intervals must be >= 1");
    }
    const std::size_t m = static_cast<std::size_t>(num_intervals);
    if (theta.size() != 4 * m) {
        throw ShapeError("from_theta: expected theta of length " + std::to_string(4 * m) +
                         ", got " + std::to_string(theta.size()));
    }
    auto slice = [&theta, m](std::size_t block) {
        return std::vector<double>(theta.begin() + block * m, theta.begin() + (block + 1) * m);
    };
    auto floor_slopes = [](std::vector<double> v) {
        for (double& a : v) a = std::max(a, kSlopeFloor);
        return v;
    };
    LossParams params;
    params.t_fn = PiecewiseLinearFn(-1.0, 1.0, floor_slopes(slice(0)), slice(1));
    params.tau_fn = PiecewiseLinearFn(0.0, 1.0, floor_slopes(slice(2)), slice(3));
    return params;
}

LossParams LossParams::identity(int num_intervals) {
    LossParams params;
    params.t_fn = PiecewiseLinearFn::identity(-1.0, 1.0, num_intervals);
    params.tau_fn = PiecewiseLinearFn::identity(0.0, 1.0, num_intervals);
    return params;
}

nlohmann::json loss_params_to_json(const LossParams& params) {
    return nlohmann::json{
        {"M", params.num_intervals()},
        {"t_domain", {params.t_fn.domain_lo(), params.t_fn.domain_hi()}},
        {"tau_domain", {params.tau_fn.domain_lo(), params.tau_fn.domain_hi()}},
        {"theta", params.to_theta()},
    };
}

LossParams loss_params_from_json(const nlohmann::json& j) {
    int m = 0;
    std::vector<double> theta, td, taud;
    try {
        m = j.at("M").get<int>();
        theta = j.at("theta").get<std::vector<double>>();
        td = j.at("t_domain").get<std::vector<double>>();
        taud = j.at("tau_domain").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("loss params: ") + e.what());
    }
    if (td.size() != 2 || taud.size() != 2) {
        throw FormatError("loss params: domain fields must be [lo, hi]");
    }
    if (m < 1 || theta.size() != static_cast<std::size_t>(4 * m)) {
        throw FormatError("loss params: theta length does not match M");
    }
    const std::size_t sm = static_cast<std::size_t>(m);
    auto slice = [&theta, sm](std::size_t block) {
        return std::vector<double>(theta.begin() + block * sm, theta.begin() + (block + 1) * sm);
    };
    LossParams params;
    params.t_fn = PiecewiseLinearFn(td[0], td[1], slice(0), slice(1));
    params.tau_fn = PiecewiseLinearFn(taud[0], taud[1], slice(2), slice(3));
    return params;
}

PiecewiseFit fit_to_reference(const std::function<double(double)>& target,
                              double domain_lo, double domain_hi,
                              int num_intervals, int grid_size) {
    if (num_intervals < 1) {
        throw ShapeError("fit_to_reference: num_intervals must be >= 1");
    }
    if (grid_size < 2 * num_intervals) {
        throw ShapeError("fit_to_reference: need at least 2 grid points per interval");
    }
    const int m = num_intervals;
    const int n = grid_size;
    std::vector<double> xs(n), ys(n);
    for (int k = 0; k < n; ++k) {
        xs[k] = domain_lo + static_cast<double>(k) * (domain_hi - domain_lo) / (n - 1);
        ys[k] = target(xs[k]);
    }

    // Per-interval least squares via mean-centered sums.
    PiecewiseLinearFn shape = PiecewiseLinearFn::identity(domain_lo, domain_hi, m);
    std::vector<int> idx(n);
    std::vector<double> sum_x(m, 0.0), sum_y(m, 0.0);
    std::vector<int> count(m, 0);
    for (int k = 0; k < n; ++k) {
        idx[k] = shape.interval_index(xs[k]);
        sum_x[idx[k]] += xs[k];
        sum_y[idx[k]] += ys[k];
        ++count[idx[k]];
    }
    for (int i = 0; i < m; ++i) {
        if (count[i] < 2) {
            throw ShapeError("fit_to_reference: interval " + std::to_string(i) +
                             " has fewer than 2 grid points");
        }
    }
    std::vector<double> sxx(m, 0.0), sxy(m, 0.0);
    for (int k = 0; k < n; ++k) {
        const int i = idx[k];
        const double dx = xs[k] - sum_x[i] / count[i];
        const double dy = ys[k] - sum_y[i] / count[i];
        sxx[i] += dx * dx;
        sxy[i] += dx * dy;
    }
    std::vector<double> slopes(m), biases(m);
    for (int i = 0; i < m; ++i) {
        slopes[i] = sxy[i] / sxx[i];
        biases[i] = sum_y[i] / count[i] - slopes[i] * sum_x[i] / count[i];
    }

    PiecewiseFit fit;
    fit.fn = PiecewiseLinearFn(domain_lo, domain_hi, std::move(slopes), std::move(biases));
    for (int k = 0; k < n; ++k) {
        fit.sup_error = std::max(fit.sup_error, std::abs(fit.fn.eval(xs[k]) - ys[k]));
    }
    return fit;
}

} // namespace amlfs
