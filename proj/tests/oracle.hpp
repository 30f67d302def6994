// Test-only oracles, kept independent of the library code on purpose: the
// fit oracle solves raw normal equations (the library mean-centers), the
// finite-difference helpers never touch analytic derivatives, and the frozen
// constants below were produced by a standalone script before the library
// existed.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// Frozen outputs of the pre-build dense-grid least-squares runs.
// Fit targets over their domains, 10^4-point inclusive linspace:
inline constexpr double kArcfaceSupM6 = 0.10826424056509931;
inline constexpr double kArcfaceSupM12 = 0.07500056707453906;
inline constexpr double kLsoftmaxSupM6 = 0.036992598149716116;
inline constexpr double kLsoftmaxSupM12 = 0.009242595093312655;
inline constexpr double kFocalTauSupM6 = 0.08001780786878143;
inline constexpr double kFocalTauSupM12 = 0.021999614583025462;
// Same ArcFace target on a 1201-point grid whose points are shared by the
// M=6 and M=12 interval layouts (nested-grid monotonicity check):
inline constexpr double kArcfaceNested1201M6 = 0.10736009846075523;
inline constexpr double kArcfaceNested1201M12 = 0.07368040642207596;
// Scalar spot values:
inline constexpr double kSoftplusMinus04 = 0.5130152523999526; // ln(1+e^-0.4)
inline constexpr double kArcfaceAtHalf = 0.02359658529090937;  // cos(acos(0.5)+0.5)
inline constexpr double kFocalHalfAlpha2 = 0.17328679513998632; // -ln(0.5)*0.25
inline constexpr double kSqrt15 = 1.224744871391589;

inline double arcface_t(double x, double m) { return std::cos(std::acos(x) + m); }
inline double lsoftmax_t(double x, double m) { return std::cos(m * std::acos(x)); }
inline double focal_tau1(double x, double a) {
    return x * std::pow(1.0 - std::exp(x), a);
}

inline int interval_index(double x, double lo, double hi, int M) {
    int i = static_cast<int>(std::floor((x - lo) / (hi - lo) * M));
    if (i < 0) i = 0;
    if (i > M - 1) i = M - 1;
    return i;
}

// Per-interval least squares on an inclusive linspace, solved by Cramer's
// rule on the raw normal equations. Returns the sup error over the grid.
inline double fit_sup_error(const std::function<double(double)>& f, double lo,
                            double hi, int M, int n) {
    std::vector<double> xs(n), ys(n);
    for (int k = 0; k < n; ++k) {
        xs[k] = lo + k * (hi - lo) / (n - 1);
        ys[k] = f(xs[k]);
    }
    std::vector<double> sx(M, 0.0), sy(M, 0.0), sxx(M, 0.0), sxy(M, 0.0);
    std::vector<int> cnt(M, 0);
    for (int k = 0; k < n; ++k) {
        int i = interval_index(xs[k], lo, hi, M);
        sx[i] += xs[k];
        sy[i] += ys[k];
        sxx[i] += xs[k] * xs[k];
        sxy[i] += xs[k] * ys[k];
        cnt[i] += 1;
    }
    std::vector<double> a(M), b(M);
    for (int i = 0; i < M; ++i) {
        double det = cnt[i] * sxx[i] - sx[i] * sx[i];
        if (det == 0.0) throw std::runtime_error("oracle: singular interval fit");
        a[i] = (cnt[i] * sxy[i] - sx[i] * sy[i]) / det;
        b[i] = (sxx[i] * sy[i] - sx[i] * sxy[i]) / det;
    }
    double sup = 0.0;
    for (int k = 0; k < n; ++k) {
        int i = interval_index(xs[k], lo, hi, M);
        double e = std::abs(a[i] * xs[k] + b[i] - ys[k]);
        if (e > sup) sup = e;
    }
    return sup;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a-b| over the larger magnitude, floored so near-zero pairs compare sanely.
inline double rel_err(double a, double b, double floor = 1e-10) {
    double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

} // namespace oracle
