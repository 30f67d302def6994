#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracle.hpp"

#include "amlfs/errors.hpp"
#include "amlfs/piecewise.hpp"
#include "amlfs/rng.hpp"

using namespace amlfs;

TEST_CASE("identity over one interval is the identity map") {
    auto fn = PiecewiseLinearFn::identity(-1.0, 1.0, 1);
    CHECK(fn.num_intervals() == 1);
    CHECK(fn.eval(0.37) == 0.37);
    CHECK(fn.derivative(0.37) == 1.0);
    CHECK(fn.eval(-1.0) == -1.0);
    CHECK(fn.eval(1.0) == 1.0);
}

TEST_CASE("two-interval eval and right-owned interior boundary") {
    PiecewiseLinearFn fn(0.0, 1.0, {1.0, 2.0}, {0.0, 0.5});
    CHECK(fn.eval(0.75) == 2.0);
    // x = 0.5 sits exactly on the interior boundary; the right interval owns it.
    CHECK(fn.interval_index(0.5) == 1);
    CHECK(fn.eval(0.5) == 1.5);
    CHECK(fn.derivative(0.5) == 2.0);
    CHECK(fn.derivative(0.75) == 2.0);
    CHECK(fn.derivative(0.25) == 1.0);
    // Last interval is closed on the right.
    CHECK(fn.interval_index(1.0) == 1);
    CHECK(fn.eval(1.0) == 2.5);
}

TEST_CASE("boundaries are evenly spaced") {
    PiecewiseLinearFn fn(-1.0, 1.0, std::vector<double>(4, 1.0), std::vector<double>(4, 0.0));
    CHECK(fn.boundary(0) == -1.0);
    CHECK(fn.boundary(1) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(fn.boundary(2) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(fn.boundary(4) == 1.0);
}

TEST_CASE("out-of-domain points are rejected") {
    auto fn = PiecewiseLinearFn::identity(0.0, 1.0, 3);
    CHECK_THROWS_AS(fn.eval(-0.001), DomainError);
    CHECK_THROWS_AS(fn.eval(1.001), DomainError);
    CHECK_THROWS_AS(fn.derivative(2.0), DomainError);
}

TEST_CASE("mismatched slope/bias lengths are rejected") {
    CHECK_THROWS_AS(PiecewiseLinearFn(0.0, 1.0, {1.0, 2.0}, {0.0}), ShapeError);
    CHECK_THROWS_AS(PiecewiseLinearFn(0.0, 1.0, {}, {}), ShapeError);
    CHECK_THROWS_AS(PiecewiseLinearFn(1.0, 1.0, {1.0}, {0.0}), DomainError);
}

TEST_CASE("theta pack/unpack round-trips when slopes clear the floor") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int M = 1 + rng.uniform_int(8);
        std::vector<double> at(M), bt(M), au(M), bu(M);
        for (int i = 0; i < M; ++i) {
            at[i] = kSlopeFloor + rng.uniform(0.0, 3.0);
            au[i] = kSlopeFloor + rng.uniform(0.0, 3.0);
            bt[i] = rng.uniform(-2.0, 2.0);
            bu[i] = rng.uniform(-2.0, 2.0);
        }
        LossParams p{PiecewiseLinearFn(-1.0, 1.0, at, bt),
                     PiecewiseLinearFn(0.0, 1.0, au, bu)};
        auto theta = p.to_theta();
        REQUIRE(theta.size() == static_cast<std::size_t>(4 * M));
        auto q = LossParams::from_theta(theta, M);
        CHECK(q.t_fn.slopes() == at);
        CHECK(q.t_fn.biases() == bt);
        CHECK(q.tau_fn.slopes() == au);
        CHECK(q.tau_fn.biases() == bu);
    }
}

TEST_CASE("theta layout is slopes-then-biases for t, then for tau") {
    auto p = LossParams::identity(2);
    auto theta = p.to_theta();
    std::vector<double> expect{1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0};
    CHECK(theta == expect);
}

TEST_CASE("from_theta floors small and negative slopes") {
    // Slopes for t: one below the floor, one negative; biases untouched.
    std::vector<double> theta{1e-9, -0.5, 0.25, -0.25, 2.0, 0.0, 0.1, 0.2};
    auto p = LossParams::from_theta(theta, 2);
    CHECK(p.t_fn.slopes()[0] == kSlopeFloor);
    CHECK(p.t_fn.slopes()[1] == kSlopeFloor);
    CHECK(p.t_fn.biases()[0] == 0.25);
    CHECK(p.t_fn.biases()[1] == -0.25);
    CHECK(p.tau_fn.slopes()[0] == 2.0);
    CHECK(p.tau_fn.slopes()[1] == kSlopeFloor);
    CHECK(p.tau_fn.biases() == std::vector<double>{0.1, 0.2});
}

TEST_CASE("from_theta rejects a length that is not 4M") {
    std::vector<double> theta(9, 1.0);
    CHECK_THROWS_AS(LossParams::from_theta(theta, 2), ShapeError);
}

TEST_CASE("identity params evaluate to the identity on both domains") {
    auto p = LossParams::identity(6);
    for (double x : {-1.0, -0.73, 0.0, 0.41, 1.0}) {
        CHECK(p.t_fn.eval(x) == doctest::Approx(x).epsilon(1e-15));
    }
    for (double x : {0.0, 0.2, 0.5, 0.99, 1.0}) {
        CHECK(p.tau_fn.eval(x) == doctest::Approx(x).epsilon(1e-15));
    }
}

TEST_CASE("json round-trip preserves every coefficient bit-exactly") {
    Rng rng(11);
    std::vector<double> at(5), bt(5), au(5), bu(5);
    for (int i = 0; i < 5; ++i) {
        at[i] = rng.uniform(0.001, 2.0);
        bt[i] = rng.gaussian();
        au[i] = rng.uniform(0.001, 2.0);
        bu[i] = rng.gaussian();
    }
    LossParams p{PiecewiseLinearFn(-1.0, 1.0, at, bt),
                 PiecewiseLinearFn(0.0, 1.0, au, bu)};
    auto j = loss_params_to_json(p);
    auto q = loss_params_from_json(j);
    CHECK(q.t_fn.slopes() == at);
    CHECK(q.t_fn.biases() == bt);
    CHECK(q.t_fn.domain_lo() == -1.0);
    CHECK(q.t_fn.domain_hi() == 1.0);
    CHECK(q.tau_fn.slopes() == au);
    CHECK(q.tau_fn.biases() == bu);
    // And the serialized form parses back to identical json.
    CHECK(loss_params_to_json(q) == j);
}

TEST_CASE("json without required fields is rejected") {
    auto j = loss_params_to_json(LossParams::identity(3));
    auto broken = j;
    broken.erase("theta");
    CHECK_THROWS_AS(loss_params_from_json(broken), FormatError);
    broken = j;
    broken["theta"] = "not-an-array";
    CHECK_THROWS_AS(loss_params_from_json(broken), FormatError);
    broken = j;
    broken["M"] = 2; // theta still has 12 entries, which needs M=3
    CHECK_THROWS_AS(loss_params_from_json(broken), FormatError);
    broken = j;
    broken["t_domain"] = {-1.0};
    CHECK_THROWS_AS(loss_params_from_json(broken), FormatError);
}

TEST_CASE("fitting an affine target reproduces it to rounding error") {
    auto target = [](double x) { return 1.7 * x - 0.3; };
    auto fit = fit_to_reference(target, -1.0, 1.0, 6, 600);
    CHECK(fit.sup_error <= 1e-12);
    for (double x : {-1.0, -0.99, -0.2, 0.0, 0.55, 1.0}) {
        CHECK(fit.fn.eval(x) == doctest::Approx(target(x)).epsilon(1e-12));
    }
    // Every interval recovers the same slope.
    for (double a : fit.fn.slopes()) CHECK(a == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("fit matches the independent normal-equations oracle") {
    const int n = 10000;
    struct Case {
        std::function<double(double)> f;
        double lo, hi;
        double frozen6, frozen12;
    };
    std::vector<Case> cases{
        {[](double x) { return oracle::arcface_t(x, 0.5); }, -1.0, 1.0,
         oracle::kArcfaceSupM6, oracle::kArcfaceSupM12},
        {[](double x) { return oracle::lsoftmax_t(x, 2.0); }, -1.0, 1.0,
         oracle::kLsoftmaxSupM6, oracle::kLsoftmaxSupM12},
        {[](double x) { return oracle::focal_tau1(x, 2.0); }, 0.01, 1.0,
         oracle::kFocalTauSupM6, oracle::kFocalTauSupM12},
    };
    for (const auto& c : cases) {
        auto fit6 = fit_to_reference(c.f, c.lo, c.hi, 6, n);
        auto fit12 = fit_to_reference(c.f, c.lo, c.hi, 12, n);
        CHECK(std::abs(fit6.sup_error - c.frozen6) < 1e-9);
        CHECK(std::abs(fit12.sup_error - c.frozen12) < 1e-9);
        CHECK(fit12.sup_error <= fit6.sup_error);
        // Cross-check against the oracle solver directly, not just frozen values.
        CHECK(std::abs(fit6.sup_error - oracle::fit_sup_error(c.f, c.lo, c.hi, 6, n)) < 1e-11);
    }
}

TEST_CASE("doubling the interval count cannot hurt on a nested grid") {
    // 1201 grid points land on every boundary of both the 6- and 12-interval
    // layouts, so the M=12 fit space contains the M=6 space exactly.
    auto f = [](double x) { return oracle::arcface_t(x, 0.5); };
    auto fit6 = fit_to_reference(f, -1.0, 1.0, 6, 1201);
    auto fit12 = fit_to_reference(f, -1.0, 1.0, 12, 1201);
    CHECK(std::abs(fit6.sup_error - oracle::kArcfaceNested1201M6) < 1e-9);
    CHECK(std::abs(fit12.sup_error - oracle::kArcfaceNested1201M12) < 1e-9);
    CHECK(fit12.sup_error <= fit6.sup_error);
}

TEST_CASE("fit rejects grids too sparse to determine every interval") {
    auto f = [](double x) { return x * x; };
    CHECK_THROWS_AS(fit_to_reference(f, 0.0, 1.0, 6, 11), ShapeError);
    CHECK_NOTHROW(fit_to_reference(f, 0.0, 1.0, 6, 12));
    CHECK_THROWS_AS(fit_to_reference(f, 0.0, 1.0, 0, 100), ShapeError);
}

TEST_CASE("derivative agrees with central differences away from boundaries") {
    Rng rng(3);
    std::vector<double> a(6), b(6);
    for (int i = 0; i < 6; ++i) {
        a[i] = rng.uniform(0.1, 2.0);
        b[i] = rng.gaussian();
    }
    PiecewiseLinearFn fn(-1.0, 1.0, a, b);
    const double width = 2.0 / 6.0;
    for (int trial = 0; trial < 200; ++trial) {
        double x = rng.uniform(-1.0, 1.0);
        // Keep the stencil inside one interval.
        double offset = std::fmod(x + 1.0, width);
        if (offset < 1e-4 || width - offset < 1e-4) continue;
        double fd = oracle::central_diff([&](double v) { return fn.eval(v); }, x, 1e-7);
        CHECK(oracle::rel_err(fd, fn.derivative(x)) < 1e-6);
    }
}
