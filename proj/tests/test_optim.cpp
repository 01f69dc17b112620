#include <doctest.h>

#include <numeric>
#include <random>

#include "rfamp/optim.hpp"

using namespace rfamp;

namespace {

Bounds box(std::size_t d, double lo = -5, double hi = 5)
{
    return {std::vector<double>(d, lo), std::vector<double>(d, hi), {}};
}

double sphere(const std::vector<double>& x)
{
    return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

// Wraps a cost and counts its invocations.
struct Counted {
    long calls = 0;
    CostFn fn(CostFn inner)
    {
        return [this, inner](const std::vector<double>& x) {
            ++calls;
            return inner(x);
        };
    }
};

bool non_increasing(const std::vector<double>& h)
{
    for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] > h[i - 1])
            return false;
    return true;
}

} // namespace

TEST_CASE("noise and match cost examples")
{
    CHECK(cost_stage2(4.5, -25, 5, 0.2) == 0.0);
    CHECK(cost_stage2(5.0, -18, 5, 0.2) == doctest::Approx(2200.0).epsilon(1e-12));
    CHECK(cost_stage2(5.0, -25, 5, 0.5) == 500.0);
    CHECK(cost_stage2(4.8, -20, 5) == 0.0);
}

TEST_CASE("gain and ripple cost examples")
{
    const std::vector<double> span{23, 24, 26};
    const std::vector<double> low{18, 24};
    const std::vector<double> flat(5, 25.0);
    CHECK(cost_stage3(span, 25) == 0.0);
    CHECK(cost_stage3(low, 25) == 7000.0);
    CHECK(cost_stage3(flat, 25) == 0.0);
    CHECK_THROWS_AS(cost_stage3(std::vector<double>{}, 25), GridMismatch);
}

TEST_CASE("cost functions against direct re-evaluation")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> nf(0, 10), s11(-40, 0), h(0, 2), g(0, 40);
    for (int i = 0; i < 1000; ++i) {
        const double a = nf(rng), b = s11(rng), u = nf(rng), hr = h(rng);
        const double expect2 = 1000.0 * std::max(0.0, a - (u - hr)) + 1000.0 * std::max(0.0, b + 20.0);
        const double c2 = cost_stage2(a, b, u, hr);
        CHECK(c2 == expect2);
        CHECK(c2 >= 0.0);
        CHECK((c2 == 0.0) == (a <= u - hr && b <= -20.0));

        std::vector<double> curve(static_cast<std::size_t>(1 + i % 21));
        for (auto& v : curve)
            v = g(rng);
        const double target = g(rng);
        const double mn = *std::min_element(curve.begin(), curve.end());
        const double mx = *std::max_element(curve.begin(), curve.end());
        const double expect3 = 1000.0 * std::max(0.0, std::abs(target - mn) - 3.0) + 1000.0 * std::max(0.0, mx - mn - 3.0);
        const double c3 = cost_stage3(curve, target);
        CHECK(c3 == expect3);
        CHECK(c3 >= 0.0);
        CHECK((c3 == 0.0) == (std::abs(target - mn) <= 3.0 && mx - mn <= 3.0));
    }
}

TEST_CASE("bounds")
{
    const Bounds b{{0, 1}, {1, 2}, {}};
    CHECK_NOTHROW(b.validate());
    CHECK(b.clamp({-1, 5}) == std::vector<double>{0, 2});
    CHECK(b.contains({0.5, 1.5}));
    CHECK_FALSE(b.contains({0.5}));
    CHECK_THROWS_AS((Bounds{{1}, {1}, {}}.validate()), SchemaError);
}

TEST_CASE("PSO")
{
    PsoConfig cfg;
    cfg.particles = 30;
    cfg.iters = 200;
    cfg.seed = 4;
    Counted n;
    const auto r = pso_minimize(n.fn(sphere), box(8), cfg);
    CHECK(r.best_cost < 1e-3);
    CHECK(r.evals == n.calls);
    CHECK(box(8).contains(r.best_x));
    CHECK(non_increasing(r.history));
    CHECK(pso_minimize(sphere, box(8), cfg) == r);

    const auto flat = pso_minimize([](const std::vector<double>&) { return 3.5; }, box(3), PsoConfig{});
    CHECK(flat.best_cost == 3.5);
    CHECK(std::all_of(flat.history.begin(), flat.history.end(), [](double v) { return v == 3.5; }));
}

TEST_CASE("SA")
{
    SaConfig cfg;
    cfg.steps = 5000;
    cfg.step_scale = 0.02;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.seed = seed;
        CHECK(sa_minimize(sphere, box(4), cfg).best_cost < 1e-2);
    }
    cfg.seed = 2;
    Counted n;
    const auto r = sa_minimize(n.fn(sphere), box(4), cfg);
    CHECK(r.evals == n.calls);
    CHECK(box(4).contains(r.best_x));
    CHECK(sa_minimize(sphere, box(4), cfg) == r);

    cfg.t0 = 0;
    cfg.steps = 500;
    const auto greedy = sa_minimize(sphere, box(4), cfg);
    CHECK(non_increasing(greedy.history));
}

TEST_CASE("GA")
{
    GaConfig cfg;
    cfg.seed = 3;
    Counted n;
    const auto r = ga_minimize(n.fn(sphere), box(8), cfg);
    CHECK(r.best_cost < 1e-2);
    CHECK(r.evals == n.calls);
    CHECK(box(8).contains(r.best_x));
    CHECK(non_increasing(r.history));
    CHECK(ga_minimize(sphere, box(8), cfg) == r);

    cfg.max_evals = 57;
    Counted capped;
    const auto c = ga_minimize(capped.fn(sphere), box(8), cfg);
    CHECK(c.evals == 57);
    CHECK(capped.calls == 57);
}

TEST_CASE("BO")
{
    const auto quad = [](const std::vector<double>& x) { return (x[0] - 0.3) * (x[0] - 0.3); };
    BoConfig cfg;
    cfg.seed = 5;
    Counted n;
    const auto r = bo_minimize(n.fn(quad), box(1, -2, 2), cfg);
    CHECK(std::abs(r.best_x[0] - 0.3) < 1e-2);
    CHECK(r.evals == n.calls);
    CHECK(r.evals == cfg.evals);
    CHECK(non_increasing(r.history));
    CHECK(bo_minimize(quad, box(1, -2, 2), cfg) == r);
}

TEST_CASE("stop rule and starting point")
{
    PsoConfig cfg;
    cfg.stop.target_cost = 1.0;
    cfg.stop.x0 = {0.1, 0.1};
    Counted n;
    const auto r = pso_minimize(n.fn(sphere), box(2), cfg);
    CHECK(r.evals == 1);
    CHECK(r.best_x == std::vector<double>{0.1, 0.1});

    SaConfig sa;
    sa.stop.target_cost = 0.5;
    sa.stop.x0 = {0.0, 0.0};
    CHECK(sa_minimize(sphere, box(2), sa).evals == 1);
}

TEST_CASE("multi-fidelity calibration with no model gap")
{
    const CurveFn lofi = [](const std::vector<double>& x) { return std::vector<double>(4, x[0]); };
    const Planner planner = [](const CurveFn& corrected, const std::vector<double>&) {
        return std::vector<double>{25.0 - corrected({0.0})[0]};
    };
    const CurveCheck accept = [](const std::vector<double>& h) { return std::abs(h[0] - 25.0) < 0.5; };
    const auto r = calibrate_multifidelity(lofi, lofi, planner, accept);
    CHECK(r.hf_calls == 1);
    REQUIRE(r.residual_history.size() == 1);
    CHECK(r.residual_history[0] == std::vector<double>(4, 0.0));
}

TEST_CASE("multi-fidelity calibration with a constant offset")
{
    const CurveFn lofi = [](const std::vector<double>& x) { return std::vector<double>(4, x[0]); };
    const CurveFn hifi = [](const std::vector<double>& x) { return std::vector<double>(4, x[0] + 2.0); };
    int planned = 0;
    const Planner planner = [&](const CurveFn& corrected, const std::vector<double>&) {
        ++planned;
        return std::vector<double>{25.0 - corrected({0.0})[0]};
    };
    const CurveCheck accept = [](const std::vector<double>& h) { return std::abs(h[0] - 25.0) < 0.5; };
    const auto r = calibrate_multifidelity(lofi, hifi, planner, accept);
    CHECK(r.hf_calls == 2);
    CHECK(planned == 2);
    CHECK(r.params == std::vector<double>{23.0});
    CHECK(r.residual_history[0] == std::vector<double>(4, 2.0));
    CHECK(r.lf_curve == r.hf_curve);
}

TEST_CASE("multi-fidelity calibration gives up")
{
    const CurveFn lofi = [](const std::vector<double>& x) { return std::vector<double>(2, x[0]); };
    const Planner planner = [](const CurveFn&, const std::vector<double>&) { return std::vector<double>{0.0}; };
    const CurveCheck never = [](const std::vector<double>&) { return false; };
    CHECK_THROWS_AS(calibrate_multifidelity(lofi, lofi, planner, never, 3), CalibrationFailed);
    CHECK_THROWS_AS(calibrate_multifidelity(lofi, lofi, planner, never, 0), SchemaError);
}
