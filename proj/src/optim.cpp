#include "rfamp/optim.hpp"

#include <algorithm>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <fmt/format.h>

namespace rfamp {

void Bounds::validate() const
{
    if (lo.size() != hi.size() || lo.empty())
        throw SchemaError("bounds: lo and hi must be non-empty and of equal length");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i]))
            throw SchemaError(fmt::format("bounds[{}]: lo {} is not below hi {}", i, lo[i], hi[i]));
}

std::vector<double> Bounds::clamp(std::vector<double> x) const
{
    for (std::size_t i = 0; i < x.size() && i < lo.size(); ++i)
        x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
}

bool Bounds::contains(const std::vector<double>& x) const
{
    if (x.size() != lo.size())
        return false;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < lo[i] || x[i] > hi[i])
            return false;
    return true;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double a, double b)
{
    return std::uniform_real_distribution<double>(a, b)(rng);
}

std::vector<double> random_point(Rng& rng, const Bounds& b)
{
    std::vector<double> x(b.dim());
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = uniform(rng, b.lo[i], b.hi[i]);
    return x;
}

// Mirror at the violated bound; returns true when the coordinate was reflected.
bool reflect(double& x, double lo, double hi)
{
    bool hit = false;
    if (x < lo) {
        x = lo + (lo - x);
        hit = true;
    } else if (x > hi) {
        x = hi - (x - hi);
        hit = true;
    }
    x = std::clamp(x, lo, hi);
    return hit;
}

// Counts evaluations and tracks the incumbent.
struct Tracker {
    const CostFn& cost;
    const StopRule& stop;
    OptResult res;

    double eval(const std::vector<double>& x)
    {
        const double c = cost(x);
        ++res.evals;
        if (c < res.best_cost || res.best_x.empty()) {
            res.best_cost = c;
            res.best_x = x;
        }
        return c;
    }
    bool done() const { return res.best_cost <= stop.target_cost; }
    void mark() { res.history.push_back(res.best_cost); }
};

} // namespace

OptResult pso_minimize(const CostFn& cost, const Bounds& bounds, const PsoConfig& cfg)
{
    bounds.validate();
    Rng rng(cfg.seed);
    Tracker tr{cost, cfg.stop, {}};
    tr.res.seed = cfg.seed;
    const std::size_t d = bounds.dim();
    const std::size_t n = static_cast<std::size_t>(std::max(cfg.particles, 1));

    std::vector<double> vmax(d);
    for (std::size_t k = 0; k < d; ++k)
        vmax[k] = 0.2 * (bounds.hi[k] - bounds.lo[k]);

    std::vector<std::vector<double>> x(n), v(n, std::vector<double>(d)), pbest(n);
    std::vector<double> pcost(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = random_point(rng, bounds);
        for (std::size_t k = 0; k < d; ++k)
            v[i][k] = uniform(rng, -vmax[k], vmax[k]);
    }
    if (!cfg.stop.x0.empty())
        x[0] = bounds.clamp(cfg.stop.x0);

    for (std::size_t i = 0; i < n; ++i) {
        pbest[i] = x[i];
        pcost[i] = tr.eval(x[i]);
        if (tr.done())
            break;
    }
    tr.mark();

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int it = 0; it < cfg.iters && !tr.done(); ++it) {
        const std::vector<double> gbest = tr.res.best_x;
        for (std::size_t i = 0; i < n && !tr.done(); ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                const double r1 = u01(rng);
                const double r2 = u01(rng);
                double vk = cfg.inertia * v[i][k] + cfg.c1 * r1 * (pbest[i][k] - x[i][k]) +
                            cfg.c2 * r2 * (gbest[k] - x[i][k]);
                vk = std::clamp(vk, -vmax[k], vmax[k]);
                double xk = x[i][k] + vk;
                if (reflect(xk, bounds.lo[k], bounds.hi[k]))
                    vk = -vk;
                x[i][k] = xk;
                v[i][k] = vk;
            }
            const double c = tr.eval(x[i]);
            if (c < pcost[i]) {
                pcost[i] = c;
                pbest[i] = x[i];
            }
        }
        tr.mark();
    }
    return tr.res;
}

OptResult sa_minimize(const CostFn& cost, const Bounds& bounds, const SaConfig& cfg)
{
    bounds.validate();
    Rng rng(cfg.seed);
    Tracker tr{cost, cfg.stop, {}};
    tr.res.seed = cfg.seed;
    const std::size_t d = bounds.dim();

    std::vector<double> x = cfg.stop.x0.empty() ? random_point(rng, bounds) : bounds.clamp(cfg.stop.x0);
    double cx = tr.eval(x);
    tr.mark();
    double t = cfg.t0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int step = 0; step < cfg.steps && !tr.done(); ++step) {
        std::vector<double> y = x;
        for (std::size_t k = 0; k < d; ++k) {
            y[k] += cfg.step_scale * (bounds.hi[k] - bounds.lo[k]) * gauss(rng);
            reflect(y[k], bounds.lo[k], bounds.hi[k]);
        }
        const double cy = tr.eval(y);
        const double delta = cy - cx;
        const double u = u01(rng);
        if (delta <= 0.0 || (t > 0.0 && u < std::exp(-delta / t))) {
            x = std::move(y);
            cx = cy;
        }
        t *= cfg.cooling;
        tr.mark();
    }
    return tr.res;
}

OptResult ga_minimize(const CostFn& cost, const Bounds& bounds, const GaConfig& cfg)
{
    bounds.validate();
    Rng rng(cfg.seed);
    Tracker tr{cost, cfg.stop, {}};
    tr.res.seed = cfg.seed;
    const std::size_t d = bounds.dim();
    const std::size_t n = static_cast<std::size_t>(std::max(cfg.population, 2));
    const auto capped = [&] { return cfg.max_evals >= 0 && tr.res.evals >= cfg.max_evals; };

    std::vector<std::vector<double>> pop(n);
    std::vector<double> fit(n, kInf);
    for (auto& p : pop)
        p = random_point(rng, bounds);
    if (!cfg.stop.x0.empty())
        pop[0] = bounds.clamp(cfg.stop.x0);
    for (std::size_t i = 0; i < n && !capped() && !tr.done(); ++i)
        fit[i] = tr.eval(pop[i]);
    tr.mark();

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const auto tournament = [&]() -> const std::vector<double>& {
        std::size_t best = pick(rng);
        for (int k = 1; k < cfg.tournament; ++k) {
            const std::size_t c = pick(rng);
            if (fit[c] < fit[best])
                best = c;
        }
        return pop[best];
    };

    for (int g = 0; g < cfg.generations && !capped() && !tr.done(); ++g) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i)
            order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });

        std::vector<std::vector<double>> next;
        std::vector<double> next_fit;
        for (int e = 0; e < cfg.elitism && static_cast<std::size_t>(e) < n; ++e) {
            next.push_back(pop[order[static_cast<std::size_t>(e)]]);
            next_fit.push_back(fit[order[static_cast<std::size_t>(e)]]);
        }
        while (next.size() < n && !capped() && !tr.done()) {
            const auto& a = tournament();
            const auto& b = tournament();
            std::vector<double> child = a;
            if (u01(rng) < cfg.crossover)
                for (std::size_t k = 0; k < d; ++k)
                    if (u01(rng) < 0.5)
                        child[k] = b[k];
            for (std::size_t k = 0; k < d; ++k)
                if (u01(rng) < cfg.mutation)
                    child[k] += cfg.sigma * (bounds.hi[k] - bounds.lo[k]) * gauss(rng);
            child = bounds.clamp(std::move(child));
            next_fit.push_back(tr.eval(child));
            next.push_back(std::move(child));
        }
        // A capped generation keeps the unreplaced tail of the old population.
        for (std::size_t i = next.size(); i < n; ++i) {
            next.push_back(pop[order[i]]);
            next_fit.push_back(fit[order[i]]);
        }
        pop = std::move(next);
        fit = std::move(next_fit);
        tr.mark();
    }
    return tr.res;
}

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Latin hypercube sample of n points in [0, 1]^d.
std::vector<std::vector<double>> latin_hypercube(Rng& rng, std::size_t n, std::size_t d)
{
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t k = 0; k < d; ++k) {
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i)
            perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < n; ++i)
            pts[i][k] = (static_cast<double>(perm[i]) + u01(rng)) / static_cast<double>(n);
    }
    return pts;
}

} // namespace

OptResult bo_minimize(const CostFn& cost, const Bounds& bounds, const BoConfig& cfg)
{
    bounds.validate();
    Rng rng(cfg.seed);
    Tracker tr{cost, cfg.stop, {}};
    tr.res.seed = cfg.seed;
    const std::size_t d = bounds.dim();
    const auto to_x = [&](const std::vector<double>& u) {
        std::vector<double> x(d);
        for (std::size_t k = 0; k < d; ++k)
            x[k] = bounds.lo[k] + u[k] * (bounds.hi[k] - bounds.lo[k]);
        return x;
    };

    std::vector<std::vector<double>> us;
    std::vector<double> ys;
    const auto evaluate = [&](const std::vector<double>& u) {
        ys.push_back(tr.eval(to_x(u)));
        us.push_back(u);
        tr.mark();
    };

    const std::size_t n_init = static_cast<std::size_t>(std::clamp(cfg.initial, 0, std::max(cfg.evals, 0)));
    for (const auto& u : latin_hypercube(rng, n_init, d)) {
        if (tr.done())
            break;
        evaluate(u);
    }

    const double inv2l2 = 1.0 / (2.0 * cfg.length_scale * cfg.length_scale);
    const auto kernel = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (std::size_t k = 0; k < d; ++k)
            s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::exp(-s * inv2l2);
    };

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    while (static_cast<int>(ys.size()) < cfg.evals && !tr.done()) {
        if (ys.empty()) {
            std::vector<double> u(d);
            for (auto& c : u)
                c = u01(rng);
            evaluate(u);
            continue;
        }
        const std::size_t n = ys.size();
        double mean = 0;
        for (double y : ys)
            mean += y;
        mean /= static_cast<double>(n);
        double var = 0;
        for (double y : ys)
            var += (y - mean) * (y - mean);
        const double sd = n > 1 && var > 0 ? std::sqrt(var / static_cast<double>(n - 1)) : 1.0;

        Eigen::MatrixXd k(n, n);
        Eigen::VectorXd y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y(static_cast<Eigen::Index>(i)) = (ys[i] - mean) / sd;
            for (std::size_t j = 0; j < n; ++j)
                k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(us[i], us[j]);
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += cfg.noise;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        // Near-duplicate samples can make K numerically indefinite; add jitter until it factors.
        double jitter = cfg.noise;
        while (llt.info() != Eigen::Success && jitter < 1.0) {
            jitter *= 10.0;
            k.diagonal().array() += jitter;
            llt.compute(k);
        }
        const Eigen::VectorXd alpha = llt.solve(y);
        const double best = (tr.res.best_cost - mean) / sd;

        std::vector<double> best_u;
        double best_ei = -1.0;
        for (int c = 0; c < cfg.candidates; ++c) {
            std::vector<double> u(d);
            for (auto& v : u)
                v = u01(rng);
            Eigen::VectorXd ks(n);
            for (std::size_t i = 0; i < n; ++i)
                ks(static_cast<Eigen::Index>(i)) = kernel(u, us[i]);
            const double mu = ks.dot(alpha);
            const double s2 = std::max(1.0 + cfg.noise - ks.dot(llt.solve(ks)), 1e-12);
            const double s = std::sqrt(s2);
            const double z = (best - mu) / s;
            const double ei = (best - mu) * normal_cdf(z) + s * normal_pdf(z);
            if (ei > best_ei) {
                best_ei = ei;
                best_u = std::move(u);
            }
        }
        evaluate(best_u);
    }
    if (tr.res.history.empty())
        tr.mark();
    return tr.res;
}

double cost_stage2(double nf_sim, double s11_sim, double nf_user, double headroom)
{
    return 1000.0 * std::max(0.0, nf_sim - (nf_user - headroom)) + 1000.0 * std::max(0.0, s11_sim + 20.0);
}

double cost_stage3(std::span<const double> gain_cal, double gain_user)
{
    if (gain_cal.empty())
        throw GridMismatch("empty gain curve");
    const auto [mn, mx] = std::minmax_element(gain_cal.begin(), gain_cal.end());
    return 1000.0 * std::max(0.0, std::abs(gain_user - *mn) - 3.0) + 1000.0 * std::max(0.0, *mx - *mn - 3.0);
}

CalibrationResult calibrate_multifidelity(const CurveFn& lofi, const CurveFn& hifi, const Planner& planner,
                                          const CurveCheck& accept, int max_rounds)
{
    if (max_rounds < 1)
        throw SchemaError("max_rounds must be at least 1");
    CalibrationResult res;
    std::vector<double> residual;
    std::vector<double> previous;
    const CurveFn corrected = [&](const std::vector<double>& x) {
        std::vector<double> c = lofi(x);
        if (!residual.empty()) {
            if (residual.size() != c.size())
                throw GridMismatch("residual and low-fidelity curve differ in length");
            for (std::size_t i = 0; i < c.size(); ++i)
                c[i] += residual[i];
        }
        return c;
    };
    for (int round = 0; round < max_rounds; ++round) {
        const std::vector<double> x = planner(corrected, previous);
        std::vector<double> h = hifi(x);
        ++res.hf_calls;
        std::vector<double> lf_corr = corrected(x);
        const std::vector<double> l = lofi(x);
        if (h.size() != l.size())
            throw GridMismatch(fmt::format("high-fidelity curve has {} points, low-fidelity {}", h.size(), l.size()));
        std::vector<double> r(h.size());
        for (std::size_t i = 0; i < h.size(); ++i)
            r[i] = h[i] - l[i];
        res.residual_history.push_back(r);
        res.params = x;
        res.hf_curve = h;
        res.lf_curve = std::move(lf_corr);
        if (accept(h))
            return res;
        residual = std::move(r);
        previous = x;
    }
    double worst = 0;
    for (double v : res.residual_history.back())
        worst = std::max(worst, std::abs(v));
    throw CalibrationFailed(fmt::format("no accepted curve after {} rounds; last max |residual| {:.2f} dB",
                                        max_rounds, worst));
}

} // namespace rfamp
