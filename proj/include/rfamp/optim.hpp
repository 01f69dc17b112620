#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rfamp/common.hpp"

namespace rfamp {

struct Bounds {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<std::string> units;

    std::size_t dim() const { return lo.size(); }
    /// Throws SchemaError unless lo < hi in every dimension.
    void validate() const;
    std::vector<double> clamp(std::vector<double> x) const;
    bool contains(const std::vector<double>& x) const;
};

struct OptResult {
    std::vector<double> best_x;
    double best_cost = kInf;
    std::vector<double> history;  // best-so-far, one entry per iteration
    long evals = 0;
    std::uint64_t seed = 0;

    bool operator==(const OptResult&) const = default;
};

using CostFn = std::function<double(const std::vector<double>&)>;

/// Stop as soon as the best cost is at or below `target_cost`. `x0` seeds one
/// member of the search (PSO particle, SA start, GA individual).
struct StopRule {
    double target_cost = -kInf;
    std::vector<double> x0;
};

struct PsoConfig {
    int particles = 16;
    int iters = 40;
    double inertia = 0.72;
    double c1 = 1.49;
    double c2 = 1.49;
    std::uint64_t seed = 1;
    StopRule stop;
};

struct SaConfig {
    double t0 = 1.0;
    double cooling = 0.995;
    int steps = 2000;
    double step_scale = 0.1;  // fraction of each range
    std::uint64_t seed = 1;
    StopRule stop;
};

struct GaConfig {
    int population = 40;
    int generations = 100;
    int tournament = 3;
    double crossover = 0.8;
    double mutation = 0.1;
    double sigma = 0.05;  // fraction of each range
    int elitism = 1;
    long max_evals = -1;  // -1 = no cap beyond population × generations
    std::uint64_t seed = 1;
    StopRule stop;
};

struct BoConfig {
    int evals = 30;
    int initial = 10;
    int candidates = 256;
    double length_scale = 0.2;
    double noise = 1e-6;
    std::uint64_t seed = 1;
    StopRule stop;
};

OptResult pso_minimize(const CostFn& cost, const Bounds& bounds, const PsoConfig& cfg);
OptResult sa_minimize(const CostFn& cost, const Bounds& bounds, const SaConfig& cfg);
OptResult ga_minimize(const CostFn& cost, const Bounds& bounds, const GaConfig& cfg);
OptResult bo_minimize(const CostFn& cost, const Bounds& bounds, const BoConfig& cfg);

inline constexpr double kDefaultHeadroom = 0.2;

/// Noise and input-match cost of the critical stages.
double cost_stage2(double nf_sim, double s11_sim, double nf_user, double headroom = kDefaultHeadroom);
/// Gain and ripple cost of a calibrated band curve.
double cost_stage3(std::span<const double> gain_cal, double gain_user);

using CurveFn = std::function<std::vector<double>(const std::vector<double>&)>;
/// Given the corrected low-fidelity model and the previous round's point (empty in
/// round 1), returns the next parameter vector.
using Planner = std::function<std::vector<double>(const CurveFn& corrected, const std::vector<double>& previous)>;
using CurveCheck = std::function<bool(const std::vector<double>& hf_curve)>;

struct CalibrationResult {
    std::vector<double> params;
    std::vector<double> hf_curve;
    std::vector<double> lf_curve;  // corrected model at params
    std::vector<std::vector<double>> residual_history;
    int hf_calls = 0;
};

/// Plan on lofi + residual, check one high-fidelity curve, refresh the residual.
/// Throws CalibrationFailed after max_rounds without an accepted curve.
CalibrationResult calibrate_multifidelity(const CurveFn& lofi, const CurveFn& hifi, const Planner& planner,
                                          const CurveCheck& accept, int max_rounds = 5);

} // namespace rfamp
