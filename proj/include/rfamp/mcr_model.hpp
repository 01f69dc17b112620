#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/common.hpp"

namespace rfamp {

/// Abstract description of a magnetically coupled resonator: two identical parallel
/// RLC tanks with coupling k. omega0 is in rad/s, c in fF.
struct MCRParams {
    double k = 0.3;
    double omega0 = 0.0;
    double q0 = 4.0;
    double c = 100.0;

    bool operator==(const MCRParams&) const = default;
};

/// Physical component values. Inductances in pH, resistances in Ω, capacitances in fF.
struct MCRPhysical {
    double k = 0.3;
    double l1 = 0, l2 = 0;
    double r1 = 0, r2 = 0;
    double c1 = 0, c2 = 0;

    bool operator==(const MCRPhysical&) const = default;
};

/// Norton model of the driving stage: gm (mS) with rs (Ω) ‖ cs (fF).
struct SourceModel {
    double gm = 0;
    double rs = 0;
    double cs = 0;
};

/// Input admittance (S) of the symmetric MCR whose tanks both carry resistance rs.
/// Throws DegenerateNetwork when Re(y11) <= 0.
cplx y11(const MCRParams& p, double rs, cplx s);

/// Equivalent shunt load seen at the input: rl = 1/Re(y11) Ω, cl = Im(y11)/ω F.
struct LoadEquivalent {
    double rl = 0;
    double cl = 0;
};
LoadEquivalent load_equivalent(const MCRParams& p, double rs, cplx s);

/// Transimpedance (Ω) from the primary tank current to the secondary voltage.
cplx z21(const MCRParams& p, double rs, double r2, cplx s);

/// Stage output voltage per volt of gate drive: I11 · z21 / 2, with the drive current
/// referred to the 50 Ω characterization load.
cplx stage_voltage(const SourceModel& src, const MCRParams& p, double r2, cplx s);

/// y11 exactly as typeset, whose denominator has no s on its last term. Kept only for the
/// comparison test; never used by the planner.
cplx y11_as_printed(const MCRParams& p, double rs, cplx s);

struct LfStage {
    SourceModel source;
    MCRParams params;
    double r2 = 0;
};

/// head_db(ω) + Σ 20·log10|V_i(jω)|. Throws GridMismatch when the lengths differ.
std::vector<double> chain_gain(std::span<const LfStage> stages, std::span<const double> head_db,
                               std::span<const double> omega);

/// Symmetric realization whose tank capacitance plus the absorbed device loading
/// resonates at omega0. Throws Unrealizable when no c in [load_absorb, 200] fF does.
/// The bisection count is written to *iterations when given.
MCRPhysical to_physical(const MCRParams& p, double load_absorb, int* iterations = nullptr);

/// Resonance and quality factor of a physical MCR including the absorbed loading.
struct Resonance {
    double omega0 = 0;
    double q0 = 0;
};
Resonance resonance_of(const MCRPhysical& m, double load_absorb);

inline constexpr double kMaxTankCap = 200.0;  // fF

void to_json(nlohmann::json& j, const MCRParams& p);
void from_json(const nlohmann::json& j, MCRParams& p);
void to_json(nlohmann::json& j, const MCRPhysical& m);
void from_json(const nlohmann::json& j, MCRPhysical& m);

} // namespace rfamp
