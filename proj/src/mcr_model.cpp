#include "rfamp/mcr_model.hpp"

#include <fmt/format.h>

namespace rfamp {

namespace {

// Shared characteristic polynomial of the symmetric pair.
cplx denom_poly(const MCRParams& p, cplx s)
{
    const double k2 = 1.0 - p.k * p.k;
    const double q = p.q0;
    const double w = p.omega0;
    return k2 * q * q * s * s * s * s + 2.0 * k2 * q * w * s * s * s + (k2 + 2.0 * q * q) * w * w * s * s +
           2.0 * q * w * w * w * s + q * q * w * w * w * w;
}

cplx check_passive(cplx y, cplx s)
{
    if (!(y.real() > 0.0))
        throw DegenerateNetwork(
            fmt::format("Re(y11) = {:.3e} at {:.3f} GHz", y.real(), omega_to_ghz(std::abs(s))));
    return y;
}

} // namespace

cplx y11(const MCRParams& p, double rs, cplx s)
{
    const double k2 = 1.0 - p.k * p.k;
    const double q = p.q0;
    const double w = p.omega0;
    const cplx den = k2 * rs * w * q * s * s * s + k2 * rs * w * w * s * s + rs * w * w * w * q * s;
    return check_passive(denom_poly(p, s) / den, s);
}

cplx y11_as_printed(const MCRParams& p, double rs, cplx s)
{
    const double k2 = 1.0 - p.k * p.k;
    const double q = p.q0;
    const double w = p.omega0;
    const cplx den = k2 * rs * w * q * s * s * s + k2 * rs * w * w * s * s + rs * w * w * w * q;
    return denom_poly(p, s) / den;
}

LoadEquivalent load_equivalent(const MCRParams& p, double rs, cplx s)
{
    const cplx y = y11(p, rs, s);
    return {1.0 / y.real(), y.imag() / std::abs(s)};
}

cplx z21(const MCRParams& p, double rs, double r2, cplx s)
{
    const double w = p.omega0;
    const cplx num = p.k * p.q0 * w * w * w * std::sqrt(rs * r2) * s;
    const cplx v = num / denom_poly(p, s);
    check_passive(y11(p, rs, s), s);
    return v;
}

cplx stage_voltage(const SourceModel& src, const MCRParams& p, double r2, cplx s)
{
    const double gm = src.gm * 1e-3;
    const double rs = src.rs;
    const double cs = src.cs * 1e-15;
    const auto [rl, cl] = load_equivalent(p, rs, s);
    const cplx i11 = gm * (kZ0 * rs * cs * s + rs + kZ0) / rs * rs * (rl * cl * s + 1.0) /
                     (rs * rl * (cs + cl) * s + rs + rl);
    return i11 * z21(p, rs, r2, s) / 2.0;
}

std::vector<double> chain_gain(std::span<const LfStage> stages, std::span<const double> head_db,
                               std::span<const double> omega)
{
    if (head_db.size() != omega.size())
        throw GridMismatch(
            fmt::format("head curve has {} points, frequency grid has {}", head_db.size(), omega.size()));
    if (omega.empty())
        throw GridMismatch("empty frequency grid");
    std::vector<double> out(head_db.begin(), head_db.end());
    for (const auto& st : stages)
        for (std::size_t i = 0; i < omega.size(); ++i)
            out[i] += db20(std::abs(stage_voltage(st.source, st.params, st.r2, cplx(0.0, omega[i]))));
    return out;
}

MCRPhysical to_physical(const MCRParams& p, double load_absorb, int* iterations)
{
    if (!(load_absorb >= 0.0) || load_absorb >= kMaxTankCap)
        throw Unrealizable(fmt::format("absorbed loading {:.1f} fF leaves no tank capacitance", load_absorb));
    if (!(p.omega0 > 0.0) || !(p.c > 0.0) || !(p.q0 > 0.0))
        throw Unrealizable("omega0, q0 and c must be positive");

    const double l_target = 1.0 / (p.omega0 * p.omega0 * p.c * 1e-15);  // H
    const auto resonance = [&](double c_eff) { return 1.0 / std::sqrt(l_target * c_eff * 1e-15); };

    double lo = load_absorb;
    double hi = kMaxTankCap;
    // Resonance falls as c_eff grows; the target must lie between the ends.
    if (resonance(hi) > p.omega0 * (1.0 + 1e-3) || resonance(std::max(lo, 1e-9)) < p.omega0 * (1.0 - 1e-3))
        throw Unrealizable(fmt::format("no tank capacitance in [{:.1f}, {:.0f}] fF reaches {:.3f} GHz",
                                       load_absorb, kMaxTankCap, omega_to_ghz(p.omega0)));
    double c_eff = 0.5 * (lo + hi);
    int it = 0;
    for (; it < 60; ++it) {
        c_eff = 0.5 * (lo + hi);
        const double w = resonance(c_eff);
        if (std::abs(w - p.omega0) <= 1e-4 * p.omega0)
            break;
        if (w > p.omega0)
            lo = c_eff;
        else
            hi = c_eff;
    }
    if (std::abs(resonance(c_eff) - p.omega0) > 1e-3 * p.omega0)
        throw Unrealizable("binary search did not reach the resonance tolerance");
    if (iterations)
        *iterations = it + 1;

    const double c_f = c_eff * 1e-15;
    const double l = 1.0 / (p.omega0 * p.omega0 * c_f);
    const double r = p.q0 / (p.omega0 * c_f);
    const double c_tank = c_eff - load_absorb;
    return {p.k, l * 1e12, l * 1e12, r, r, c_tank, c_tank};
}

Resonance resonance_of(const MCRPhysical& m, double load_absorb)
{
    const double c_eff = (m.c1 + load_absorb) * 1e-15;
    const double w = 1.0 / std::sqrt(m.l1 * 1e-12 * c_eff);
    return {w, m.r1 * w * c_eff};
}

void to_json(nlohmann::json& j, const MCRParams& p)
{
    j = nlohmann::json{{"k", p.k}, {"omega0", p.omega0}, {"q0", p.q0}, {"c", p.c}};
}

void from_json(const nlohmann::json& j, MCRParams& p)
{
    p.k = j.at("k").get<double>();
    p.omega0 = j.at("omega0").get<double>();
    p.q0 = j.at("q0").get<double>();
    p.c = j.at("c").get<double>();
}

void to_json(nlohmann::json& j, const MCRPhysical& m)
{
    j = nlohmann::json{{"k", m.k},   {"l1", m.l1}, {"l2", m.l2}, {"r1", m.r1},
                       {"r2", m.r2}, {"c1", m.c1}, {"c2", m.c2}};
}

void from_json(const nlohmann::json& j, MCRPhysical& m)
{
    for (const char* key : {"k", "l1", "l2", "r1", "r2", "c1", "c2"})
        if (!j.contains(key))
            throw SchemaError(fmt::format("mcr.{}: missing required field", key));
    m.k = j.at("k").get<double>();
    m.l1 = j.at("l1").get<double>();
    m.l2 = j.at("l2").get<double>();
    m.r1 = j.at("r1").get<double>();
    m.r2 = j.at("r2").get<double>();
    m.c1 = j.at("c1").get<double>();
    m.c2 = j.at("c2").get<double>();
}

} // namespace rfamp
