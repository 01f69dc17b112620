#include "rfamp/stage_tools.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>

namespace rfamp {

double ToolContext::now() const
{
    if (clock)
        return clock();
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

namespace {

const DeviceKb& kb_of(const ToolContext& ctx)
{
    if (!ctx.kb)
        throw SchemaError("tool context has no device knowledge base");
    return *ctx.kb;
}

double parallel(double a, double b)
{
    if (std::isinf(a))
        return b;
    if (std::isinf(b))
        return a;
    return a * b / (a + b);
}

std::vector<double> flat_curve(std::size_t n, double v)
{
    return std::vector<double>(n, v);
}

constexpr double kDeadCurve = -200.0;

} // namespace

// Stage 1

std::vector<ActiveConfig> tool_active_sizing(const ToolContext& ctx, std::span<const double> ratios)
{
    const auto kinds = default_stage_kinds(static_cast<int>(ratios.size()));
    return allocate(kb_of(ctx), ratios, ctx.spec.power, kinds);
}

// Stage 2

std::pair<double, double> l_match(cplx z_in, double f0_ghz)
{
    const double r = z_in.real();
    const double x = z_in.imag();
    const double w = ghz_to_omega(f0_ghz);
    if (!(r > 0.0))
        throw Unmatchable(fmt::format("Re(z_in) = {:.3g} is not positive", r));
    if (std::abs(r - kZ0) <= 1e-9 * kZ0) {
        if (x > 1e-9)
            throw Unmatchable(fmt::format("z_in = {:.3g}{:+.3g}j needs a series capacitor", r, x));
        return {0.0, std::max(0.0, -x) / w * 1e12};
    }
    if (r > kZ0)
        throw Unmatchable(fmt::format("Re(z_in) = {:.3g} above 50 needs a capacitive branch", r));
    const double q = std::sqrt(r * (kZ0 - r));
    const double xg = -x - q;
    if (xg < 0.0)
        throw Unmatchable(fmt::format("z_in = {:.3g}{:+.3g}j needs a negative series reactance", r, x));
    const double xp = kZ0 * r / q;
    return {xp / w * 1e12, xg / w * 1e12};
}

Bounds stage2_bounds()
{
    return Bounds{{0.1, 100, 100, 100, 100, 0, 0, 0},
                  {0.7, 1000, 1000, 1000, 1000, 50, 50, 150},
                  {"", "pH", "pH", "Ohm", "Ohm", "fF", "fF", "pH"}};
}

Chain matched_critical_chain(const ActiveConfig& active, const Stage2Passive& p)
{
    return critical_chain(active.stages.at(0), active.stages.at(1), p.mcr1, p.l_s,
                          std::make_pair(p.l_par, p.l_g));
}

Stage2Eval stage2_evaluate(const ToolContext& ctx, const ActiveConfig& active, const std::vector<double>& x,
                           double headroom, std::optional<double> gain_require)
{
    const DesignSpec& spec = ctx.spec;
    const double w = ghz_to_omega(spec.fc);
    Stage2Eval ev;
    ev.s11_edge_db = 0.0;
    ev.passive.mcr1 = MCRPhysical{x[0], x[1], x[2], x[3], x[4], x[5], x[6]};
    ev.passive.l_s = x[7];

    const Chain bare = critical_chain(active.stages.at(0), active.stages.at(1), ev.passive.mcr1, ev.passive.l_s,
                                      std::nullopt);
    hf::record();
    const cplx z_in = input_impedance(bare, w);
    try {
        std::tie(ev.passive.l_par, ev.passive.l_g) = l_match(z_in, spec.fc);
    } catch (const Unmatchable&) {
        ev.cost = kUnmatchablePenalty;
        ev.nf_db = kInf;
        ev.s11_db = 0.0;
        ev.head_gain_db = -kInf;
        return ev;
    }
    ev.matched = true;
    const Chain chain = matched_critical_chain(active, ev.passive);
    hf::record();
    ev.nf_db = noise_figure(chain, spec.fc).nf_db;
    const auto s11_at = [&](double f) {
        const double gamma = std::abs(input_reflection(chain, ghz_to_omega(f)));
        return gamma > 0.0 ? std::max(db20(gamma), kReflectionFloorDb) : kReflectionFloorDb;
    };
    ev.s11_db = s11_at(spec.fc);
    ev.s11_edge_db = std::max(s11_at(spec.f_low()), s11_at(spec.f_high()));
    ev.head_gain_db = kInf;
    for (double f : {spec.f_low(), spec.fc, spec.f_high()})
        ev.head_gain_db = std::min(ev.head_gain_db, gain_to_node_db(chain, ghz_to_omega(f), kStage2GateIndex));
    ev.cost = cost_stage2(ev.nf_db, ev.s11_db, spec.nf_max, headroom);
    if (std::isfinite(spec.s11_max))
        ev.cost += 1000.0 * std::max(0.0, ev.s11_edge_db - spec.s11_max);
    if (gain_require)
        ev.cost += 1000.0 * std::max(0.0, *gain_require - ev.head_gain_db);
    if (!std::isfinite(ev.cost))
        ev.cost = kUnmatchablePenalty;
    return ev;
}

ImpedanceMatchingResult tool_impedance_matching(const ToolContext& ctx, const ActiveConfig& active,
                                                std::optional<double> nf_headroom,
                                                std::optional<double> gain_require, std::uint64_t seed)
{
    if (active.stages.size() < 2)
        throw SchemaError("active_params_dict: at least two stages are required");
    const double headroom = nf_headroom.value_or(kDefaultHeadroom);
    const CostFn cost = [&](const std::vector<double>& x) {
        return stage2_evaluate(ctx, active, x, headroom, gain_require).cost;
    };
    PsoConfig cfg = ctx.stage2_pso;
    cfg.seed = seed;
    cfg.stop.target_cost = 0.0;
    const OptResult opt = pso_minimize(cost, stage2_bounds(), cfg);

    const Stage2Eval best = stage2_evaluate(ctx, active, opt.best_x, headroom, gain_require);
    ImpedanceMatchingResult res;
    res.passive = best.passive;
    res.x = opt.best_x;
    res.cost = best.cost;
    res.feasible = best.matched && best.cost == 0.0;
    res.headroom = headroom;
    if (best.matched)
        res.sim = evaluate_chain(matched_critical_chain(active, best.passive), ctx.spec, kStage2GateIndex);
    return res;
}

// Stage 3

double absorbed_loading(const ActiveConfig& active, const LoadModel& load, std::size_t stage)
{
    const double c_out = active.stages.at(stage).cs_out;
    const double c_next = stage + 1 < active.stages.size() ? active.stages[stage + 1].cin : load.c_load;
    return 0.5 * (c_out + c_next);
}

Bounds stage3_bounds(const DesignSpec& spec, const ActiveConfig& active)
{
    const double a2 = absorbed_loading(active, spec.load, 1);
    const double a3 = absorbed_loading(active, spec.load, 2);
    if (a2 >= kMaxTankCap || a3 >= kMaxTankCap)
        throw Unrealizable("device loading exceeds the largest tank capacitance");
    return Bounds{{0.1, spec.f_low(), 0.1, a2, 0.1, spec.f_low(), 0.1, a3},
                  {0.8, spec.f_high(), 8.0, kMaxTankCap, 0.8, spec.f_high(), 8.0, kMaxTankCap},
                  {"", "GHz", "", "fF", "", "GHz", "", "fF"}};
}

namespace {

std::array<MCRParams, 2> decode_stage3(const std::vector<double>& x)
{
    return {MCRParams{x[0], ghz_to_omega(x[1]), x[2], x[3]}, MCRParams{x[4], ghz_to_omega(x[5]), x[6], x[7]}};
}

std::array<LfStage, 2> lf_stages(const DesignSpec& spec, const ActiveConfig& active, const std::vector<double>& x)
{
    const auto p = decode_stage3(x);
    std::array<LfStage, 2> st;
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& dev = active.stages.at(i + 1);
        const double r_tank = p[i].q0 / (p[i].omega0 * p[i].c * 1e-15);
        st[i].source = SourceModel{dev.gm, parallel(r_tank, dev.rs_out), dev.cs_out};
        st[i].params = p[i];
        st[i].r2 = i == 1 ? parallel(r_tank, spec.load.r_load) : r_tank;
    }
    return st;
}

std::vector<double> band_omega(const DesignSpec& spec)
{
    std::vector<double> w;
    for (double f : band_grid(spec))
        w.push_back(ghz_to_omega(f));
    return w;
}

std::vector<double> lf_stage_gains(const DesignSpec& spec, const ActiveConfig& active, const std::vector<double>& x)
{
    const auto st = lf_stages(spec, active, x);
    const cplx s(0.0, ghz_to_omega(spec.fc));
    std::vector<double> g;
    for (const auto& stage : st) {
        try {
            g.push_back(db20(std::abs(stage_voltage(stage.source, stage.params, stage.r2, s))));
        } catch (const DegenerateNetwork&) {
            g.push_back(kDeadCurve);
        }
    }
    return g;
}

struct InBand {
    double min = kInf;
    double max = -kInf;
};

InBand in_band_range(const DesignSpec& spec, std::span<const double> curve)
{
    const auto grid = band_grid(spec);
    const auto mask = in_band_mask(spec, grid);
    InBand r;
    for (std::size_t i = 0; i < curve.size() && i < mask.size(); ++i)
        if (mask[i]) {
            r.min = std::min(r.min, curve[i]);
            r.max = std::max(r.max, curve[i]);
        }
    return r;
}

} // namespace

std::vector<double> band_lofi(const DesignSpec& spec, const ActiveConfig& active, std::span<const double> head_db,
                              const std::vector<double>& x)
{
    const auto st = lf_stages(spec, active, x);
    const auto w = band_omega(spec);
    try {
        return chain_gain(st, head_db, w);
    } catch (const DegenerateNetwork&) {
        return flat_curve(w.size(), kDeadCurve);
    }
}

CandidateDesign compose_candidate(const ActiveConfig& active, const Stage2Passive& s2,
                                  const std::array<MCRPhysical, 2>& planned)
{
    CandidateDesign c;
    for (std::size_t i = 0; i < 3; ++i) {
        c.width[i] = active.stages.at(i).width;
        c.vgs[i] = active.stages.at(i).vbias;
    }
    c.mcr = {s2.mcr1, planned[0], planned[1]};
    c.l_par = s2.l_par;
    c.l_g = s2.l_g;
    c.l_s = s2.l_s;
    return c;
}

namespace {

std::array<MCRPhysical, 2> realize(const DesignSpec& spec, const ActiveConfig& active, const std::vector<double>& x)
{
    const auto p = decode_stage3(x);
    return {to_physical(p[0], absorbed_loading(active, spec.load, 1)),
            to_physical(p[1], absorbed_loading(active, spec.load, 2))};
}

} // namespace

std::vector<double> band_hifi(const ToolContext& ctx, const ActiveConfig& active, const Stage2Passive& s2,
                              const std::vector<double>& x)
{
    hf::record();
    const auto grid = band_grid(ctx.spec);
    try {
        const CandidateDesign cand = compose_candidate(active, s2, realize(ctx.spec, active, x));
        return small_signal(assemble(cand, kb_of(ctx), ctx.spec.load), grid).gain_db;
    } catch (const Error&) {
        return flat_curve(grid.size(), kDeadCurve);
    }
}

double band_cost(const DesignSpec& spec, std::span<const double> curve)
{
    const InBand r = in_band_range(spec, curve);
    const double ripple = 1000.0 * std::max(0.0, r.max - r.min - 3.0);
    if (!std::isfinite(spec.gain))
        return ripple;
    return 1000.0 * std::max(0.0, std::abs(spec.gain - r.min) - 3.0) + ripple;
}

constexpr double kStageBalanceWeight = 1.0;

BandPlanningResult tool_band_planning(const ToolContext& ctx, const ActiveConfig& active, const Stage2Passive& s2,
                                      std::span<const double> head_db,
                                      std::optional<std::vector<double>> gain_req_list, std::uint64_t seed)
{
    const DesignSpec& spec = ctx.spec;
    if (active.stages.size() != 3)
        throw SchemaError("active_params_dict: band planning needs three stages");
    if (head_db.size() != static_cast<std::size_t>(kBandGridPoints))
        throw GridMismatch(fmt::format("gain_list has {} points, the band grid has {}", head_db.size(),
                                       kBandGridPoints));
    const Bounds bounds = stage3_bounds(spec, active);
    const std::vector<double> head(head_db.begin(), head_db.end());

    const CurveFn lofi = [&](const std::vector<double>& x) { return band_lofi(spec, active, head, x); };
    const CurveFn hifi = [&](const std::vector<double>& x) { return band_hifi(ctx, active, s2, x); };

    // The planner aims the band floor 1.5 dB under the target, centring the 3 dB window, and keeps
    // the two planned stages near equal gain so neither tank runs lossy.
    const auto plan_cost = [&](const std::vector<double>& curve, const std::vector<double>& x) {
        double c = band_cost(spec, curve);
        const InBand r = in_band_range(spec, curve);
        c += r.max - r.min;
        if (std::isfinite(spec.gain))
            c += std::abs(spec.gain - 1.5 - r.min);
        const auto g = lf_stage_gains(spec, active, x);
        c += kStageBalanceWeight * std::abs(g[0] - g[1]);
        if (gain_req_list) {
            for (std::size_t i = 0; i < g.size() && i < gain_req_list->size(); ++i)
                if (std::isfinite((*gain_req_list)[i]))
                    c += 1000.0 * std::max(0.0, (*gain_req_list)[i] - g[i]);
        }
        return c;
    };

    int round = 0;
    const Planner planner = [&](const CurveFn& corrected, const std::vector<double>& previous) {
        SaConfig cfg = ctx.stage3_sa;
        cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(round++));
        if (previous.empty()) {
            const double f_lo = spec.f_low();
            const double f_hi = spec.f_high();
            cfg.stop.x0 = {0.4, f_lo + (f_hi - f_lo) / 3.0, 2.0, 0.5 * (bounds.lo[3] + kMaxTankCap),
                           0.4, f_lo + 2.0 * (f_hi - f_lo) / 3.0, 2.0, 0.5 * (bounds.lo[7] + kMaxTankCap)};
        } else {
            cfg.stop.x0 = previous;
            cfg.step_scale *= 0.3;
            cfg.t0 *= 0.1;
        }
        const CostFn cost = [&](const std::vector<double>& x) { return plan_cost(corrected(x), x); };
        return sa_minimize(cost, bounds, cfg).best_x;
    };
    const CurveCheck accept = [&](const std::vector<double>& h) { return band_cost(spec, h) == 0.0; };

    const CalibrationResult cal = calibrate_multifidelity(lofi, hifi, planner, accept, ctx.calibration_rounds);

    BandPlanningResult res;
    res.params = decode_stage3(cal.params);
    res.physical = realize(spec, active, cal.params);
    res.freq_grid = band_grid(spec);
    res.cal_gain_db = cal.lf_curve;
    res.hf_gain_db = cal.hf_curve;
    res.stage_gain_db = lf_stage_gains(spec, active, cal.params);
    const InBand r = in_band_range(spec, cal.hf_curve);
    res.hf_ripple_db = r.max - r.min;
    res.hf_min_gain_db = r.min;
    res.residual_history = cal.residual_history;
    res.hf_calls = cal.hf_calls;
    return res;
}

// Stage 4

nlohmann::json wholechain_passive_json(const CandidateDesign& c)
{
    const nlohmann::json j = c;
    return nlohmann::json{{"x2", j.at("x2")}, {"x3", j.at("x3")}};
}

nlohmann::json wholechain_active_json(const CandidateDesign& c, const DeviceKb& kb)
{
    const auto kinds = default_stage_kinds(3);
    ActiveConfig a;
    for (std::size_t i = 0; i < 3; ++i)
        a.stages.push_back(find_device(kb.table(kinds[i]), c.width[i], c.vgs[i]));
    a.total_budget = a.total_current();
    for (const auto& s : a.stages)
        a.power_split.push_back(s.id / a.total_budget);
    return a;
}

CandidateDesign parse_wholechain(const nlohmann::json& wholechain_active, const nlohmann::json& wholechain_passive)
{
    if (!wholechain_active.is_object() || !wholechain_active.contains("stages") ||
        !wholechain_active.at("stages").is_array() || wholechain_active.at("stages").size() != 3)
        throw SchemaError("wholechain_active_dict.stages: expected three stage records");
    nlohmann::json x1 = {{"width", nlohmann::json::array()}, {"vgs", nlohmann::json::array()}};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& st = wholechain_active.at("stages")[i];
        for (const char* key : {"width", "vbias"})
            if (!st.contains(key))
                throw SchemaError(fmt::format("wholechain_active_dict.stages[{}].{}: missing required field", i, key));
        x1["width"].push_back(st.at("width"));
        x1["vgs"].push_back(st.at("vbias"));
    }
    if (!wholechain_passive.is_object())
        throw SchemaError("wholechain_passive_dict: expected an object");
    nlohmann::json cand_json = {{"x1", x1}};
    for (const char* key : {"x2", "x3"}) {
        if (!wholechain_passive.contains(key))
            throw SchemaError(fmt::format("{}: missing required field", key));
        cand_json[key] = wholechain_passive.at(key);
    }
    return cand_json.get<CandidateDesign>();
}

SimReport tool_fullchain_eval(const ToolContext& ctx, const nlohmann::json& wholechain_active,
                              const nlohmann::json& wholechain_passive)
{
    const CandidateDesign cand = parse_wholechain(wholechain_active, wholechain_passive);
    return fullchain_report(cand, ctx.spec, kb_of(ctx), ctx.spec.load);
}

std::string to_string(BacktrackKind k)
{
    switch (k) {
    case BacktrackKind::RerunStages2to4: return "RerunStages2to4";
    case BacktrackKind::ReplanStage3Tighter: return "ReplanStage3Tighter";
    case BacktrackKind::RerunStages2to4GlobalGain: return "RerunStages2to4GlobalGain";
    case BacktrackKind::EscalateStage1: return "EscalateStage1";
    case BacktrackKind::Accept: return "Accept";
    case BacktrackKind::Abort: return "Abort";
    }
    return "Abort";
}

BacktrackAction backtrack_decide(const SimReport& report, const DesignSpec& spec, const AttemptState& state)
{
    if (report.all_pass())
        return {BacktrackKind::Accept, std::nullopt, std::nullopt};
    if (state.budget_exhausted)
        return {BacktrackKind::Abort, std::nullopt, std::nullopt};
    if (!report.error.empty())
        return {BacktrackKind::EscalateStage1, std::nullopt, std::nullopt};

    const auto viol = [&](const char* key) {
        const auto it = report.violations.find(key);
        return it == report.violations.end() ? 0.0 : it->second;
    };
    if (viol("nf") > 0.0)
        return {BacktrackKind::RerunStages2to4, state.headroom + 1.0 * (report.nf_db - spec.nf_max), std::nullopt};

    if (viol("ip1db") > 0.0 || viol("gain") > 0.0 || viol("ripple") > 0.0) {
        const int attempt = state.gain_attempts;
        if (attempt + 1 >= state.ladder_depth)
            return {BacktrackKind::EscalateStage1, std::nullopt, std::nullopt};
        // Gain moves towards the last stage: earlier gain multiplies every later stage's
        // compression term.
        std::optional<std::vector<double>> req;
        if (state.stage_gain_db.size() == 2)
            req = std::vector<double>{-kInf, state.stage_gain_db[1] + state.shift_db * (attempt + 1)};
        const auto kind = attempt == 0 ? BacktrackKind::ReplanStage3Tighter : BacktrackKind::RerunStages2to4GlobalGain;
        return {kind, std::nullopt, req};
    }
    // Only the input match is left.
    return {BacktrackKind::RerunStages2to4, state.headroom, std::nullopt};
}

// Tool calls

std::string to_string(ToolName t)
{
    switch (t) {
    case ToolName::ActiveSizing: return "ActiveSizing";
    case ToolName::ImpedanceMatching: return "ImpedanceMatching";
    case ToolName::BandPlanning: return "BandPlanning";
    case ToolName::FullchainEval: return "FullchainEval";
    }
    return "ActiveSizing";
}

ToolName tool_name_from_string(const std::string& s)
{
    for (auto t : {ToolName::ActiveSizing, ToolName::ImpedanceMatching, ToolName::BandPlanning, ToolName::FullchainEval})
        if (to_string(t) == s)
            return t;
    throw SchemaError(fmt::format("tool_name: unknown tool \"{}\"", s));
}

namespace {

void require(const nlohmann::json& args, const char* key, bool (nlohmann::json::*check)() const noexcept,
             const char* what)
{
    if (!args.contains(key))
        throw SchemaError(fmt::format("args.{}: missing required field", key));
    if (!(args.at(key).*check)())
        throw SchemaError(fmt::format("args.{}: expected {}", key, what));
}

void optional_number(const nlohmann::json& args, const char* key)
{
    if (args.contains(key))
        json_number(args.at(key), fmt::format("args.{}", key));
}

std::uint64_t seed_arg(const nlohmann::json& args)
{
    return args.contains("seed") ? args.at("seed").get<std::uint64_t>() : 1;
}

std::string error_kind(const std::exception& e)
{
#define RFAMP_KIND(Name)                       \
    if (dynamic_cast<const Name*>(&e))         \
        return #Name;
    RFAMP_KIND(InfeasibleBudget)
    RFAMP_KIND(DegenerateNetwork)
    RFAMP_KIND(GridMismatch)
    RFAMP_KIND(Unrealizable)
    RFAMP_KIND(UnknownDevice)
    RFAMP_KIND(SingularNetwork)
    RFAMP_KIND(Unmatchable)
    RFAMP_KIND(NoFeasibleSolution)
    RFAMP_KIND(CalibrationFailed)
    RFAMP_KIND(BudgetExhausted)
    RFAMP_KIND(SchemaError)
#undef RFAMP_KIND
    if (dynamic_cast<const nlohmann::json::exception*>(&e))
        return "SchemaError";
    return "Error";
}

} // namespace

void validate_args(const ToolCall& call)
{
    const auto& a = call.args;
    if (!a.is_object())
        throw SchemaError("args: expected an object");
    switch (call.tool) {
    case ToolName::ActiveSizing:
        require(a, "power_ratio_list", &nlohmann::json::is_array, "a list of fractions");
        for (std::size_t i = 0; i < a.at("power_ratio_list").size(); ++i)
            if (!a.at("power_ratio_list")[i].is_number())
                throw SchemaError(fmt::format("args.power_ratio_list[{}]: expected a number", i));
        break;
    case ToolName::ImpedanceMatching:
        require(a, "active_params_dict", &nlohmann::json::is_object, "an active configuration");
        optional_number(a, "nf_headroom");
        optional_number(a, "gain_require");
        break;
    case ToolName::BandPlanning:
        require(a, "active_params_dict", &nlohmann::json::is_object, "an active configuration");
        require(a, "passive_params_cpstages", &nlohmann::json::is_object, "the critical-stage passives");
        require(a, "gain_list", &nlohmann::json::is_array, "a gain curve");
        if (a.contains("gain_req_list") && !a.at("gain_req_list").is_array())
            throw SchemaError("args.gain_req_list: expected a list");
        break;
    case ToolName::FullchainEval:
        require(a, "wholechain_active_dict", &nlohmann::json::is_object, "an active configuration");
        require(a, "wholechain_passive_dict", &nlohmann::json::is_object, "a passive dictionary");
        break;
    }
}

ToolResult dispatch(const ToolContext& ctx, const ToolCall& call)
{
    ToolResult res;
    res.call_id = call.call_id;
    const double t0 = ctx.now();
    const std::int64_t hf0 = hf::thread_count();
    try {
        validate_args(call);
        const auto& a = call.args;
        switch (call.tool) {
        case ToolName::ActiveSizing: {
            const auto ratios = a.at("power_ratio_list").get<std::vector<double>>();
            res.payload["active_params_dict_list"] = tool_active_sizing(ctx, ratios);
            break;
        }
        case ToolName::ImpedanceMatching: {
            const auto active = a.at("active_params_dict").get<ActiveConfig>();
            std::optional<double> headroom, gain_req;
            if (a.contains("nf_headroom"))
                headroom = json_number(a.at("nf_headroom"), "args.nf_headroom");
            if (a.contains("gain_require"))
                gain_req = json_number(a.at("gain_require"), "args.gain_require");
            const auto r = tool_impedance_matching(ctx, active, headroom, gain_req, seed_arg(a));
            res.payload["passive_params_cpstages"] = r.passive;
            res.payload["sim_result_cpstages"] = r.sim;
            res.payload["cost"] = number_json(r.cost);
            res.payload["feasible"] = r.feasible;
            res.payload["nf_headroom"] = r.headroom;
            if (!r.feasible) {
                res.ok = false;
                res.error = fmt::format("NoFeasibleSolution: best stage-2 cost {:.4g}", r.cost);
            }
            break;
        }
        case ToolName::BandPlanning: {
            const auto active = a.at("active_params_dict").get<ActiveConfig>();
            const auto s2 = a.at("passive_params_cpstages").get<Stage2Passive>();
            std::vector<double> head;
            for (std::size_t i = 0; i < a.at("gain_list").size(); ++i)
                head.push_back(json_number(a.at("gain_list")[i], fmt::format("args.gain_list[{}]", i)));
            std::optional<std::vector<double>> req;
            if (a.contains("gain_req_list")) {
                req.emplace();
                for (std::size_t i = 0; i < a.at("gain_req_list").size(); ++i)
                    req->push_back(json_number(a.at("gain_req_list")[i], fmt::format("args.gain_req_list[{}]", i)));
            }
            const auto r = tool_band_planning(ctx, active, s2, head, req, seed_arg(a));
            nlohmann::json planned = r;
            res.payload["passive_params_dict"] = planned.at("passive_params_dict");
            res.payload["cal_gain_dict"] = planned.at("cal_gain_dict");
            break;
        }
        case ToolName::FullchainEval: {
            const SimReport r = tool_fullchain_eval(ctx, a.at("wholechain_active_dict"), a.at("wholechain_passive_dict"));
            res.payload["sim_results_dict"] = r;
            if (!r.error.empty()) {
                res.ok = false;
                res.error = "EvaluationError: " + r.error;
            }
            break;
        }
        }
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = error_kind(e) + ": " + e.what();
    }
    res.hf_evals_used = hf::thread_count() - hf0;
    res.elapsed = ctx.now() - t0;
    return res;
}

const nlohmann::json& tool_documentation()
{
    static const nlohmann::json doc = nlohmann::json::array({
        {{"name", "ActiveSizing"},
         {"input", "<power_ratio_list>"},
         {"output", "<active_params_dict_list>"},
         {"description",
          "Inputs a list of power ratios of each stages, e.g. [0.4, 0.3, 0.3] means that the first, second and "
          "third stages use 40 percents, 30 percents and 30 percents of the given power constraints respectively. "
          "Outputs all possible combinations of active parameters in a list. Each item is a dictionary containing "
          "the width, bias voltage, transconductance, dc current, and input/output impedance of each stages."}},
        {{"name", "ImpedanceMatching"},
         {"input", "<active_params_dict> [nf_headroom] [gain_require]"},
         {"output", "<passive_params_cpstages> <sim_result_cpstages>"},
         {"description",
          "Takes a list of active parameters and performs source and load matching for critical performance "
          "stages to satisfy user-specified performance requirements. Optionally accepts NF_headroom and "
          "Gain_require to constrain noise figure and gain. Optimizes according to user-specified requirements, "
          "gain constraints, and headroom. Returns the optimized passive parameters of the critical performance "
          "stages together with the corresponding simulation results."}},
        {{"name", "BandPlanning"},
         {"input", "<active_params_dict> <passive_params_cpstages> <gain_list> [gain_req_list]"},
         {"output", "<passive_params_dict> <cal_gain_dict>"},
         {"description",
          "Uses a low-fidelity computation method based on the positions of interleaved peaks to achieve the "
          "required gain and ripple within the specified operating bandwidth. Optionally accepts "
          "Gain_require_list to constrain gain distribution of each stages. After completing optimization, it "
          "outputs the passive parameter dictionary of the remaining stages together with the low-fidelity "
          "theoretical gain dictionary."}},
        {{"name", "FullchainEval"},
         {"input", "<wholechain_active_dict> <wholechain_passive_dict>"},
         {"output", "<sim_results_dict>"},
         {"description",
          "Receives a circuit dictionary, invokes the simulator to perform full-chain evaluation. After "
          "completing simulation, it returns the true simulation results for both small-signal and large-signal "
          "analyses."}},
    });
    return doc;
}

void to_json(nlohmann::json& j, const Stage2Passive& p)
{
    j = nlohmann::json{{"mcr1", p.mcr1}, {"l_s", p.l_s}, {"l_par", p.l_par}, {"l_g", p.l_g}};
}

void from_json(const nlohmann::json& j, Stage2Passive& p)
{
    for (const char* key : {"mcr1", "l_s", "l_par", "l_g"})
        if (!j.contains(key))
            throw SchemaError(fmt::format("passive_params_cpstages.{}: missing required field", key));
    p.mcr1 = j.at("mcr1").get<MCRPhysical>();
    p.l_s = j.at("l_s").get<double>();
    p.l_par = j.at("l_par").get<double>();
    p.l_g = j.at("l_g").get<double>();
}

void to_json(nlohmann::json& j, const BandPlanningResult& r)
{
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : r.residual_history)
        curves.push_back(c);
    j = nlohmann::json{
        {"passive_params_dict", {{"mcr2", r.physical[0]}, {"mcr3", r.physical[1]}, {"abstract", r.params}}},
        {"cal_gain_dict",
         {{"freq_grid", r.freq_grid},
          {"cal_gain_db", r.cal_gain_db},
          {"hf_gain_db", r.hf_gain_db},
          {"stage_gain_db", r.stage_gain_db},
          {"hf_ripple_db", r.hf_ripple_db},
          {"hf_min_gain_db", r.hf_min_gain_db},
          {"residual_history", curves},
          {"hf_calls", r.hf_calls}}}};
}

void to_json(nlohmann::json& j, const ToolCall& c)
{
    j = nlohmann::json{{"schema_version", kSchemaVersion},
                       {"tool_name", to_string(c.tool)},
                       {"args", c.args},
                       {"call_id", c.call_id},
                       {"timestamp", c.timestamp}};
}

void from_json(const nlohmann::json& j, ToolCall& c)
{
    if (!j.contains("tool_name"))
        throw SchemaError("tool_name: missing required field");
    c.tool = tool_name_from_string(j.at("tool_name").get<std::string>());
    c.args = j.value("args", nlohmann::json::object());
    c.call_id = j.value("call_id", std::string{});
    c.timestamp = j.value("timestamp", std::int64_t{0});
}

void to_json(nlohmann::json& j, const ToolResult& r)
{
    j = nlohmann::json{{"schema_version", kSchemaVersion},
                       {"call_id", r.call_id},
                       {"payload", r.payload},
                       {"hf_evals_used", r.hf_evals_used},
                       {"elapsed", r.elapsed},
                       {"ok", r.ok}};
    if (r.error)
        j["error"] = *r.error;
}

void from_json(const nlohmann::json& j, ToolResult& r)
{
    r.call_id = j.at("call_id").get<std::string>();
    r.payload = j.value("payload", nlohmann::json::object());
    r.hf_evals_used = j.value("hf_evals_used", std::int64_t{0});
    r.elapsed = j.value("elapsed", 0.0);
    r.ok = j.at("ok").get<bool>();
    r.error.reset();
    if (j.contains("error"))
        r.error = j.at("error").get<std::string>();
}

void to_json(nlohmann::json& j, const BacktrackAction& a)
{
    j = nlohmann::json{{"kind", to_string(a.kind)}};
    if (a.adjusted_headroom)
        j["adjusted_headroom"] = *a.adjusted_headroom;
    if (a.gain_constraints) {
        nlohmann::json g = nlohmann::json::array();
        for (double v : *a.gain_constraints)
            g.push_back(number_json(v));
        j["gain_constraints"] = g;
    }
}

void append_jsonl(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path, std::ios::app);
    if (!out)
        throw StorageError(fmt::format("{}: cannot open for append", path));
    out << j.dump() << '\n';
    if (!out)
        throw StorageError(fmt::format("{}: write failed", path));
}

std::vector<nlohmann::json> read_jsonl(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw StorageError(fmt::format("{}: cannot open for reading", path));
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty())
            continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw StorageError(fmt::format("{}:{}: {}", path, n, e.what()));
        }
    }
    return out;
}

} // namespace rfamp
