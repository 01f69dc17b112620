// Acceptance run: one PASS/FAIL line per criterion. `--only N` runs a single criterion.
#include <chrono>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "support/fixtures.hpp"
#include "support/mcr_oracle.hpp"
#include "support/netlist.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

using namespace rfamp;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

DesignSpec desk(const std::string& id) { return load_spec(fixtures::data_dir() / "benchmark_desk.json", id); }

ToolContext context(const DesignSpec& spec)
{
    ToolContext ctx;
    ctx.kb = &fixtures::kb();
    ctx.spec = spec;
    ctx.clock = [] { return 0.0; };
    return ctx;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

// 1

Outcome cost_functions()
{
    const auto t0 = std::chrono::steady_clock::now();
    int bad = 0;
    if (cost_stage2(5.0, -18, 5, 0.2) != 2200.0)
        ++bad;
    if (cost_stage3(std::vector<double>{18, 24}, 25) != 7000.0)
        ++bad;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> nf(0, 10), s11(-40, 0), h(0, 2), g(0, 40);
    for (int i = 0; i < 1000; ++i) {
        const double a = nf(rng), b = s11(rng), u = nf(rng), hr = h(rng);
        const double e2 = 1000.0 * std::max(0.0, a - (u - hr)) + 1000.0 * std::max(0.0, b + 20.0);
        if (cost_stage2(a, b, u, hr) != e2)
            ++bad;
        std::vector<double> curve(static_cast<std::size_t>(1 + i % 21));
        for (auto& v : curve)
            v = g(rng);
        const double target = g(rng);
        const double mn = *std::min_element(curve.begin(), curve.end());
        const double mx = *std::max_element(curve.begin(), curve.end());
        const double e3 = 1000.0 * std::max(0.0, std::abs(target - mn) - 3.0) + 1000.0 * std::max(0.0, mx - mn - 3.0);
        if (cost_stage3(curve, target) != e3)
            ++bad;
    }
    const double dt = seconds_since(t0);
    return {bad == 0 && dt < 1.0, fmt::format("{} mismatches over 2002 checks, {:.3f} s", bad, dt)};
}

// 2

Outcome mcr_oracle()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(102);
    const cplx j{0.0, 1.0};
    double worst = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const MCRParams p{fixtures::uniform(rng, 0.05, 0.7), ghz_to_omega(fixtures::uniform(rng, 5, 60)),
                          fixtures::uniform(rng, 1, 15), fixtures::uniform(rng, 20, 200)};
        const double rs = fixtures::uniform(rng, 50, 2000);
        const SourceModel src{fixtures::uniform(rng, 5, 150), rs, fixtures::uniform(rng, 5, 100)};
        for (double f : log_grid(0.5 * omega_to_ghz(p.omega0), 1.5 * omega_to_ghz(p.omega0), 21)) {
            const cplx s = j * ghz_to_omega(f);
            worst = std::max(worst, fixtures::rel_err(y11(p, rs, s), oracle::mcr_y11(p, rs, s)));
            worst = std::max(worst, fixtures::rel_err(z21(p, rs, rs, s), oracle::mcr_z21(p, rs, s)));
            worst = std::max(worst,
                             fixtures::rel_err(stage_voltage(src, p, rs, s), oracle::mcr_stage_voltage(src, p, s)));
        }
    }
    const double dt = seconds_since(t0);
    return {worst <= 1e-9 && dt < 5.0, fmt::format("worst relative error {:.2e}, {:.3f} s", worst, dt)};
}

// 3

Outcome evaluator_oracle()
{
    std::mt19937_64 rng(103);
    double worst = 0;
    for (int n = 0; n < 50; ++n) {
        const Chain chain = fixtures::random_chain(rng);
        for (double f : log_grid(5, 80, 21)) {
            const double w = ghz_to_omega(f);
            const Abcd m = cascade(chain, w);
            const auto ref = oracle::ports(chain, w);
            const cplx zin = m(0, 0) / m(1, 0);
            worst = std::max(worst, fixtures::rel_err(2.0 / (m(0, 0) + kZ0 * m(1, 0)), ref.gain));
            worst = std::max(worst, fixtures::rel_err((zin - kZ0) / (zin + kZ0), (ref.zin - kZ0) / (ref.zin + kZ0)));
        }
    }
    double excess = 0;
    for (int n = 0; n < 50; ++n) {
        const Chain chain = fixtures::random_chain(rng, true);
        for (double f : log_grid(5, 80, 21)) {
            const Abcd m = cascade(chain, ghz_to_omega(f));
            const cplx a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
            const cplx den = a + b / kZ0 + c * kZ0 + d;
            const cplx s11 = (a + b / kZ0 - c * kZ0 - d) / den;
            const cplx s21 = 2.0 / den;
            excess = std::max(excess, std::norm(s21) + std::norm(s11) - 1.0);
        }
    }
    return {worst <= 1e-6 && excess <= 1e-6,
            fmt::format("worst S21/S11 relative error {:.2e}; largest |S21|²+|S11|² − 1 on passive chains {:.2e}",
                        worst, excess)};
}

// 4

Outcome multifidelity()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = context(desk("D-S1"));
    const auto& spec = ctx.spec;
    const auto active = tool_active_sizing(ctx, std::vector<double>{0.35, 0.35, 0.3}).front();
    const auto im = tool_impedance_matching(ctx, active, std::nullopt, std::nullopt, 1);
    const auto head = im.sim.gain_db;
    const Bounds b = stage3_bounds(spec, active);

    bool calls_ok = true;
    std::vector<double> mf_hf, sa_hf;
    std::string per_seed;
    for (std::uint64_t seed : kSeeds) {
        BandPlanningResult bp;
        try {
            bp = tool_band_planning(ctx, active, im.passive, head, std::nullopt, seed);
        } catch (const CalibrationFailed& e) {
            return {false, fmt::format("seed {}: {}", seed, e.what())};
        }
        calls_ok = calls_ok && bp.hf_calls <= 5 && bp.hf_ripple_db <= 3.0;
        const double mf_cost = band_cost(spec, bp.hf_gain_db);

        // Pure-HF SA from the planner's first starting point, stopped at the same final cost.
        SaConfig sa = ctx.stage3_sa;
        sa.seed = seed;
        const double f_lo = spec.f_low(), f_hi = spec.f_high();
        sa.stop.x0 = {0.4, f_lo + (f_hi - f_lo) / 3.0,       2.0, 0.5 * (b.lo[3] + kMaxTankCap),
                      0.4, f_lo + 2.0 * (f_hi - f_lo) / 3.0, 2.0, 0.5 * (b.lo[7] + kMaxTankCap)};
        sa.stop.target_cost = mf_cost;
        const auto h0 = hf::thread_count();
        const auto r = sa_minimize([&](const std::vector<double>& x) {
            return band_cost(spec, band_hifi(ctx, active, im.passive, x));
        }, b, sa);
        const auto used = hf::thread_count() - h0;
        mf_hf.push_back(bp.hf_calls);
        sa_hf.push_back(static_cast<double>(used));
        per_seed += fmt::format(" {}:{}/{}{}", seed, bp.hf_calls, used, r.best_cost <= mf_cost ? "" : "+");
    }
    const double dt = seconds_since(t0);
    const bool pass = calls_ok && mean(mf_hf) <= 0.5 * mean(sa_hf) && dt < 120.0;
    return {pass, fmt::format("mean HF calls {:.1f} calibrated vs {:.1f} pure-HF SA (seed:cal/SA{}), {:.1f} s",
                              mean(mf_hf), mean(sa_hf), per_seed, dt)};
}

// 5

Outcome end_to_end()
{
    BenchConfig cfg;
    std::string detail;
    bool pass = true;
    for (const std::string id : {"D-S1", "D-S4"}) {
        const auto spec = desk(id);
        int ok = 0;
        double slowest = 0;
        for (std::uint64_t seed : kSeeds) {
            const auto r = run_once(spec, Method::Agent, seed, cfg, fixtures::kb());
            slowest = std::max(slowest, r.time_s);
            if (!r.success || !r.design)
                continue;
            const auto re = fullchain_report(*r.design, spec, fixtures::kb(), spec.load);
            if (re.all_pass() && r.time_s < 60.0)
                ++ok;
        }
        pass = pass && ok == 5;
        detail += fmt::format("{} {}/5 (slowest {:.2f} s) ", id, ok, slowest);
    }
    return {pass, detail};
}

// 6

Outcome tool_advantage()
{
    BenchConfig cfg;
    const std::vector<DesignSpec> suite{desk("D-S5")};
    const auto agent = run_benchmark(suite, Method::Agent, kSeeds, cfg, fixtures::kb()).front();
    const auto ga = run_benchmark(suite, Method::GAVanilla, kSeeds, cfg, fixtures::kb()).front();
    const auto successful_mean = [](const BenchResult& r) {
        std::vector<double> v;
        for (const auto& run : r.runs)
            if (run.success)
                v.push_back(static_cast<double>(run.hf_evals));
        return v.empty() ? kInf : mean(v);
    };
    const auto all_mean = [](const BenchResult& r) {
        std::vector<double> v;
        for (const auto& run : r.runs)
            v.push_back(static_cast<double>(run.hf_evals));
        return mean(v);
    };
    const double a_hf = successful_mean(agent);
    const double g_hf = all_mean(ga);
    const bool pass = agent.pass_at_1 > 0.0 && a_hf < g_hf && ga.pass_at_1 <= agent.pass_at_1;
    return {pass, fmt::format("pipeline pass@1 {:.1f}, {:.0f} HF per success; GAVanilla pass@1 {:.1f}, {:.0f} HF per run "
                              "(budget {})",
                              agent.pass_at_1, a_hf, ga.pass_at_1, g_hf, cfg.hf_budget)};
}

// 7

Outcome self_evolution()
{
    const auto t0 = std::chrono::steady_clock::now();
    BenchConfig cfg;
    const auto ladder = parse_ladder("20:45:5");
    const auto root = fixtures::temp_dir("acceptance_evolution");
    const auto base = desk("D-S4");
    const auto cold = run_evolution(base, ladder, AgentMode::AutonomousSearch, kSeeds, cfg, fixtures::kb(), root / "cold");
    const auto warm = run_evolution(base, ladder, AgentMode::RetrieveAndRefine, kSeeds, cfg, fixtures::kb(), root / "warm");
    const double c_hf = cold.cumulative_hf().back();
    const double w_hf = warm.cumulative_hf().back();
    const auto cf = cold.mean_fom();
    const auto wf = warm.mean_fom();
    bool fom_ok = true;
    std::string steps;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        fom_ok = fom_ok && wf[i] >= 0.95 * cf[i];
        steps += fmt::format(" {:.0f}dB:{:.3g}/{:.3g}", ladder[i], wf[i], cf[i]);
    }
    const double dt = seconds_since(t0);
    return {w_hf <= 0.6 * c_hf && fom_ok && dt < 600.0,
            fmt::format("cumulative HF {:.0f} retrieve vs {:.0f} cold ({:.0f}%); FoM retrieve/cold{}; {:.1f} s", w_hf,
                        c_hf, 100.0 * w_hf / c_hf, steps, dt)};
}

// 8

Outcome agent_contracts()
{
    std::vector<std::string> failed;
    const auto expect = [&](bool ok, const std::string& what) {
        if (!ok)
            failed.push_back(what);
    };
    const auto ctx = context(desk("D-S4"));
    const ToolFn tools = [&](const ToolCall& c) { return dispatch(ctx, c); };
    ScriptedPolicy scripted(fixtures::kb());

    // Statelessness of both sub-agents.
    SearchInstruction ins;
    ins.power_ratios = {0.35, 0.35, 0.3};
    const auto s1 = searcher_run(ins, {}, ctx.spec, scripted, tools, LoopLimits{});
    const auto s2 = searcher_run(ins, {}, ctx.spec, scripted, tools, LoopLimits{});
    expect(!s1.candidates.empty(), "searcher produced no candidate");
    expect(s1.candidates == s2.candidates && s1.transcript == s2.transcript && s1.report == s2.report,
           "searcher not stateless");
    if (!s1.candidates.empty()) {
        const auto r1 = refiner_run(s1.candidates.front(), ctx.spec, 1, scripted, tools, LoopLimits{});
        const auto r2 = refiner_run(s1.candidates.front(), ctx.spec, 1, scripted, tools, LoopLimits{});
        expect(r1.design == r2.design && r1.transcript == r2.transcript && r1.agent_report == r2.agent_report,
               "refiner not stateless");
    }

    // Transcript round trip and replay.
    const auto back = json(s1.transcript).get<Transcript>();
    expect(back == s1.transcript, "transcript json round trip");
    for (std::size_t i = 0; i < back.turns.size(); ++i) {
        const auto t = scripted.next(back.frame, std::span<const PolicyTurn>(back.turns.data(), i));
        expect(t.action.has_value() == back.turns[i].action.has_value() &&
                   (!t.action || (t.action->tool == back.turns[i].action->tool &&
                                  t.action->args == back.turns[i].action->args)),
               fmt::format("replay differs at turn {}", i));
    }

    // Manager queue and budget.
    ManagerState st;
    expect(manager_step(st, ctx.spec, std::nullopt).action == ManagerAction::SearchCandidates,
           "empty queue should search");
    if (s1.candidates.size() >= 2) {
        const auto& a = s1.candidates[0];
        const auto& b = s1.candidates[1];
        st.enqueue(a, -3.0);
        st.enqueue(b, -0.1);
        expect(!st.enqueue(a, 0.0), "duplicate enqueue accepted");
        const auto d = manager_step(st, ctx.spec, std::nullopt);
        expect(d.action == ManagerAction::RefineCandidate && d.target == b.hash(), "head is not the best priority");
        AgentReport gone;
        gone.infeasible = true;
        gone.candidate_hash = b.hash();
        const auto d2 = manager_step(st, ctx.spec, gone);
        expect(st.queue.size() == 1 && d2.target == a.hash(), "infeasible candidate not evicted");
    }
    st.budget_remaining.hf_evals = 0;
    bool threw = false;
    try {
        manager_step(st, ctx.spec, std::nullopt);
    } catch (const BudgetExhausted&) {
        threw = true;
    }
    expect(threw, "spent budget not reported");

    OrchestratorConfig oc;
    oc.budget.hf_evals = 40;
    const auto h0 = hf::thread_count();
    const auto small = run_design(ctx, scripted, oc);
    expect(small.hf_evals <= 40 && hf::thread_count() - h0 == small.hf_evals, "HF budget exceeded or misreported");

    // Token accounting through a stub endpoint: one tool call, then terminate.
    httplib::Server server;
    int hits = 0;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        json msg = hits == 1
                       ? json{{"content", ""},
                              {"tool_calls",
                               {{{"function", {{"name", "ActiveSizing"},
                                               {"arguments", R"({"power_ratio_list": [0.35, 0.35, 0.3]})"}}}}}}}
                       : json{{"content", R"({"thought": "done", "action": "Terminate", "args": {"success": true}})"}};
        const json reply{{"choices", {{{"message", msg}}}},
                         {"usage", {{"prompt_tokens", 100 * hits}, {"completion_tokens", 10 * hits}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    EndpointConfig ec;
    ec.url = fmt::format("http://127.0.0.1:{}/v1/chat/completions", port);
    ec.timeout_s = 10;
    RemotePolicy remote(ec);
    const auto t = react_loop(remote, tools, TaskFrame{"searcher", {{"power_ratio_list", {0.35, 0.35, 0.3}}}},
                              LoopLimits{});
    server.stop();
    th.join();
    expect(t.report.tokens == TokenCount{300, 30}, "token sums");
    expect(t.report.tool_calls_made == 1 && t.report.success, "remote loop outcome");

    return {failed.empty(), failed.empty() ? "all agent properties hold"
                                           : fmt::format("failed: {}", fmt::join(failed, "; "))};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {1, "noise/match and gain/ripple costs are exact", cost_functions},
        {2, "coupled-resonator closed forms match nodal analysis", mcr_oracle},
        {3, "cascade matches the flattened nodal oracle; passive chains stay passive", evaluator_oracle},
        {4, "calibrated band planning needs at most half the HF evaluations of pure-HF SA", multifidelity},
        {5, "scripted pipeline passes D-S1 and D-S4 on every seed", end_to_end},
        {6, "tool pipeline beats flat GA on the wideband spec", tool_advantage},
        {7, "retrieval cuts cumulative HF evaluations over the gain ladder", self_evolution},
        {8, "agent contracts", agent_contracts},
    };

    bool ok = true;
    for (const auto& c : all) {
        if (only != 0 && c.id != only)
            continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw: {}", e.what())};
        }
        fmt::print("{} criterion {}: {} | {}\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail);
        std::fflush(stdout);
        ok = ok && o.pass;
    }
    return ok ? 0 : 1;
}
