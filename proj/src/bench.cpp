#include "rfamp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace rfamp {

using nlohmann::json;

namespace {

const std::pair<Method, const char*> kMethodNames[] = {
    {Method::Agent, "Agent"},           {Method::GAVanilla, "GAVanilla"}, {Method::BOVanilla, "BOVanilla"},
    {Method::GASubtool, "GASubtool"},   {Method::BOSubtool, "BOSubtool"}, {Method::GAWtool, "GAWtool"},
    {Method::BOWtool, "BOWtool"},
};

double steady_seconds()
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

} // namespace

std::string to_string(Method m)
{
    for (const auto& [k, name] : kMethodNames)
        if (k == m)
            return name;
    return "?";
}

Method method_from_string(const std::string& s)
{
    for (const auto& [k, name] : kMethodNames)
        if (s == name)
            return k;
    throw SchemaError(fmt::format("unknown method \"{}\"", s));
}

const std::vector<Method>& all_methods()
{
    static const std::vector<Method> m{Method::Agent,     Method::GAVanilla, Method::BOVanilla, Method::GASubtool,
                                       Method::BOSubtool, Method::GAWtool,   Method::BOWtool};
    return m;
}

// Config

BenchConfig BenchConfig::load(const std::filesystem::path& ini)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(ini.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw SchemaError(fmt::format("{}: {}", ini.string(), e.what()));
    }
    BenchConfig c;
    const auto get = [&](const char* key, auto& field) {
        using T = std::decay_t<decltype(field)>;
        try {
            if (tree.get_optional<std::string>(key))
                field = tree.get<T>(key);
        } catch (const pt::ptree_bad_data&) {
            throw SchemaError(fmt::format("{}: {} has an invalid value", ini.string(), key));
        }
    };
    get("run.hf_budget", c.hf_budget);
    get("run.timeout_s", c.timeout_s);
    get("run.device_seed", c.device_seed);
    get("run.jobs", c.jobs);
    get("agent.max_turns", c.max_turns);
    get("agent.retrieve_k", c.retrieve_k);
    get("ga.population", c.ga_population);
    get("ga.crossover", c.ga_crossover);
    get("ga.mutation", c.ga_mutation);
    get("ga.sigma", c.ga_sigma);
    get("bo.evals", c.bo_evals);
    get("bo.initial", c.bo_initial);
    get("bo.candidates", c.bo_candidates);
    if (const auto split = tree.get_optional<std::string>("run.baseline_split")) {
        std::vector<double> v;
        std::stringstream ss(*split);
        for (std::string tok; std::getline(ss, tok, ',');) {
            try {
                v.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw SchemaError(fmt::format("{}: run.baseline_split has an invalid entry \"{}\"", ini.string(), tok));
            }
        }
        if (v.size() != 3)
            throw SchemaError(fmt::format("{}: run.baseline_split needs three ratios", ini.string()));
        c.baseline_split = v;
    }
    if (c.hf_budget < 0 || c.timeout_s < 0 || c.jobs < 1 || c.ga_population < 2 || c.bo_evals < 0)
        throw SchemaError(fmt::format("{}: budget values out of range", ini.string()));
    return c;
}

json to_json(const BenchConfig& c)
{
    return json{{"hf_budget", c.hf_budget},         {"timeout_s", c.timeout_s},
                {"device_seed", c.device_seed},     {"max_turns", c.max_turns},
                {"retrieve_k", c.retrieve_k},       {"baseline_split", c.baseline_split},
                {"ga_population", c.ga_population}, {"ga_crossover", c.ga_crossover},
                {"ga_mutation", c.ga_mutation},     {"ga_sigma", c.ga_sigma},
                {"bo_evals", c.bo_evals},           {"bo_initial", c.bo_initial},
                {"bo_candidates", c.bo_candidates}};
}

// Suites

std::vector<DesignSpec> load_suite(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw SchemaError(fmt::format("{}: cannot open", path.string()));
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw SchemaError(fmt::format("{}: not valid JSON", path.string()));
    const json* specs = &doc;
    if (doc.is_object()) {
        if (!doc.contains("specs"))
            throw SchemaError(fmt::format("{}: specs: missing required field", path.string()));
        specs = &doc.at("specs");
    }
    if (!specs->is_array() || specs->empty())
        throw SchemaError(fmt::format("{}: specs: expected a non-empty array", path.string()));
    std::vector<DesignSpec> out;
    for (std::size_t i = 0; i < specs->size(); ++i) {
        try {
            out.push_back((*specs)[i].get<DesignSpec>());
        } catch (const SchemaError& e) {
            throw SchemaError(fmt::format("{}: specs[{}].{}", path.string(), i, e.what()));
        } catch (const json::exception& e) {
            throw SchemaError(fmt::format("{}: specs[{}]: {}", path.string(), i, e.what()));
        }
        if (out.back().id.empty())
            out.back().id = fmt::format("spec{}", i + 1);
    }
    return out;
}

DesignSpec load_spec(const std::filesystem::path& path, const std::string& id)
{
    std::ifstream in(path);
    if (!in)
        throw SchemaError(fmt::format("{}: cannot open", path.string()));
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw SchemaError(fmt::format("{}: not valid JSON", path.string()));
    if (doc.is_object() && !doc.contains("specs") && id.empty()) {
        try {
            return doc.get<DesignSpec>();
        } catch (const json::exception& e) {
            throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
        }
    }
    const auto suite = load_suite(path);
    if (id.empty()) {
        if (suite.size() == 1)
            return suite.front();
        throw SchemaError(fmt::format("{}: holds {} specs; pick one by id", path.string(), suite.size()));
    }
    for (const auto& s : suite)
        if (s.id == id)
            return s;
    throw SchemaError(fmt::format("{}: no spec with id \"{}\"", path.string(), id));
}

// FoM

double fom(double gain_db, double bw_ghz, double nf_db, double p_mw)
{
    return std::pow(10.0, gain_db / 10.0) * bw_ghz / ((std::pow(10.0, nf_db / 10.0) - 1.0) * p_mw);
}

double fom(const SimReport& report, const DesignSpec& spec)
{
    const auto mask = in_band_mask(spec, report.freq_grid);
    double g = kInf;
    for (std::size_t i = 0; i < mask.size() && i < report.gain_db.size(); ++i)
        if (mask[i])
            g = std::min(g, report.gain_db[i]);
    return fom(g, spec.bandwidth_ghz(), report.nf_db, report.dc_current_ma);
}

// Flat search spaces

Bounds vanilla_bounds(const DesignSpec& spec, const ActiveConfig& active)
{
    Bounds b = subtool_bounds(spec, active);
    b.lo.insert(b.lo.end(), {10.0, 0.0});
    b.hi.insert(b.hi.end(), {2000.0, 2000.0});
    b.units.insert(b.units.end(), {"pH", "pH"});
    return b;
}

Bounds subtool_bounds(const DesignSpec& spec, const ActiveConfig& active)
{
    Bounds b = stage2_bounds();
    const Bounds s3 = stage3_bounds(spec, active);
    b.lo.insert(b.lo.end(), s3.lo.begin(), s3.lo.end());
    b.hi.insert(b.hi.end(), s3.hi.begin(), s3.hi.end());
    b.units.insert(b.units.end(), s3.units.begin(), s3.units.end());
    return b;
}

// split of the first two stages, third-stage share, configuration, stage-2 gain floor, NF headroom
Bounds wtool_bounds()
{
    return Bounds{{0.3, 0.15, 0.0, 5.0, 0.05}, {0.7, 0.45, 1.999, 20.0, 1.0}, {"", "", "", "dB", "dB"}};
}

namespace {

constexpr double kPenalty = 1e6;

/// Best-so-far tracking plus the HF and wall-clock caps of one run.
class BudgetGuard {
public:
    BudgetGuard(std::int64_t hf_cap, double timeout_s)
        : hf0_(hf::thread_count()), t0_(steady_seconds()), cap_(hf_cap), timeout_(timeout_s)
    {
    }

    void check()
    {
        if (used() >= cap_)
            throw BudgetExhausted("evaluation budget exhausted");
        if (steady_seconds() - t0_ > timeout_) {
            timed_out = true;
            throw BudgetExhausted("timeout");
        }
    }

    double offer(const SimReport& r, const CandidateDesign& d)
    {
        double c = r.error.empty() ? r.total_violation() : kPenalty;
        if (!std::isfinite(c))
            c = kPenalty;
        c = std::min(c, kPenalty);
        if (!best || c < best_cost) {
            best_cost = c;
            best = r;
            best_design = d;
        }
        return c;
    }

    std::int64_t used() const { return hf::thread_count() - hf0_; }

    std::optional<SimReport> best;
    std::optional<CandidateDesign> best_design;
    double best_cost = kInf;
    bool timed_out = false;

private:
    std::int64_t hf0_;
    double t0_;
    std::int64_t cap_;
    double timeout_;
};

ToolContext make_context(const DesignSpec& spec, const DeviceKb& kb)
{
    ToolContext ctx;
    ctx.kb = &kb;
    ctx.spec = spec;
    ctx.clock = steady_seconds;
    return ctx;
}

std::array<MCRPhysical, 2> realize_planned(const DesignSpec& spec, const ActiveConfig& active,
                                           std::span<const double> x)
{
    return {to_physical(MCRParams{x[0], ghz_to_omega(x[1]), x[2], x[3]}, absorbed_loading(active, spec.load, 1)),
            to_physical(MCRParams{x[4], ghz_to_omega(x[5]), x[6], x[7]}, absorbed_loading(active, spec.load, 2))};
}

// One flat-space point: x = stage-2 (8), planned MCRs (8), then l_par and l_g unless the
// L-match is synthesized. Every point costs one evaluation, two with the synthesis.
double flat_cost(const ToolContext& ctx, const ActiveConfig& active, const std::vector<double>& x, bool synthesize,
                 BudgetGuard& guard)
{
    guard.check();
    Stage2Passive s2;
    s2.mcr1 = MCRPhysical{x[0], x[1], x[2], x[3], x[4], x[5], x[6]};
    s2.l_s = x[7];
    CandidateDesign cand;
    try {
        if (synthesize) {
            hf::record();
            const Chain bare = critical_chain(active.stages.at(0), active.stages.at(1), s2.mcr1, s2.l_s, std::nullopt);
            std::tie(s2.l_par, s2.l_g) = l_match(input_impedance(bare, ghz_to_omega(ctx.spec.fc)), ctx.spec.fc);
        } else {
            s2.l_par = x[16];
            s2.l_g = x[17];
        }
        cand = compose_candidate(active, s2, realize_planned(ctx.spec, active, std::span(x).subspan(8, 8)));
    } catch (const BudgetExhausted&) {
        throw;
    } catch (const Error&) {
        hf::record();  // the point still occupies one simulator slot
        return kPenalty;
    }
    return guard.offer(fullchain_report(cand, ctx.spec, *ctx.kb, ctx.spec.load), cand);
}

// One pass of the tool pipeline with optimizer-chosen resources.
double wtool_cost(const ToolContext& ctx, const std::vector<double>& x, std::uint64_t seed, BudgetGuard& guard)
{
    guard.check();
    const double r3 = x[1];
    const std::vector<double> ratios{(1.0 - r3) * x[0], (1.0 - r3) * (1.0 - x[0]), r3};
    try {
        const auto configs = tool_active_sizing(ctx, ratios);
        const auto& active = configs.at(std::min<std::size_t>(static_cast<std::size_t>(x[2]), configs.size() - 1));
        const auto im = tool_impedance_matching(ctx, active, x[4], x[3], mix_seed(seed, 1));
        if (im.sim.gain_db.size() != static_cast<std::size_t>(kBandGridPoints))
            return kPenalty;
        const auto bp = tool_band_planning(ctx, active, im.passive, im.sim.gain_db, std::nullopt, mix_seed(seed, 2));
        const CandidateDesign cand = compose_candidate(active, im.passive, bp.physical);
        return guard.offer(fullchain_report(cand, ctx.spec, *ctx.kb, ctx.spec.load), cand);
    } catch (const BudgetExhausted&) {
        throw;
    } catch (const Error&) {
        return kPenalty;
    }
}

RunRecord run_agent(const ToolContext& ctx, std::uint64_t seed, const BenchConfig& cfg, Policy& policy)
{
    OrchestratorConfig oc;
    oc.seed = seed;
    oc.budget.hf_evals = cfg.hf_budget;
    oc.budget.wall_seconds = cfg.timeout_s;
    oc.max_turns = cfg.max_turns;
    oc.retrieve_k = cfg.retrieve_k;
    const DesignOutcome out = run_design(ctx, policy, oc);
    RunRecord r;
    r.success = out.success && out.report && out.report->all_pass();
    r.tokens = out.tokens;
    r.design = out.design;
    r.report = out.report;
    r.failure_reasons = out.failure_reasons;
    r.timed_out = out.elapsed_s > cfg.timeout_s;
    return r;
}

RunRecord run_flat(const ToolContext& ctx, Method method, std::uint64_t seed, const BenchConfig& cfg)
{
    const bool wtool = method == Method::GAWtool || method == Method::BOWtool;
    const bool synthesize = method == Method::GASubtool || method == Method::BOSubtool;
    const bool ga = method == Method::GAVanilla || method == Method::GASubtool || method == Method::GAWtool;
    RunRecord r;
    BudgetGuard guard(cfg.hf_budget, cfg.timeout_s);

    CostFn cost;
    Bounds bounds;
    std::optional<ActiveConfig> active;
    std::uint64_t calls = 0;
    try {
        if (wtool) {
            bounds = wtool_bounds();
            cost = [&](const std::vector<double>& x) { return wtool_cost(ctx, x, mix_seed(seed, ++calls), guard); };
        } else {
            active = tool_active_sizing(ctx, cfg.baseline_split).front();
            bounds = synthesize ? subtool_bounds(ctx.spec, *active) : vanilla_bounds(ctx.spec, *active);
            cost = [&](const std::vector<double>& x) { return flat_cost(ctx, *active, x, synthesize, guard); };
        }
    } catch (const Error& e) {
        r.failure_reasons.push_back(e.what());
        return r;
    }

    try {
        if (ga) {
            GaConfig g;
            g.population = cfg.ga_population;
            g.generations = 1'000'000;
            g.crossover = cfg.ga_crossover;
            g.mutation = cfg.ga_mutation;
            g.sigma = cfg.ga_sigma;
            g.max_evals = cfg.hf_budget;
            g.seed = seed;
            g.stop.target_cost = 0.0;
            ga_minimize(cost, bounds, g);
            r.failure_reasons.push_back("optimizer finished without a feasible point");
        } else {
            BoConfig b;
            b.evals = cfg.bo_evals;
            b.initial = cfg.bo_initial;
            b.candidates = cfg.bo_candidates;
            b.seed = seed;
            b.stop.target_cost = 0.0;
            bo_minimize(cost, bounds, b);
            r.failure_reasons.push_back("optimizer finished without a feasible point");
        }
    } catch (const BudgetExhausted& e) {
        r.failure_reasons.push_back(e.what());
    }
    if (guard.best_cost == 0.0)
        r.failure_reasons.clear();
    r.timed_out = guard.timed_out;
    r.report = guard.best;
    r.design = guard.best_design;
    r.success = guard.best && guard.best->all_pass();
    return r;
}

} // namespace

RunRecord run_once(const DesignSpec& spec, Method method, std::uint64_t seed, const BenchConfig& cfg,
                   const DeviceKb& kb, Policy* policy)
{
    const ToolContext ctx = make_context(spec, kb);
    const std::int64_t hf0 = hf::thread_count();
    const hf::ScopedLimit hf_cap(cfg.hf_budget);
    const double t0 = steady_seconds();
    RunRecord r;
    if (method == Method::Agent) {
        ScriptedPolicy scripted(kb);
        r = run_agent(ctx, seed, cfg, policy ? *policy : scripted);
    } else {
        r = run_flat(ctx, method, seed, cfg);
    }
    r.seed = seed;
    r.hf_evals = hf::thread_count() - hf0;
    r.time_s = steady_seconds() - t0;
    if (r.hf_evals > cfg.hf_budget) {
        r.invalid = true;
        r.success = false;
        r.failure_reasons.push_back(fmt::format("spent {} evaluations over a budget of {}", r.hf_evals, cfg.hf_budget));
    }
    if (r.timed_out) {
        r.success = false;
        if (std::find(r.failure_reasons.begin(), r.failure_reasons.end(), "timeout") == r.failure_reasons.end())
            r.failure_reasons.push_back("timeout");
    }
    if (r.success && r.report)
        r.fom = fom(*r.report, spec);
    return r;
}

std::vector<BenchResult> run_benchmark(std::span<const DesignSpec> suite, Method method,
                                       std::span<const std::uint64_t> seeds, const BenchConfig& cfg,
                                       const DeviceKb& kb, Policy* policy)
{
    std::vector<BenchResult> results;
    for (const DesignSpec& spec : suite) {
        BenchResult br;
        br.spec_id = spec.id;
        br.method = method;
        br.seeds.assign(seeds.begin(), seeds.end());
        br.runs.resize(seeds.size());
        for (std::size_t i = 0; i < seeds.size(); i += static_cast<std::size_t>(cfg.jobs)) {
            std::vector<std::future<RunRecord>> batch;
            const std::size_t end = std::min(seeds.size(), i + static_cast<std::size_t>(cfg.jobs));
            for (std::size_t j = i; j < end; ++j)
                batch.push_back(std::async(cfg.jobs > 1 ? std::launch::async : std::launch::deferred,
                                           [&, j] { return run_once(spec, method, seeds[j], cfg, kb, policy); }));
            for (std::size_t j = i; j < end; ++j)
                br.runs[j] = batch[j - i].get();
        }
        const double n = std::max<double>(1.0, static_cast<double>(seeds.size()));
        std::vector<double> foms;
        for (const auto& r : br.runs) {
            br.pass_at_1 += r.success ? 1.0 / n : 0.0;
            br.avg_time_s += r.time_s / n;
            br.avg_prompt_tokens += static_cast<double>(r.tokens.prompt) / n;
            br.avg_completion_tokens += static_cast<double>(r.tokens.completion) / n;
            br.hf_evals.push_back(r.hf_evals);
            foms.push_back(r.fom.value_or(0.0));
        }
        const auto successes = std::count_if(br.runs.begin(), br.runs.end(), [](const auto& r) { return r.success; });
        br.pass_at_1 = static_cast<double>(successes) / n;
        br.fom_history = foms;
        results.push_back(std::move(br));
    }
    return results;
}

// Evolution

std::vector<double> parse_ladder(const std::string& s)
{
    std::vector<double> parts;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ':');) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(tok, &used));
            if (used != tok.size())
                throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw SchemaError(fmt::format("ladder \"{}\": \"{}\" is not a number", s, tok));
        }
    }
    if (parts.size() == 1)
        return parts;
    if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0])
        throw SchemaError(fmt::format("ladder \"{}\": expected lo:hi:step with step > 0", s));
    std::vector<double> out;
    for (int i = 0;; ++i) {
        const double g = parts[0] + i * parts[2];
        if (g > parts[1] + 1e-9)
            break;
        out.push_back(g);
    }
    return out;
}

std::vector<double> EvolutionTrace::cumulative_hf() const
{
    std::vector<double> out;
    double acc = 0;
    for (const auto& t : tasks) {
        acc += t.hf_evals.empty() ? 0.0
                                  : static_cast<double>(std::accumulate(t.hf_evals.begin(), t.hf_evals.end(),
                                                                        std::int64_t{0})) /
                                        static_cast<double>(t.hf_evals.size());
        out.push_back(acc);
    }
    return out;
}

std::vector<double> EvolutionTrace::mean_fom() const
{
    std::vector<double> out;
    for (const auto& t : tasks)
        out.push_back(t.fom.empty() ? 0.0
                                    : std::accumulate(t.fom.begin(), t.fom.end(), 0.0) / static_cast<double>(t.fom.size()));
    return out;
}

EvolutionTrace run_evolution(const DesignSpec& base, std::span<const double> gain_ladder, AgentMode mode,
                             std::span<const std::uint64_t> seeds, const BenchConfig& cfg, const DeviceKb& kb,
                             const std::filesystem::path& memory_root, Policy* policy)
{
    EvolutionTrace trace;
    trace.mode = mode;
    trace.seeds.assign(seeds.begin(), seeds.end());
    for (double g : gain_ladder)
        trace.tasks.push_back(EvolutionTask{g, {}, {}, {}, {}});

    ScriptedPolicy scripted(kb);
    Policy& pol = policy ? *policy : scripted;
    for (std::uint64_t seed : seeds) {
        const auto dir = memory_root / to_string(mode) / fmt::format("seed_{}", seed);
        std::filesystem::remove_all(dir);
        MemoryStore memory(dir);
        for (std::size_t i = 0; i < gain_ladder.size(); ++i) {
            DesignSpec spec = base;
            spec.gain = gain_ladder[i];
            spec.id = fmt::format("{}-g{}", base.id.empty() ? "task" : base.id, gain_ladder[i]);
            const ToolContext ctx = make_context(spec, kb);
            OrchestratorConfig oc;
            oc.mode = mode;
            oc.seed = seed;
            oc.budget.hf_evals = cfg.hf_budget;
            oc.budget.wall_seconds = cfg.timeout_s;
            oc.max_turns = cfg.max_turns;
            oc.retrieve_k = cfg.retrieve_k;
            oc.run_id = fmt::format("{}-seed{}-task{}", to_string(mode), seed, i);
            const DesignOutcome out = run_design(ctx, pol, oc, &memory);
            const bool ok = out.success && out.report && out.report->all_pass();
            EvolutionTask& t = trace.tasks[i];
            t.hf_evals.push_back(out.hf_evals);
            t.success.push_back(ok);
            t.fom.push_back(ok ? fom(*out.report, spec) : 0.0);
            t.time_s.push_back(out.elapsed_s);
        }
    }
    return trace;
}

// Result documents

json results_json(std::span<const BenchResult> results, const BenchConfig& cfg)
{
    json list = json::array();
    for (const auto& br : results) {
        json runs = json::array();
        for (const auto& r : br.runs) {
            json jr{{"seed", r.seed},
                    {"success", r.success},
                    {"timed_out", r.timed_out},
                    {"invalid", r.invalid},
                    {"hf_evals", r.hf_evals},
                    {"tokens", r.tokens},
                    {"failure_reasons", r.failure_reasons}};
            jr["fom"] = r.fom ? json(*r.fom) : json(nullptr);
            if (r.design) {
                jr["design"] = *r.design;
                jr["design"]["meta"].erase("timestamp");  // wall clock, kept in the run transcript only
            }
            if (r.report) {
                json rep = *r.report;
                jr["report"] = json{{"nf_db", rep.at("nf_db")},
                                    {"ip1db_dbm", rep.at("ip1db_dbm")},
                                    {"gain_db", rep.at("gain_db")},
                                    {"s11_db", rep.at("s11_db")},
                                    {"violations", rep.at("violations")}};
            }
            runs.push_back(std::move(jr));
        }
        list.push_back(json{{"spec_id", br.spec_id},
                            {"method", to_string(br.method)},
                            {"seeds", br.seeds},
                            {"pass_at_1", br.pass_at_1},
                            {"avg_prompt_tokens", br.avg_prompt_tokens},
                            {"avg_completion_tokens", br.avg_completion_tokens},
                            {"hf_evals", br.hf_evals},
                            {"fom_history", br.fom_history ? json(*br.fom_history) : json(nullptr)},
                            {"runs", runs}});
    }
    return json{{"config", to_json(cfg)}, {"results", list}};
}

json timing_json(std::span<const BenchResult> results)
{
    json list = json::array();
    for (const auto& br : results) {
        std::vector<double> t;
        for (const auto& r : br.runs)
            t.push_back(r.time_s);
        list.push_back(json{{"spec_id", br.spec_id}, {"method", to_string(br.method)}, {"avg_time_s", br.avg_time_s},
                            {"time_s", t}});
    }
    return json{{"timing", list}};
}

json evolution_json(std::span<const EvolutionTrace> traces)
{
    json list = json::array();
    for (const auto& tr : traces) {
        json tasks = json::array();
        for (const auto& t : tr.tasks)
            tasks.push_back(json{{"gain", t.gain}, {"hf_evals", t.hf_evals}, {"success", t.success}, {"fom", t.fom}});
        list.push_back(json{{"mode", to_string(tr.mode)},
                            {"seeds", tr.seeds},
                            {"tasks", tasks},
                            {"cumulative_hf", tr.cumulative_hf()},
                            {"mean_fom", tr.mean_fom()}});
    }
    return json{{"traces", list}};
}

json evolution_timing_json(std::span<const EvolutionTrace> traces)
{
    json list = json::array();
    for (const auto& tr : traces) {
        json tasks = json::array();
        for (const auto& t : tr.tasks)
            tasks.push_back(json{{"gain", t.gain}, {"time_s", t.time_s}});
        list.push_back(json{{"mode", to_string(tr.mode)}, {"tasks", tasks}});
    }
    return json{{"timing", list}};
}

// Plot

std::string render_svg(const SimReport& report, const std::string& title)
{
    constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
    const auto& f = report.freq_grid;
    if (f.size() < 2)
        throw SchemaError("report: freq_grid needs at least two points");
    struct Curve {
        const char* name;
        const char* color;
        const std::vector<double>* y;
    };
    const Curve curves[] = {{"gain (dB)", "#1f77b4", &report.gain_db},
                            {"S11 (dB)", "#d62728", &report.s11_db},
                            {"NF (dB)", "#2ca02c", &report.nf_curve_db}};
    double lo = kInf, hi = -kInf;
    for (const auto& c : curves) {
        if (c.y->size() != f.size())
            throw SchemaError(fmt::format("report: {} has {} points, freq_grid has {}", c.name, c.y->size(), f.size()));
        for (double v : *c.y)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    lo = 5.0 * std::floor(lo / 5.0);
    hi = 5.0 * std::ceil(hi / 5.0);
    const double f0 = f.front(), f1 = f.back();
    const auto px = [&](double x) { return kLeft + (x - f0) / (f1 - f0) * (kW - kLeft - kRight); };
    const auto py = [&](double y) { return kTop + (hi - std::clamp(y, lo, hi)) / (hi - lo) * (kH - kTop - kBottom); };

    std::string s = fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
                                "font-family=\"sans-serif\" font-size=\"12\">\n",
                                kW, kH);
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", kLeft,
                     kTop, kW - kLeft - kRight, kH - kTop - kBottom);
    if (!title.empty())
        s += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n", kW / 2, title);
    for (double y = lo; y <= hi + 1e-9; y += (hi - lo) / 5.0)
        s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.0f}</text>\n", kLeft - 6, py(y) + 4, y);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"start\">{:.1f}</text>\n", kLeft, kH - kBottom + 16, f0);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.1f}</text>\n", kW - kRight, kH - kBottom + 16, f1);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">frequency (GHz)</text>\n", kW / 2, kH - 12);
    double legend_x = kLeft + 10;
    for (const auto& c : curves) {
        std::string pts;
        for (std::size_t i = 0; i < f.size(); ++i)
            if (std::isfinite((*c.y)[i]))
                pts += fmt::format("{}{:.2f},{:.2f}", pts.empty() ? "" : " ", px(f[i]), py((*c.y)[i]));
        s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", c.color, pts);
        s += fmt::format("<text x=\"{:.0f}\" y=\"{}\" fill=\"{}\">{}</text>\n", legend_x, kTop - 6, c.color, c.name);
        legend_x += 110;
    }
    s += "</svg>\n";
    return s;
}

} // namespace rfamp
