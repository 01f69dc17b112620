// rfamp: command-line front end for design runs, benchmarks and memory queries.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rfamp/bench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfamp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConstraint = 2;

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw StorageError(fmt::format("{}: cannot open for writing", path.string()));
    out << text;
    if (!out)
        throw StorageError(fmt::format("{}: write failed", path.string()));
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw SchemaError(fmt::format("{}: cannot open", path.string()));
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw SchemaError(fmt::format("{}: not valid JSON", path.string()));
    return j;
}

BenchConfig load_config(const std::string& path)
{
    return path.empty() ? BenchConfig{} : BenchConfig::load(path);
}

std::unique_ptr<Policy> make_policy(const std::string& name, const DeviceKb& kb)
{
    if (name == "remote")
        return std::make_unique<RemotePolicy>(EndpointConfig::from_env());
    return std::make_unique<ScriptedPolicy>(kb);
}

std::vector<std::uint64_t> seed_list(int n)
{
    std::vector<std::uint64_t> s;
    for (int i = 1; i <= n; ++i)
        s.push_back(static_cast<std::uint64_t>(i));
    return s;
}

struct DesignArgs {
    std::string spec, id, mode = "search", policy = "scripted", out, memory, config;
    std::uint64_t seed = 1;
    std::int64_t budget_hf = 20000;
};

int cmd_design(const DesignArgs& a)
{
    const BenchConfig cfg = load_config(a.config);
    const DeviceKb kb(cfg.device_seed);
    ToolContext ctx;
    ctx.kb = &kb;
    ctx.spec = load_spec(a.spec, a.id);
    ctx.clock = [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
    OrchestratorConfig oc;
    oc.mode = agent_mode_from_string(a.mode);
    oc.seed = a.seed;
    oc.budget.hf_evals = a.budget_hf;
    oc.budget.wall_seconds = cfg.timeout_s;
    oc.max_turns = cfg.max_turns;
    oc.retrieve_k = cfg.retrieve_k;
    oc.run_id = fmt::format("design-{}-seed{}", ctx.spec.id.empty() ? "spec" : ctx.spec.id, a.seed);

    std::unique_ptr<MemoryStore> memory;
    if (!a.memory.empty())
        memory = std::make_unique<MemoryStore>(a.memory);
    else if (oc.mode == AgentMode::RetrieveAndRefine)
        throw SchemaError("--mode rar needs --memory DIR");

    const auto policy = make_policy(a.policy, kb);
    const DesignOutcome out = run_design(ctx, *policy, oc, memory.get());
    json doc{{"spec", ctx.spec},
             {"mode", a.mode},
             {"policy", policy->name()},
             {"seed", a.seed},
             {"success", out.success},
             {"hf_evals", out.hf_evals},
             {"tool_calls", out.tool_calls},
             {"tokens", out.tokens},
             {"power_split", out.power_split},
             {"failure_reasons", out.failure_reasons},
             {"history", out.history},
             {"transcripts", out.transcripts}};
    if (out.design)
        doc["design"] = *out.design;
    if (out.report) {
        doc["report"] = *out.report;
        doc["fom"] = fom(*out.report, ctx.spec);
    }
    if (!a.out.empty())
        write_json(a.out, doc);
    fmt::print("{}: {} after {} evaluations", ctx.spec.id.empty() ? "spec" : ctx.spec.id,
               out.success ? "all constraints met" : "no feasible design", out.hf_evals);
    if (out.report)
        fmt::print(", NF {:.2f} dB, IP1dB {:.1f} dBm", out.report->nf_db, out.report->ip1db_dbm);
    fmt::print("\n");
    for (const auto& r : out.failure_reasons)
        fmt::print("  {}\n", r);
    return out.success ? kExitOk : kExitConstraint;
}

struct BenchArgs {
    std::string suite, method = "Agent", out, config, policy = "scripted";
    std::vector<std::string> ids;
    int seeds = 5;
};

int cmd_bench(const BenchArgs& a)
{
    const BenchConfig cfg = load_config(a.config);
    const DeviceKb kb(cfg.device_seed);
    std::vector<DesignSpec> suite;
    for (const auto& s : load_suite(a.suite))
        if (a.ids.empty() || std::find(a.ids.begin(), a.ids.end(), s.id) != a.ids.end())
            suite.push_back(s);
    if (suite.empty())
        throw SchemaError("no spec of the suite matches --id");
    std::vector<Method> methods;
    if (a.method == "all")
        methods = all_methods();
    else
        methods.push_back(method_from_string(a.method));

    const auto seeds = seed_list(a.seeds);
    const auto policy = make_policy(a.policy, kb);
    std::vector<BenchResult> all;
    for (Method m : methods) {
        auto res = run_benchmark(suite, m, seeds, cfg, kb, policy.get());
        for (const auto& r : res)
            fmt::print("{:<6} {:<10} pass@1 {:.1f}  mean HF {:.0f}  mean time {:.2f} s\n", r.spec_id, to_string(m),
                       r.pass_at_1,
                       static_cast<double>(std::accumulate(r.hf_evals.begin(), r.hf_evals.end(), std::int64_t{0})) /
                           static_cast<double>(std::max<std::size_t>(1, r.hf_evals.size())),
                       r.avg_time_s);
        all.insert(all.end(), res.begin(), res.end());
    }
    write_json(fs::path(a.out) / "results.json", results_json(all, cfg));
    write_json(fs::path(a.out) / "timing.json", timing_json(all));
    return kExitOk;
}

struct EvolveArgs {
    std::string base, id, ladder = "20:45:5", mode = "both", out, config, memory;
    int seeds = 5;
};

int cmd_evolve(const EvolveArgs& a)
{
    const BenchConfig cfg = load_config(a.config);
    const DeviceKb kb(cfg.device_seed);
    const DesignSpec base = load_spec(a.base, a.id);
    const auto ladder = parse_ladder(a.ladder);
    const auto seeds = seed_list(a.seeds);
    const fs::path memory_root = a.memory.empty() ? fs::path(a.out) / "memory" : fs::path(a.memory);
    std::vector<AgentMode> modes;
    if (a.mode == "both")
        modes = {AgentMode::AutonomousSearch, AgentMode::RetrieveAndRefine};
    else
        modes = {agent_mode_from_string(a.mode)};

    std::vector<EvolutionTrace> traces;
    for (AgentMode m : modes) {
        traces.push_back(run_evolution(base, ladder, m, seeds, cfg, kb, memory_root));
        const auto cum = traces.back().cumulative_hf();
        const auto fm = traces.back().mean_fom();
        for (std::size_t i = 0; i < ladder.size(); ++i)
            fmt::print("{:<7} gain {:>4.1f} dB  cumulative HF {:>8.1f}  FoM {:.1f}\n", to_string(m), ladder[i], cum[i],
                       fm[i]);
    }
    write_json(fs::path(a.out) / "evolution.json", evolution_json(traces));
    write_json(fs::path(a.out) / "timing.json", evolution_timing_json(traces));
    return kExitOk;
}

int cmd_kb_query(const std::string& spec_path, const std::string& id, const std::string& memory, int k)
{
    const MemoryStore store(memory);
    const DesignSpec spec = load_spec(spec_path, id);
    json out = json::array();
    for (const auto& r : kb_query(store.kb, spec, k))
        out.push_back(json{{"id", r.id},
                           {"similarity", similarity(r.spec, spec)},
                           {"spec", r.spec},
                           {"candidate_hash", r.candidate_hash},
                           {"nf_db", number_json(r.report.nf_db)},
                           {"ip1db_dbm", number_json(r.report.ip1db_dbm)}});
    fmt::print("{}\n", out.dump(2));
    return kExitOk;
}

int cmd_plot(const std::string& in, const std::string& out)
{
    const json doc = read_json(in);
    const json& rep = doc.contains("report") ? doc.at("report") : doc;
    SimReport report;
    try {
        report = rep.get<SimReport>();
    } catch (const json::exception& e) {
        throw SchemaError(fmt::format("{}: {}", in, e.what()));
    }
    std::string title;
    if (doc.contains("spec") && doc.at("spec").is_object())
        title = doc.at("spec").value("id", std::string{});
    write_file(out, render_svg(report, title));
    return kExitOk;
}

int cmd_devgen(std::uint64_t seed, const std::string& out)
{
    const DeviceKb kb(seed);
    write_json(out, json{{"seed", seed},
                         {"cascode", kb.table(DeviceKind::CascodeSingleEnded)},
                         {"diff_cs", kb.table(DeviceKind::DiffCommonSource)}});
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"rfamp: multi-stage LNA sizing with tool-driven agents"};
    app.require_subcommand(1);

    std::uint64_t dev_seed = 7;
    std::string dev_out;
    auto* devgen = app.add_subcommand("devgen", "write the synthetic device tables");
    devgen->add_option("--seed", dev_seed, "table seed");
    devgen->add_option("--out", dev_out, "output JSON")->required();

    DesignArgs da;
    auto* design = app.add_subcommand("design", "design one spec");
    design->add_option("--spec", da.spec, "spec or suite JSON")->required()->check(CLI::ExistingFile);
    design->add_option("--id", da.id, "spec id inside a suite");
    design->add_option("--mode", da.mode, "search or rar")->check(CLI::IsMember({"search", "rar"}));
    design->add_option("--policy", da.policy, "scripted or remote")->check(CLI::IsMember({"scripted", "remote"}));
    design->add_option("--seed", da.seed, "run seed");
    design->add_option("--budget-hf", da.budget_hf, "high-fidelity evaluation budget")->check(CLI::NonNegativeNumber);
    design->add_option("--memory", da.memory, "KB/EB directory; read in rar mode, written on success");
    design->add_option("--config", da.config, "INI settings")->check(CLI::ExistingFile);
    design->add_option("--out", da.out, "report JSON");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "run a method over a suite");
    bench->add_option("--suite", ba.suite, "suite JSON")->required()->check(CLI::ExistingFile);
    bench->add_option("--method", ba.method, "Agent, GAVanilla, BOVanilla, GASubtool, BOSubtool, GAWtool, BOWtool or all");
    bench->add_option("--seeds", ba.seeds, "number of seeds (1..N)")->check(CLI::PositiveNumber);
    bench->add_option("--id", ba.ids, "restrict to these spec ids");
    bench->add_option("--policy", ba.policy, "agent policy")->check(CLI::IsMember({"scripted", "remote"}));
    bench->add_option("--config", ba.config, "INI settings")->check(CLI::ExistingFile);
    bench->add_option("--out", ba.out, "output directory")->required();

    EvolveArgs ea;
    auto* evolve = app.add_subcommand("evolve", "solve a gain ladder cold and with retrieval");
    evolve->add_option("--base", ea.base, "base spec JSON")->required()->check(CLI::ExistingFile);
    evolve->add_option("--id", ea.id, "spec id inside a suite");
    evolve->add_option("--ladder", ea.ladder, "lo:hi:step in dB");
    evolve->add_option("--mode", ea.mode, "search, rar or both")->check(CLI::IsMember({"search", "rar", "both"}));
    evolve->add_option("--seeds", ea.seeds, "number of seeds (1..N)")->check(CLI::PositiveNumber);
    evolve->add_option("--memory", ea.memory, "memory root (default OUT/memory)");
    evolve->add_option("--config", ea.config, "INI settings")->check(CLI::ExistingFile);
    evolve->add_option("--out", ea.out, "output directory")->required();

    std::string kb_spec, kb_id, kb_memory = "memory";
    int kb_k = 3;
    auto* kb = app.add_subcommand("kb", "knowledge-base tools");
    kb->require_subcommand(1);
    auto* query = kb->add_subcommand("query", "most similar stored designs");
    query->add_option("--spec", kb_spec, "spec JSON")->required()->check(CLI::ExistingFile);
    query->add_option("--id", kb_id, "spec id inside a suite");
    query->add_option("-k", kb_k, "number of records")->check(CLI::PositiveNumber);
    query->add_option("--memory", kb_memory, "KB/EB directory");

    std::string plot_in, plot_out;
    auto* report = app.add_subcommand("report", "report tools");
    report->require_subcommand(1);
    auto* plot = report->add_subcommand("plot", "gain, S11 and NF curves as SVG");
    plot->add_option("--in", plot_in, "design report or SimReport JSON")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", plot_out, "SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*devgen)
            return cmd_devgen(dev_seed, dev_out);
        if (*design)
            return cmd_design(da);
        if (*bench)
            return cmd_bench(ba);
        if (*evolve)
            return cmd_evolve(ea);
        if (*query)
            return cmd_kb_query(kb_spec, kb_id, kb_memory, kb_k);
        if (*plot)
            return cmd_plot(plot_in, plot_out);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitError;
    }
    return kExitError;
}
