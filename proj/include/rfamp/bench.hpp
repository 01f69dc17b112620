#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/agents.hpp"

namespace rfamp {

enum class Method { Agent, GAVanilla, BOVanilla, GASubtool, BOSubtool, GAWtool, BOWtool };
std::string to_string(Method m);
Method method_from_string(const std::string& s);
const std::vector<Method>& all_methods();

/// Harness settings, shared by every method of one run so budgets stay equal.
struct BenchConfig {
    std::int64_t hf_budget = 5000;  // per run
    double timeout_s = 60;          // per run
    std::uint64_t device_seed = 7;
    int jobs = 1;                   // seeds evaluated concurrently

    // agent
    int max_turns = 40;
    int retrieve_k = 3;

    // flat baselines
    std::vector<double> baseline_split{0.35, 0.35, 0.3};
    int ga_population = 30;
    double ga_crossover = 0.8;
    double ga_mutation = 0.1;
    double ga_sigma = 0.05;
    int bo_evals = 150;
    int bo_initial = 20;
    int bo_candidates = 256;

    /// INI file with [run], [agent], [ga] and [bo] sections; missing keys keep their defaults.
    static BenchConfig load(const std::filesystem::path& ini);
};

/// Specs of a suite file: {"specs": [...]} or a bare array. Schema errors name the field path.
std::vector<DesignSpec> load_suite(const std::filesystem::path& path);

/// One design spec from a file holding either a spec object or a suite (then `id` selects).
DesignSpec load_spec(const std::filesystem::path& path, const std::string& id = {});

/// G_lin · BW_GHz / ((F_lin − 1) · P_mW), with P taken at a 1 V supply.
double fom(double gain_db, double bw_ghz, double nf_db, double p_mw);
/// Uses the lowest in-band gain of the report.
double fom(const SimReport& report, const DesignSpec& spec);

struct RunRecord {
    std::uint64_t seed = 0;
    bool success = false;
    bool timed_out = false;
    bool invalid = false;  // spent more than the HF budget
    std::int64_t hf_evals = 0;
    double time_s = 0;
    TokenCount tokens;
    std::optional<double> fom;
    std::optional<CandidateDesign> design;
    std::optional<SimReport> report;
    std::vector<std::string> failure_reasons;
};

struct BenchResult {
    std::string spec_id;
    Method method = Method::Agent;
    std::vector<std::uint64_t> seeds;
    double pass_at_1 = 0;
    double avg_time_s = 0;
    double avg_prompt_tokens = 0;
    double avg_completion_tokens = 0;
    std::vector<std::int64_t> hf_evals;
    std::optional<std::vector<double>> fom_history;
    std::vector<RunRecord> runs;
};

/// One seeded run. A null policy means the scripted one. Timeouts are recorded as failures.
RunRecord run_once(const DesignSpec& spec, Method method, std::uint64_t seed, const BenchConfig& cfg,
                   const DeviceKb& kb, Policy* policy = nullptr);

std::vector<BenchResult> run_benchmark(std::span<const DesignSpec> suite, Method method,
                                       std::span<const std::uint64_t> seeds, const BenchConfig& cfg,
                                       const DeviceKb& kb, Policy* policy = nullptr);

/// Dimensions of the flat search spaces.
Bounds vanilla_bounds(const DesignSpec& spec, const ActiveConfig& active);  // 18
Bounds subtool_bounds(const DesignSpec& spec, const ActiveConfig& active);  // 16
Bounds wtool_bounds();                                                      // 5

/// "lo:hi:step", both ends included.
std::vector<double> parse_ladder(const std::string& s);

struct EvolutionTask {
    double gain = 0;
    std::vector<std::int64_t> hf_evals;  // per seed
    std::vector<bool> success;
    std::vector<double> fom;             // 0 for a failed task
    std::vector<double> time_s;
};

struct EvolutionTrace {
    AgentMode mode = AgentMode::AutonomousSearch;
    std::vector<std::uint64_t> seeds;
    std::vector<EvolutionTask> tasks;

    /// Seed-averaged HF evaluations summed over tasks [0, i].
    std::vector<double> cumulative_hf() const;
    std::vector<double> mean_fom() const;
};

/// Solves the ladder in order, one private memory directory per seed under memory_root
/// (cleared first). A failed task is recorded and the ladder continues.
EvolutionTrace run_evolution(const DesignSpec& base, std::span<const double> gain_ladder, AgentMode mode,
                             std::span<const std::uint64_t> seeds, const BenchConfig& cfg, const DeviceKb& kb,
                             const std::filesystem::path& memory_root, Policy* policy = nullptr);

/// Result files carry no wall-clock values; those go to the timing document.
nlohmann::json results_json(std::span<const BenchResult> results, const BenchConfig& cfg);
nlohmann::json timing_json(std::span<const BenchResult> results);
nlohmann::json evolution_json(std::span<const EvolutionTrace> traces);
nlohmann::json evolution_timing_json(std::span<const EvolutionTrace> traces);

/// Gain, S11 and NF against frequency, one polyline per curve.
std::string render_svg(const SimReport& report, const std::string& title = {});

nlohmann::json to_json(const BenchConfig& cfg);

} // namespace rfamp
