#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/memory.hpp"
#include "rfamp/stage_tools.hpp"

namespace rfamp {

struct TokenCount {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;

    TokenCount& operator+=(const TokenCount& o)
    {
        prompt += o.prompt;
        completion += o.completion;
        return *this;
    }
    bool operator==(const TokenCount&) const = default;
};

struct Violation {
    std::string constraint;
    double magnitude = 0;

    bool operator==(const Violation&) const = default;
};

/// Summary a sub-agent hands back to the Manager. success holds exactly when violated is empty.
struct AgentReport {
    bool success = false;
    std::map<std::string, double> metrics;
    std::vector<Violation> violated;
    std::vector<std::string> failure_reasons;
    TokenCount tokens;
    int tool_calls_made = 0;
    std::int64_t hf_evals = 0;
    bool infeasible = false;        // the candidate should leave the queue
    bool budget_exhausted = false;
    std::optional<std::uint64_t> candidate_hash;

    bool operator==(const AgentReport&) const = default;
};

/// Metrics and violations of a full-chain report; success follows the violations.
AgentReport report_from_sim(const SimReport& r);

/// One policy decision. An empty action means Terminate, in which case final_report is set.
struct PolicyTurn {
    std::string thought;
    std::optional<ToolCall> action;
    std::optional<AgentReport> final_report;
    std::optional<ToolResult> observation;
    TokenCount tokens;
    bool malformed = false;

    bool operator==(const PolicyTurn&) const = default;
};

struct TaskFrame {
    std::string agent;  // "searcher" or "refiner"
    nlohmann::json context = nlohmann::json::object();

    bool operator==(const TaskFrame&) const = default;
};

/// Raised by a policy whose reply carries no usable action. Tokens spent on the reply are kept.
class MalformedAction : public PolicyError {
public:
    MalformedAction(const std::string& what, TokenCount tokens) : PolicyError(what), tokens(tokens) {}
    TokenCount tokens;
};

/// Decides the next turn from the task frame and the transcript so far. Implementations keep
/// no state between calls.
class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyTurn next(const TaskFrame& frame, std::span<const PolicyTurn> transcript) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic Searcher/Refiner procedures. Every decision is recomputed by replaying
/// the transcript, so the policy holds nothing but the device tables.
class ScriptedPolicy : public Policy {
public:
    explicit ScriptedPolicy(const DeviceKb& kb) : kb_(&kb) {}
    PolicyTurn next(const TaskFrame& frame, std::span<const PolicyTurn> transcript) override;
    std::string name() const override { return "scripted"; }

private:
    const DeviceKb* kb_;
};

struct EndpointConfig {
    std::string url;  // http(s)://host[:port]/path
    std::string key;
    std::string model = "default";
    double timeout_s = 120;

    /// Reads RFAMP_LLM_URL and RFAMP_LLM_KEY (and optionally RFAMP_LLM_MODEL). Throws PolicyError.
    static EndpointConfig from_env();
};

/// Chat-completion policy. Each turn posts the rendered conversation with the tool schemas
/// and parses either a tool call or a JSON action from the reply.
class RemotePolicy : public Policy {
public:
    explicit RemotePolicy(EndpointConfig cfg) : cfg_(std::move(cfg)) {}
    PolicyTurn next(const TaskFrame& frame, std::span<const PolicyTurn> transcript) override;
    std::string name() const override { return "remote"; }

    /// The request body for a turn; exposed for tests.
    nlohmann::json render(const TaskFrame& frame, std::span<const PolicyTurn> transcript) const;
    /// Parses a reply body into a turn. Throws MalformedAction.
    static PolicyTurn parse_reply(const nlohmann::json& reply);

private:
    EndpointConfig cfg_;
};

using ToolFn = std::function<ToolResult(const ToolCall&)>;

struct Budget {
    std::int64_t hf_evals = 1'000'000;
    double wall_seconds = kInf;
    std::int64_t tool_calls = 1'000'000;

    bool positive() const { return hf_evals > 0 && wall_seconds > 0.0 && tool_calls > 0; }
    bool operator==(const Budget&) const = default;
};

struct LoopLimits {
    int max_turns = 40;
    Budget budget;
    std::function<double()> clock;  // seconds; empty means wall time is not checked
};

struct Transcript {
    TaskFrame frame;
    std::vector<PolicyTurn> turns;
    AgentReport report;

    bool operator==(const Transcript&) const = default;
};

/// Policy → dispatch → observation until Terminate, max_turns or the budget runs out.
/// A policy error gets one retry with a format-error observation; a second error makes the
/// turn a failed turn. The report carries the summed tokens and the number of dispatches.
Transcript react_loop(Policy& policy, const ToolFn& tools, const TaskFrame& frame, const LoopLimits& limits);

/// Critical stages fixed by the Searcher, or a retrieved complete design.
struct CriticalCandidate {
    ActiveConfig active;
    Stage2Passive passive;
    std::vector<double> head_gain_db;  // gain to the stage-2 gate on the band grid
    std::map<std::string, double> critical_violations;
    std::optional<double> gain_require;
    double headroom = kDefaultHeadroom;
    std::optional<CandidateDesign> full;

    std::uint64_t hash() const;
    bool operator==(const CriticalCandidate&) const = default;
};

struct SearchInstruction {
    std::vector<double> power_ratios;  // all three stages
    std::optional<double> gain_require = kDefaultGainRequire;
    std::optional<double> nf_headroom;
    std::uint64_t seed = 1;
};

struct SearchOutcome {
    std::vector<CriticalCandidate> candidates;
    AgentReport report;
    Transcript transcript;
};

/// One power split: sizing, then a gain-constrained and an unconstrained match per
/// configuration. Candidates whose hash is in queue_snapshot are dropped.
SearchOutcome searcher_run(const SearchInstruction& instruction, std::span<const std::uint64_t> queue_snapshot,
                           const DesignSpec& spec, Policy& policy, const ToolFn& tools, const LoopLimits& limits);

struct RefineOutcome {
    std::optional<CandidateDesign> design;
    std::optional<SimReport> report;
    AgentReport agent_report;
    Transcript transcript;
};

/// Band planning, full-chain evaluation and backtracking around one candidate. A design is
/// returned only when its final full-chain report has no violations.
RefineOutcome refiner_run(const CriticalCandidate& candidate, const DesignSpec& spec, std::uint64_t seed,
                          Policy& policy, const ToolFn& tools, const LoopLimits& limits);

enum class AgentMode { AutonomousSearch, RetrieveAndRefine };
std::string to_string(AgentMode m);
AgentMode agent_mode_from_string(const std::string& s);

enum class ManagerAction { SearchCandidates, RefineCandidate };
std::string to_string(ManagerAction a);

struct QueueEntry {
    CriticalCandidate candidate;
    std::uint64_t hash = 0;
    double priority = 0;
    std::int64_t hf_spent = 0;
    std::int64_t order = 0;
};

/// Higher is better: −(nf + ip1db + 0.5·gain) violation.
double priority_score(const std::map<std::string, double>& violations);
double priority_score(const std::vector<Violation>& violated);

struct ManagerState {
    std::vector<QueueEntry> queue;
    Budget budget_remaining;
    AgentMode mode = AgentMode::AutonomousSearch;
    std::vector<nlohmann::json> history;
    std::int64_t next_order = 0;

    /// False when a candidate with the same hash is already queued.
    bool enqueue(const CriticalCandidate& c, double priority, std::int64_t hf_spent = 0);
    QueueEntry* find(std::uint64_t hash);
    /// Best priority, then fewer HF evaluations spent, then insertion order.
    const QueueEntry* head() const;
};

struct ManagerDecision {
    ManagerAction action = ManagerAction::SearchCandidates;
    std::optional<std::uint64_t> target;
};

/// Folds the last report into the queue (evicting infeasible candidates) and picks the next
/// action. Throws BudgetExhausted when any budget dimension is spent.
ManagerDecision manager_step(ManagerState& state, const DesignSpec& spec, const std::optional<AgentReport>& last);

struct OrchestratorConfig {
    AgentMode mode = AgentMode::AutonomousSearch;
    std::uint64_t seed = 1;
    Budget budget;
    int max_turns = 40;
    double r3 = 0.3;  // third-stage share of the power budget
    std::vector<std::array<double, 2>> splits{{0.5, 0.5}, {0.6, 0.4}, {0.4, 0.6}};
    std::optional<double> gain_require = kDefaultGainRequire;
    int retrieve_k = 3;
    std::string run_id;
};

struct DesignOutcome {
    bool success = false;
    std::optional<CandidateDesign> design;
    std::optional<SimReport> report;
    std::vector<double> power_split;
    std::int64_t hf_evals = 0;
    double elapsed_s = 0;
    TokenCount tokens;
    int tool_calls = 0;
    std::vector<Transcript> transcripts;
    std::vector<nlohmann::json> history;
    std::vector<std::string> failure_reasons;
};

/// Manager loop over Searcher and Refiner invocations. In RetrieveAndRefine mode the queue is
/// preloaded from memory (one evaluation per retrieved design) and the experience hints add
/// a first power split. A successful design is written back to memory when one is given.
DesignOutcome run_design(const ToolContext& ctx, Policy& policy, const OrchestratorConfig& cfg,
                         MemoryStore* memory = nullptr);

void to_json(nlohmann::json& j, const TokenCount& t);
void from_json(const nlohmann::json& j, TokenCount& t);
void to_json(nlohmann::json& j, const AgentReport& r);
void from_json(const nlohmann::json& j, AgentReport& r);
void to_json(nlohmann::json& j, const PolicyTurn& t);
void from_json(const nlohmann::json& j, PolicyTurn& t);
void to_json(nlohmann::json& j, const TaskFrame& f);
void from_json(const nlohmann::json& j, TaskFrame& f);
void to_json(nlohmann::json& j, const Transcript& t);
void from_json(const nlohmann::json& j, Transcript& t);
void to_json(nlohmann::json& j, const CriticalCandidate& c);
void from_json(const nlohmann::json& j, CriticalCandidate& c);

} // namespace rfamp
