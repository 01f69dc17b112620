#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/device_kb.hpp"
#include "rfamp/evaluator.hpp"
#include "rfamp/mcr_model.hpp"
#include "rfamp/optim.hpp"
#include "rfamp/spec.hpp"

namespace rfamp {

inline constexpr int kSchemaVersion = 1;

/// Stage-2 gain floor of the gain-constrained critical-stage variant, dB.
inline constexpr double kDefaultGainRequire = 15.0;

/// Ambient state every tool reads: the device tables, the query and optimizer settings.
struct ToolContext {
    const DeviceKb* kb = nullptr;
    DesignSpec spec;
    PsoConfig stage2_pso{12, 20, 0.72, 1.49, 1.49, 1, {}};
    SaConfig stage3_sa{40.0, 0.997, 2500, 0.08, 1, {}};
    int calibration_rounds = 5;
    /// Seconds since an arbitrary epoch. Tests inject a fixed clock.
    std::function<double()> clock;

    double now() const;
};

// Stage 1

std::vector<ActiveConfig> tool_active_sizing(const ToolContext& ctx, std::span<const double> ratios);

// Stage 2

/// Passive values of the critical stages: MCR 1, degeneration and the input L-match.
struct Stage2Passive {
    MCRPhysical mcr1;
    double l_s = 0;
    double l_par = 0;
    double l_g = 0;

    bool operator==(const Stage2Passive&) const = default;
};

/// Inductor-only L-section: shunt l_par at the source, series l_g to the load, both pH.
/// Throws Unmatchable when no positive pair exists.
std::pair<double, double> l_match(cplx z_in, double f0_ghz);

/// Table II stage-2 ranges: k, L1, L2, R1, R2, C1, C2, L_s.
Bounds stage2_bounds();

struct Stage2Eval {
    double cost = 0;
    double nf_db = 0;
    double s11_db = 0;       // at f_c
    double s11_edge_db = 0;  // worse of f_L and f_H
    double head_gain_db = 0; // lowest of f_L, f_c, f_H at the stage-2 gate
    Stage2Passive passive;
    bool matched = false;
};

/// The stage-2 cost pipeline for one point: extract z_in, synthesize the L-match, evaluate the
/// matched critical chain at f_L, f_c and f_H. Costs two high-fidelity evaluations (one when
/// unmatchable). Beyond the noise and centre-match terms, the band-edge match is held to
/// spec.s11_max and gain_require applies to the lowest of the three gate gains.
Stage2Eval stage2_evaluate(const ToolContext& ctx, const ActiveConfig& active, const std::vector<double>& x,
                           double headroom, std::optional<double> gain_require);

inline constexpr double kUnmatchablePenalty = 1e6;

struct ImpedanceMatchingResult {
    Stage2Passive passive;
    std::vector<double> x;
    SimReport sim;  // critical chain; gain curve taken at the stage-2 gate
    double cost = 0;
    bool feasible = false;
    double headroom = kDefaultHeadroom;
};

/// PSO over the stage-2 space. A positive best cost gives feasible = false with the
/// best candidate attached.
ImpedanceMatchingResult tool_impedance_matching(const ToolContext& ctx, const ActiveConfig& active,
                                                std::optional<double> nf_headroom,
                                                std::optional<double> gain_require, std::uint64_t seed);

/// Critical chain of a stage-2 result with the match in place.
Chain matched_critical_chain(const ActiveConfig& active, const Stage2Passive& p);
/// Index of the stage-2 gate inside matched_critical_chain.
inline constexpr std::size_t kStage2GateIndex = 3;

// Stage 3

/// Loading absorbed into the tank of the MCR after `stage` (0-based): half the driving
/// output capacitance plus half the next input or load capacitance, fF.
double absorbed_loading(const ActiveConfig& active, const LoadModel& load, std::size_t stage);

struct BandPlanningResult {
    std::array<MCRParams, 2> params{};
    std::array<MCRPhysical, 2> physical{};
    std::vector<double> freq_grid;
    std::vector<double> cal_gain_db;  // corrected low-fidelity curve
    std::vector<double> hf_gain_db;
    std::vector<double> stage_gain_db;  // low-fidelity gain of stages 2 and 3 at f_c
    double hf_ripple_db = 0;
    double hf_min_gain_db = 0;
    std::vector<std::vector<double>> residual_history;
    int hf_calls = 0;
};

/// Stage-3 variables of the two planned MCRs: (k, f0 GHz, Q0, C fF) each.
Bounds stage3_bounds(const DesignSpec& spec, const ActiveConfig& active);

/// Low-fidelity band curve of the planned stages on top of the head curve.
std::vector<double> band_lofi(const DesignSpec& spec, const ActiveConfig& active, std::span<const double> head_db,
                              const std::vector<double>& x);

/// Full-chain gain curve of the design with the planned MCRs. One high-fidelity evaluation.
std::vector<double> band_hifi(const ToolContext& ctx, const ActiveConfig& active, const Stage2Passive& s2,
                              const std::vector<double>& x);

/// Gain and ripple cost over the in-band points; infinite targets disable the gain term.
double band_cost(const DesignSpec& spec, std::span<const double> curve);

/// SA planning wrapped in multi-fidelity calibration. Throws CalibrationFailed.
BandPlanningResult tool_band_planning(const ToolContext& ctx, const ActiveConfig& active, const Stage2Passive& s2,
                                      std::span<const double> head_db,
                                      std::optional<std::vector<double>> gain_req_list, std::uint64_t seed);

// Stage 4

CandidateDesign compose_candidate(const ActiveConfig& active, const Stage2Passive& s2,
                                  const std::array<MCRPhysical, 2>& planned);

/// Candidate described by the two full-chain dicts. Schema errors name the field path.
CandidateDesign parse_wholechain(const nlohmann::json& wholechain_active, const nlohmann::json& wholechain_passive);

/// Parses the two full-chain dicts and evaluates the candidate.
SimReport tool_fullchain_eval(const ToolContext& ctx, const nlohmann::json& wholechain_active,
                              const nlohmann::json& wholechain_passive);

nlohmann::json wholechain_passive_json(const CandidateDesign& c);
nlohmann::json wholechain_active_json(const CandidateDesign& c, const DeviceKb& kb);

enum class BacktrackKind { RerunStages2to4, ReplanStage3Tighter, RerunStages2to4GlobalGain, EscalateStage1, Accept, Abort };
std::string to_string(BacktrackKind k);

struct BacktrackAction {
    BacktrackKind kind = BacktrackKind::Accept;
    std::optional<double> adjusted_headroom;
    std::optional<std::vector<double>> gain_constraints;

    bool operator==(const BacktrackAction&) const = default;
};

struct AttemptState {
    double headroom = kDefaultHeadroom;
    int gain_attempts = 0;               // consecutive linearity / gain-shape failures
    bool budget_exhausted = false;
    std::vector<double> stage_gain_db;   // low-fidelity gains of stages 2 and 3 from the last plan
    double shift_db = 2.0;
    int ladder_depth = 3;
};

BacktrackAction backtrack_decide(const SimReport& report, const DesignSpec& spec, const AttemptState& state);

// Tool calls

enum class ToolName { ActiveSizing, ImpedanceMatching, BandPlanning, FullchainEval };
std::string to_string(ToolName t);
ToolName tool_name_from_string(const std::string& s);

struct ToolCall {
    ToolName tool = ToolName::ActiveSizing;
    nlohmann::json args = nlohmann::json::object();
    std::string call_id;
    std::int64_t timestamp = 0;

    bool operator==(const ToolCall&) const = default;
};

struct ToolResult {
    std::string call_id;
    nlohmann::json payload = nlohmann::json::object();
    std::int64_t hf_evals_used = 0;
    double elapsed = 0;
    bool ok = true;
    std::optional<std::string> error;

    bool operator==(const ToolResult&) const = default;
};

/// Throws SchemaError naming the offending field.
void validate_args(const ToolCall& call);

/// Validates, runs the tool and wraps every failure into ok = false.
ToolResult dispatch(const ToolContext& ctx, const ToolCall& call);

/// Documentation of the four tools, as handed to remote policies.
const nlohmann::json& tool_documentation();

void to_json(nlohmann::json& j, const Stage2Passive& p);
void from_json(const nlohmann::json& j, Stage2Passive& p);
void to_json(nlohmann::json& j, const BandPlanningResult& r);
void to_json(nlohmann::json& j, const ToolCall& c);
void from_json(const nlohmann::json& j, ToolCall& c);
void to_json(nlohmann::json& j, const ToolResult& r);
void from_json(const nlohmann::json& j, ToolResult& r);
void to_json(nlohmann::json& j, const BacktrackAction& a);

/// One JSON object per line.
void append_jsonl(const std::string& path, const nlohmann::json& j);
std::vector<nlohmann::json> read_jsonl(const std::string& path);

} // namespace rfamp
