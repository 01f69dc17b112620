#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rfamp/device_kb.hpp"
#include "rfamp/mcr_model.hpp"
#include "rfamp/spec.hpp"

namespace rfamp {

struct CandidateMeta {
    std::string agent;
    std::string call_id;
    std::int64_t timestamp = 0;

    bool operator==(const CandidateMeta&) const = default;
};

/// The 30-number design vector: devices, three MCRs, input match and degeneration.
struct CandidateDesign {
    std::array<double, 3> width{};  // µm
    std::array<double, 3> vgs{};    // mV
    std::array<MCRPhysical, 3> mcr{};
    double l_par = 0;  // pH, 0 = absent
    double l_g = 0;    // pH
    double l_s = 0;    // pH
    CandidateMeta meta;

    static constexpr std::size_t kDimension = 30;

    std::vector<double> flatten() const;
    /// Hash of the numeric vector only; provenance does not change it.
    std::uint64_t hash() const;

    bool operator==(const CandidateDesign&) const = default;
};

// Two-port building blocks. Units: pH, fF, Ω.
struct InputMatchBlock {
    double l_par = 0;  // shunt at the source side, 0 = absent
    double l_g = 0;    // series towards the gate
};
struct ActiveBlock {
    DeviceRecord device;
    double l_s = 0;  // source degeneration
};
struct McrBlock {
    MCRPhysical mcr;
};
struct LoadBlock {
    double r = kInf;
    double c = 0;
};

using Block = std::variant<InputMatchBlock, ActiveBlock, McrBlock, LoadBlock>;
using Chain = std::vector<Block>;
using Abcd = Eigen::Matrix2cd;

/// Y parameters of an active stage or an MCR. Throws DegenerateNetwork for other blocks.
Eigen::Matrix2cd block_y(const Block& b, double omega);
/// Throws SingularNetwork when the block has no forward transfer (Y21 = 0).
Abcd block_abcd(const Block& b, double omega);
/// Product of blocks [first, last).
Abcd cascade(const Chain& chain, double omega, std::size_t first = 0, std::size_t last = SIZE_MAX);

/// Input L-match, three stages and MCRs, then the load: 8 blocks.
Chain assemble(const CandidateDesign& cand, const DeviceKb& kb, const LoadModel& load);

/// Stage 1, MCR 1 and the stage-2 device, optionally preceded by the input match.
Chain critical_chain(const DeviceRecord& s1, const DeviceRecord& s2, const MCRPhysical& mcr1, double l_s,
                     std::optional<std::pair<double, double>> match);

cplx input_impedance(const Chain& chain, double omega);
/// Reflection at the source port, referenced to 50 Ω.
cplx input_reflection(const Chain& chain, double omega);

/// Voltage at the input node of block `node` relative to half the source EMF, in dB.
/// node = chain.size() is the open output.
double gain_to_node_db(const Chain& chain, double omega, std::size_t node);

/// Block indices of the active stages.
std::vector<std::size_t> active_indices(const Chain& chain);

/// Per stage: gate voltage of the next stage (or the output) over this stage's gate voltage, dB.
std::vector<double> stage_gains_db(const Chain& chain, double omega);

struct SmallSignal {
    std::vector<double> gain_db;
    std::vector<double> s11_db;
    std::vector<double> s22_db;
};

inline constexpr double kReflectionFloorDb = -100.0;
inline constexpr double kMismatchNoise = 4.0;

/// Gain is 20·log10|V_out / (E/2)| with the output open after the last block.
SmallSignal small_signal(const Chain& chain, const std::vector<double>& grid_ghz);

struct NoiseResult {
    double nf_db = 0;
    std::vector<double> per_stage_nf_db;
};
/// Friis cascade over available gains. Each active stage and the MCR after it form one
/// cascade element: F_i = F_min,i + (L_i − 1)/G_A,i, gain G_A,i / L_i, with every source
/// admittance taken from the chain in front. Stage 1 adds kMismatchNoise·|S11|².
NoiseResult noise_figure(const Chain& chain, double f_ghz);

/// Available gain of a two-port with Y parameters y driven from admittance ys.
double available_gain(const Eigen::Matrix2cd& y, cplx ys);
cplx output_admittance(const Eigen::Matrix2cd& y, cplx ys);
double mcr_available_gain(const McrBlock& m, cplx ys, double omega);

struct CompressionResult {
    double ip1db_dbm = 0;
    double op1db_dbm = 0;
};
/// Input-referred at the stage-1 gate.
CompressionResult compression(const Chain& chain, double f_ghz);

inline const std::vector<std::string>& constraint_names()
{
    static const std::vector<std::string> names{"gain", "ripple", "nf", "ip1db", "s11"};
    return names;
}

struct SimReport {
    std::vector<double> freq_grid;  // GHz
    std::vector<double> gain_db;
    std::vector<double> s11_db;
    std::vector<double> s22_db;
    double nf_db = 0;
    std::vector<double> nf_curve_db;
    double ip1db_dbm = 0;
    double op1db_dbm = 0;
    std::vector<double> per_stage_gain_db;
    std::vector<double> per_stage_nf_db;
    std::vector<double> per_stage_ip1db_dbm;
    double dc_current_ma = 0;
    std::map<std::string, bool> pass_flags;
    std::map<std::string, double> violations;
    std::int64_t hf_eval_count_delta = 0;
    std::string error;  // empty when the evaluation itself succeeded

    bool all_pass() const;
    double total_violation() const;
    bool operator==(const SimReport&) const = default;
};

/// Fills pass_flags and violations from the curves and spot values.
void apply_constraints(SimReport& r, const DesignSpec& spec);

/// Evaluates any chain over the spec's band grid. The gain curve is taken at block
/// `gain_node` (default: the output). Counts one high-fidelity evaluation.
SimReport evaluate_chain(const Chain& chain, const DesignSpec& spec,
                         std::optional<std::size_t> gain_node = std::nullopt);

/// Assembles and evaluates the candidate. Evaluation errors give a failed report with the
/// reason in `error` and every flag false.
SimReport fullchain_report(const CandidateDesign& cand, const DesignSpec& spec, const DeviceKb& kb,
                           const LoadModel& load);

/// Process-wide count of high-fidelity evaluations, plus the calling thread's share.
namespace hf {
void record(std::int64_t n = 1);
std::int64_t global_count();
std::int64_t thread_count();

/// While alive, record() throws BudgetExhausted instead of taking the calling thread more than
/// max_additional evaluations past its count at construction. Nested limits only tighten.
class ScopedLimit {
public:
    explicit ScopedLimit(std::int64_t max_additional);
    ~ScopedLimit();
    ScopedLimit(const ScopedLimit&) = delete;
    ScopedLimit& operator=(const ScopedLimit&) = delete;

private:
    std::int64_t previous_;
};
} // namespace hf

void to_json(nlohmann::json& j, const CandidateDesign& c);
void from_json(const nlohmann::json& j, CandidateDesign& c);
void to_json(nlohmann::json& j, const SimReport& r);
void from_json(const nlohmann::json& j, SimReport& r);

} // namespace rfamp
