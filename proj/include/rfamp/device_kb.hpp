#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/common.hpp"

namespace rfamp {

enum class DeviceKind { CascodeSingleEnded, DiffCommonSource };

std::string to_string(DeviceKind k);
DeviceKind device_kind_from_string(const std::string& s);

/// Characterization grid of one active-device family.
struct DeviceClass {
    DeviceKind kind = DeviceKind::CascodeSingleEnded;
    std::vector<double> width_grid;  // µm
    std::vector<double> vbias_grid;  // mV

    static DeviceClass cascode();   // 45..180 µm, step 9
    static DeviceClass diff_cs();   // 45..117 µm, step 9
    static DeviceClass of(DeviceKind k);

    /// Throws SchemaError unless both grids are non-empty and strictly increasing.
    void validate() const;
};

/// One characterized (width, bias) point. Units follow the field comments.
struct DeviceRecord {
    DeviceKind kind = DeviceKind::CascodeSingleEnded;
    double width = 0;        // µm
    double vbias = 0;        // mV
    double id = 0;           // mA
    double gm = 0;           // mS
    std::vector<cplx> zin;   // Ω, on impedance_grid_ghz()
    std::vector<cplx> zout;  // Ω, on impedance_grid_ghz()
    double rs_out = 0;       // Ω
    double cs_out = 0;       // fF
    double cin = 0;          // fF
    double nf_min = 0;       // dB
    double ip1db_stage = 0;  // dBm

    bool operator==(const DeviceRecord&) const = default;
};

using DeviceTable = std::vector<DeviceRecord>;

/// Frequencies (GHz) on which zin / zout are stored: 21 log points, 1–100 GHz.
const std::vector<double>& impedance_grid_ghz();

/// Square-law device model constants.
struct DeviceModel {
    static constexpr double kVth = 0.280;            // V
    static constexpr double kKappaCascode = 0.9;     // mA / (µm·V²)
    static constexpr double kKappaDiff = 1.1;        // mA / (µm·V²)
    static constexpr double kCinPerUm = 1.1;         // fF / µm
    static constexpr double kCoutPerUm = 0.55;       // fF / µm
    static constexpr double kRoutProduct = 22000.0;  // Ω·mA
    static constexpr double kRinProduct = 20000.0;   // Ω·µm, gate-side shunt of zin

    static DeviceRecord evaluate(DeviceKind kind, double width_um, double vbias_mv);
};

/// One record per grid point, widths outer, biases inner. The model is analytic, so the
/// seed does not change any value; it is part of the signature so stored tables carry it.
DeviceTable generate_table(std::uint64_t seed, const DeviceClass& cls);

/// Records with id <= i_max, sorted by width then vbias.
std::vector<DeviceRecord> lookup_by_current(std::span<const DeviceRecord> table, double i_max);

/// Exact grid lookup; throws UnknownDevice when (width, vbias) is not a grid point.
const DeviceRecord& find_device(std::span<const DeviceRecord> table, double width, double vbias);

/// Both device tables, built once and then only read.
class DeviceKb {
public:
    explicit DeviceKb(std::uint64_t seed = 7);

    const DeviceTable& table(DeviceKind k) const;
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    DeviceTable cascode_;
    DeviceTable diff_;
};

struct ActiveConfig {
    std::vector<DeviceRecord> stages;
    std::vector<double> power_split;
    double total_budget = 0;  // mA

    double total_current() const;
    bool operator==(const ActiveConfig&) const = default;
};

/// Stage kinds of the three-stage LNA: cascode input stage, differential stages after it.
std::vector<DeviceKind> default_stage_kinds(int stages);

/// Stage-1 active sizing. Critical stages get the largest- and smallest-width feasible
/// realization; non-critical stages do the same as a group. Within a width the highest
/// feasible bias is used. Throws InfeasibleBudget if any stage has no feasible record.
std::vector<ActiveConfig> allocate(const DeviceKb& kb, std::span<const double> ratios, double budget,
                                   std::span<const DeviceKind> stage_kinds,
                                   std::span<const int> critical = std::span<const int>{});

void to_json(nlohmann::json& j, const DeviceRecord& r);
void from_json(const nlohmann::json& j, DeviceRecord& r);
void to_json(nlohmann::json& j, const ActiveConfig& c);
void from_json(const nlohmann::json& j, ActiveConfig& c);

} // namespace rfamp
