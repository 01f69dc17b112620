#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/common.hpp"

namespace rfamp {

/// Output termination of the amplifier: r_load (Ω) in parallel with c_load (fF).
struct LoadModel {
    double r_load = 1787.0;
    double c_load = 62.0;

    bool operator==(const LoadModel&) const = default;
};

/// One design query. Thresholds may be ±inf, which disables that constraint;
/// a non-finite gain disables both the gain and the ripple checks.
struct DesignSpec {
    std::string id;
    double fc = 30.0;          // GHz
    double fbw = 20.0;         // percent
    double power = 30.0;       // mA
    double gain = 25.0;        // dB
    double nf_max = 5.0;       // dB
    double ip1db_min = -25.0;  // dBm
    int stages = 3;
    LoadModel load;
    double s11_max = -10.0;    // dB, in-band full-chain input match

    double f_low() const { return fc * (1.0 - fbw / 200.0); }
    double f_high() const { return fc * (1.0 + fbw / 200.0); }
    double bandwidth_ghz() const { return f_high() - f_low(); }

    void validate() const;

    bool operator==(const DesignSpec&) const = default;
};

/// Number of points of every band grid.
inline constexpr int kBandGridPoints = 21;

/// 21 log-spaced frequencies (GHz) across [0.8·f_L, 1.2·f_H].
std::vector<double> band_grid(const DesignSpec& spec);

/// Per grid point: true when inside [f_L, f_H].
std::vector<bool> in_band_mask(const DesignSpec& spec, const std::vector<double>& grid_ghz);

void to_json(nlohmann::json& j, const LoadModel& l);
void from_json(const nlohmann::json& j, LoadModel& l);
void to_json(nlohmann::json& j, const DesignSpec& s);
void from_json(const nlohmann::json& j, DesignSpec& s);

/// JSON numbers, plus the strings "inf" / "-inf" for unconstrained thresholds.
double json_number(const nlohmann::json& j, const std::string& path);
nlohmann::json number_json(double v);

} // namespace rfamp
