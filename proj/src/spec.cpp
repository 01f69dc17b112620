#include "rfamp/spec.hpp"

#include <fmt/format.h>

namespace rfamp {

void DesignSpec::validate() const
{
    if (!(fc > 0.0) || !std::isfinite(fc))
        throw SchemaError(fmt::format("spec {}: fc must be positive and finite", id));
    if (!(fbw > 0.0 && fbw < 100.0))
        throw SchemaError(fmt::format("spec {}: fbw must lie in (0, 100)", id));
    if (!(power > 0.0))
        throw SchemaError(fmt::format("spec {}: power must be positive", id));
    if (stages < 1)
        throw SchemaError(fmt::format("spec {}: stages must be >= 1", id));
    if (!(load.r_load > 0.0) || load.c_load < 0.0)
        throw SchemaError(fmt::format("spec {}: load must have r_load > 0, c_load >= 0", id));
    if (std::isnan(gain) || std::isnan(nf_max) || std::isnan(ip1db_min) || std::isnan(s11_max))
        throw SchemaError(fmt::format("spec {}: thresholds must not be NaN", id));
}

std::vector<double> band_grid(const DesignSpec& spec)
{
    return log_grid(0.8 * spec.f_low(), 1.2 * spec.f_high(), kBandGridPoints);
}

std::vector<bool> in_band_mask(const DesignSpec& spec, const std::vector<double>& grid_ghz)
{
    const double lo = spec.f_low() * (1.0 - 1e-9);
    const double hi = spec.f_high() * (1.0 + 1e-9);
    std::vector<bool> mask;
    mask.reserve(grid_ghz.size());
    for (double f : grid_ghz)
        mask.push_back(f >= lo && f <= hi);
    return mask;
}

double json_number(const nlohmann::json& j, const std::string& path)
{
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "+inf")
            return kInf;
        if (s == "-inf")
            return -kInf;
    }
    throw SchemaError(fmt::format("{}: expected a number or \"inf\"/\"-inf\"", path));
}

nlohmann::json number_json(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return v;
}

void to_json(nlohmann::json& j, const LoadModel& l)
{
    j = nlohmann::json{{"r_load", l.r_load}, {"c_load", l.c_load}};
}

void from_json(const nlohmann::json& j, LoadModel& l)
{
    if (!j.is_object())
        throw SchemaError("load: expected an object");
    l.r_load = json_number(j.at("r_load"), "load.r_load");
    l.c_load = json_number(j.at("c_load"), "load.c_load");
}

void to_json(nlohmann::json& j, const DesignSpec& s)
{
    j = nlohmann::json{{"id", s.id},
                       {"fc", s.fc},
                       {"fbw", s.fbw},
                       {"power", s.power},
                       {"gain", number_json(s.gain)},
                       {"nf_max", number_json(s.nf_max)},
                       {"ip1db_min", number_json(s.ip1db_min)},
                       {"stages", s.stages},
                       {"load", s.load},
                       {"s11_max", number_json(s.s11_max)}};
}

void from_json(const nlohmann::json& j, DesignSpec& s)
{
    if (!j.is_object())
        throw SchemaError("spec: expected an object");
    const auto req = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key))
            throw SchemaError(fmt::format("spec.{}: missing required field", key));
        return j.at(key);
    };
    s = DesignSpec{};
    s.id = j.value("id", std::string{});
    s.fc = json_number(req("fc"), "spec.fc");
    s.fbw = json_number(req("fbw"), "spec.fbw");
    s.power = json_number(req("power"), "spec.power");
    s.gain = json_number(req("gain"), "spec.gain");
    s.nf_max = json_number(req("nf_max"), "spec.nf_max");
    s.ip1db_min = json_number(req("ip1db_min"), "spec.ip1db_min");
    if (j.contains("stages")) {
        if (!j.at("stages").is_number_integer())
            throw SchemaError("spec.stages: expected an integer");
        s.stages = j.at("stages").get<int>();
    }
    if (j.contains("load"))
        s.load = j.at("load").get<LoadModel>();
    if (j.contains("s11_max"))
        s.s11_max = json_number(j.at("s11_max"), "spec.s11_max");
    s.validate();
}

} // namespace rfamp
