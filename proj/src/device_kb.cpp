#include "rfamp/device_kb.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace rfamp {

std::string to_string(DeviceKind k)
{
    return k == DeviceKind::CascodeSingleEnded ? "CascodeSingleEnded" : "DiffCommonSource";
}

DeviceKind device_kind_from_string(const std::string& s)
{
    if (s == "CascodeSingleEnded")
        return DeviceKind::CascodeSingleEnded;
    if (s == "DiffCommonSource")
        return DeviceKind::DiffCommonSource;
    throw SchemaError(fmt::format("unknown device class \"{}\"", s));
}

namespace {

std::vector<double> stepped(double lo, double hi, double step)
{
    std::vector<double> v;
    const int n = static_cast<int>(std::lround((hi - lo) / step));
    for (int i = 0; i <= n; ++i)
        v.push_back(lo + step * i);
    return v;
}

bool strictly_increasing(const std::vector<double>& v)
{
    return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

} // namespace

DeviceClass DeviceClass::cascode()
{
    return {DeviceKind::CascodeSingleEnded, stepped(45, 180, 9), stepped(300, 500, 25)};
}

DeviceClass DeviceClass::diff_cs()
{
    return {DeviceKind::DiffCommonSource, stepped(45, 117, 9), stepped(300, 500, 25)};
}

DeviceClass DeviceClass::of(DeviceKind k)
{
    return k == DeviceKind::CascodeSingleEnded ? cascode() : diff_cs();
}

void DeviceClass::validate() const
{
    if (width_grid.empty() || vbias_grid.empty())
        throw SchemaError("device class grids must be non-empty");
    if (!strictly_increasing(width_grid) || !strictly_increasing(vbias_grid))
        throw SchemaError("device class grids must be strictly increasing");
}

const std::vector<double>& impedance_grid_ghz()
{
    static const std::vector<double> grid = log_grid(1.0, 100.0, 21);
    return grid;
}

DeviceRecord DeviceModel::evaluate(DeviceKind kind, double width_um, double vbias_mv)
{
    const double kappa = kind == DeviceKind::CascodeSingleEnded ? kKappaCascode : kKappaDiff;
    const double vov = vbias_mv * 1e-3 - kVth;

    DeviceRecord r;
    r.kind = kind;
    r.width = width_um;
    r.vbias = vbias_mv;
    r.id = kappa * width_um * vov * vov;
    r.gm = 2.0 * kappa * width_um * vov;
    r.cin = kCinPerUm * width_um;
    r.cs_out = kCoutPerUm * width_um;
    r.rs_out = kRoutProduct / r.id;
    r.nf_min = 0.9 + 40.0 / r.gm;
    r.ip1db_stage = db10(2.2 * r.id) - 2.0;

    const double r_in = kRinProduct / width_um;
    for (double f : impedance_grid_ghz()) {
        const double w = ghz_to_omega(f);
        r.zin.push_back(1.0 / cplx(1.0 / r_in, w * r.cin * 1e-15));
        r.zout.push_back(1.0 / cplx(1.0 / r.rs_out, w * r.cs_out * 1e-15));
    }
    return r;
}

DeviceTable generate_table(std::uint64_t /*seed*/, const DeviceClass& cls)
{
    cls.validate();
    DeviceTable t;
    t.reserve(cls.width_grid.size() * cls.vbias_grid.size());
    for (double w : cls.width_grid)
        for (double v : cls.vbias_grid)
            t.push_back(DeviceModel::evaluate(cls.kind, w, v));
    return t;
}

std::vector<DeviceRecord> lookup_by_current(std::span<const DeviceRecord> table, double i_max)
{
    std::vector<DeviceRecord> out;
    for (const auto& r : table)
        if (r.id <= i_max)
            out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [](const DeviceRecord& a, const DeviceRecord& b) {
        return a.width != b.width ? a.width < b.width : a.vbias < b.vbias;
    });
    return out;
}

const DeviceRecord& find_device(std::span<const DeviceRecord> table, double width, double vbias)
{
    for (const auto& r : table)
        if (r.width == width && r.vbias == vbias)
            return r;
    throw UnknownDevice(fmt::format("no device at W={} um, V={} mV", width, vbias));
}

DeviceKb::DeviceKb(std::uint64_t seed)
    : seed_(seed),
      cascode_(generate_table(seed, DeviceClass::cascode())),
      diff_(generate_table(seed, DeviceClass::diff_cs()))
{
}

const DeviceTable& DeviceKb::table(DeviceKind k) const
{
    return k == DeviceKind::CascodeSingleEnded ? cascode_ : diff_;
}

double ActiveConfig::total_current() const
{
    double s = 0;
    for (const auto& r : stages)
        s += r.id;
    return s;
}

std::vector<DeviceKind> default_stage_kinds(int stages)
{
    std::vector<DeviceKind> k(static_cast<std::size_t>(std::max(stages, 0)), DeviceKind::DiffCommonSource);
    if (!k.empty())
        k.front() = DeviceKind::CascodeSingleEnded;
    return k;
}

namespace {

struct Extremes {
    DeviceRecord largest;
    DeviceRecord smallest;
};

// Highest-bias record at the largest and at the smallest feasible width.
Extremes extremes_of(const std::vector<DeviceRecord>& feasible)
{
    const double w_max = feasible.back().width;
    const double w_min = feasible.front().width;
    Extremes e{feasible.back(), feasible.front()};
    for (const auto& r : feasible) {
        if (r.width == w_max && r.vbias >= e.largest.vbias)
            e.largest = r;
        if (r.width == w_min && r.vbias >= e.smallest.vbias)
            e.smallest = r;
    }
    return e;
}

} // namespace

std::vector<ActiveConfig> allocate(const DeviceKb& kb, std::span<const double> ratios, double budget,
                                   std::span<const DeviceKind> stage_kinds, std::span<const int> critical)
{
    if (ratios.empty() || ratios.size() != stage_kinds.size())
        throw SchemaError(fmt::format("power_ratio_list has {} entries for {} stages", ratios.size(),
                                      stage_kinds.size()));
    if (!(budget > 0.0))
        throw SchemaError("power budget must be positive");
    double sum = 0;
    for (double r : ratios) {
        if (!(r > 0.0 && r <= 1.0))
            throw SchemaError("power ratios must lie in (0, 1]");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw SchemaError(fmt::format("power ratios sum to {}, expected 1", sum));

    std::vector<int> crit(critical.begin(), critical.end());
    if (crit.empty())
        crit.push_back(0);

    const std::size_t n = ratios.size();
    std::vector<Extremes> ext;
    ext.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double share = ratios[i] * budget;
        auto feasible = lookup_by_current(kb.table(stage_kinds[i]), share);
        if (feasible.empty())
            throw InfeasibleBudget(
                fmt::format("stage {} has no device within its {:.4g} mA share", i + 1, share));
        ext.push_back(extremes_of(feasible));
    }

    const auto is_crit = [&](std::size_t i) {
        return std::find(crit.begin(), crit.end(), static_cast<int>(i)) != crit.end();
    };
    // true = largest realization, false = smallest
    const auto group_options = [&](bool critical_group) {
        bool any = false;
        bool distinct = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_crit(i) != critical_group)
                continue;
            any = true;
            distinct = distinct || !(ext[i].largest == ext[i].smallest);
        }
        if (!any || !distinct)
            return std::vector<bool>{true};
        return std::vector<bool>{true, false};
    };

    std::vector<ActiveConfig> out;
    for (bool c_large : group_options(true)) {
        for (bool nc_large : group_options(false)) {
            ActiveConfig cfg;
            cfg.power_split.assign(ratios.begin(), ratios.end());
            cfg.total_budget = budget;
            for (std::size_t i = 0; i < n; ++i) {
                const bool large = is_crit(i) ? c_large : nc_large;
                cfg.stages.push_back(large ? ext[i].largest : ext[i].smallest);
            }
            out.push_back(std::move(cfg));
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const DeviceRecord& r)
{
    auto zs = [](const std::vector<cplx>& z) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& c : z)
            a.push_back({c.real(), c.imag()});
        return a;
    };
    j = nlohmann::json{{"class", to_string(r.kind)},
                       {"width", r.width},
                       {"vbias", r.vbias},
                       {"id", r.id},
                       {"gm", r.gm},
                       {"zin", zs(r.zin)},
                       {"zout", zs(r.zout)},
                       {"rs_out", r.rs_out},
                       {"cs_out", r.cs_out},
                       {"cin", r.cin},
                       {"nf_min", r.nf_min},
                       {"ip1db_stage", r.ip1db_stage}};
}

void from_json(const nlohmann::json& j, DeviceRecord& r)
{
    auto zs = [](const nlohmann::json& a) {
        std::vector<cplx> z;
        for (const auto& p : a)
            z.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        return z;
    };
    r.kind = device_kind_from_string(j.at("class").get<std::string>());
    r.width = j.at("width").get<double>();
    r.vbias = j.at("vbias").get<double>();
    r.id = j.at("id").get<double>();
    r.gm = j.at("gm").get<double>();
    r.zin = zs(j.at("zin"));
    r.zout = zs(j.at("zout"));
    r.rs_out = j.at("rs_out").get<double>();
    r.cs_out = j.at("cs_out").get<double>();
    r.cin = j.at("cin").get<double>();
    r.nf_min = j.at("nf_min").get<double>();
    r.ip1db_stage = j.at("ip1db_stage").get<double>();
}

void to_json(nlohmann::json& j, const ActiveConfig& c)
{
    j = nlohmann::json{{"stages", c.stages}, {"power_split", c.power_split}, {"total_budget", c.total_budget}};
}

void from_json(const nlohmann::json& j, ActiveConfig& c)
{
    c.stages = j.at("stages").get<std::vector<DeviceRecord>>();
    c.power_split = j.at("power_split").get<std::vector<double>>();
    c.total_budget = j.at("total_budget").get<double>();
}

} // namespace rfamp
