#include "rfamp/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <fmt/format.h>

namespace rfamp {

namespace {

constexpr double kPico = 1e-12;
constexpr double kFemto = 1e-15;
const cplx kJ{0.0, 1.0};

Abcd series_z(cplx z)
{
    Abcd m;
    m << 1.0, z, 0.0, 1.0;
    return m;
}

Abcd shunt_y(cplx y)
{
    Abcd m;
    m << 1.0, 0.0, y, 1.0;
    return m;
}

Abcd abcd_from_y(const Eigen::Matrix2cd& y, double omega)
{
    const cplx y21 = y(1, 0);
    if (std::abs(y21) == 0.0)
        throw SingularNetwork(fmt::format("block has Y21 = 0 at {:.4g} GHz", omega_to_ghz(omega)));
    const cplx det = y(0, 0) * y(1, 1) - y(0, 1) * y(1, 0);
    Abcd m;
    m << -y(1, 1) / y21, -1.0 / y21, -det / y21, -y(0, 0) / y21;
    return m;
}

cplx device_output_admittance(const DeviceRecord& d, double omega)
{
    return 1.0 / d.rs_out + kJ * omega * d.cs_out * kFemto;
}

cplx reflection(cplx z)
{
    if (std::isinf(z.real()) || std::isinf(z.imag()))
        return 1.0;
    return (z - kZ0) / (z + kZ0);
}

double reflection_db(cplx gamma)
{
    const double mag = std::abs(gamma);
    return mag > 0.0 ? std::max(db20(mag), kReflectionFloorDb) : kReflectionFloorDb;
}

std::atomic<std::int64_t> g_hf_count{0};
thread_local std::int64_t t_hf_count = 0;

} // namespace

namespace hf {
namespace {
thread_local std::int64_t t_hf_limit = std::numeric_limits<std::int64_t>::max();
}

void record(std::int64_t n)
{
    if (t_hf_count + n > t_hf_limit)
        throw BudgetExhausted(fmt::format("evaluation budget of this thread is spent ({} used)", t_hf_count));
    g_hf_count.fetch_add(n, std::memory_order_relaxed);
    t_hf_count += n;
}
std::int64_t global_count() { return g_hf_count.load(std::memory_order_relaxed); }
std::int64_t thread_count() { return t_hf_count; }

ScopedLimit::ScopedLimit(std::int64_t max_additional) : previous_(t_hf_limit)
{
    const std::int64_t room = std::max<std::int64_t>(0, max_additional);
    if (t_hf_count <= previous_ - room)
        t_hf_limit = t_hf_count + room;
}

ScopedLimit::~ScopedLimit() { t_hf_limit = previous_; }
} // namespace hf

std::vector<double> CandidateDesign::flatten() const
{
    std::vector<double> v;
    v.reserve(kDimension);
    v.insert(v.end(), width.begin(), width.end());
    v.insert(v.end(), vgs.begin(), vgs.end());
    for (const auto& m : mcr)
        v.insert(v.end(), {m.k, m.l1, m.l2, m.r1, m.r2, m.c1, m.c2});
    v.insert(v.end(), {l_par, l_g, l_s});
    return v;
}

std::uint64_t CandidateDesign::hash() const
{
    return hash_doubles(flatten());
}

Eigen::Matrix2cd block_y(const Block& b, double omega)
{
    Eigen::Matrix2cd y = Eigen::Matrix2cd::Zero();
    if (const auto* a = std::get_if<ActiveBlock>(&b)) {
        const cplx yc = kJ * omega * a->device.cin * kFemto;
        const double gm = a->device.gm * 1e-3;
        if (a->l_s > 0.0) {
            const cplx yl = 1.0 / (kJ * omega * a->l_s * kPico);
            const cplx den = yc + gm + yl;
            y(0, 0) = yc * yl / den;
            y(1, 0) = gm * yl / den;
        } else {
            y(0, 0) = yc;
            y(1, 0) = gm;
        }
        y(1, 1) = device_output_admittance(a->device, omega);
        return y;
    }
    if (const auto* m = std::get_if<McrBlock>(&b)) {
        const auto& p = m->mcr;
        const double mut = p.k * std::sqrt(p.l1 * p.l2);
        const double det = (p.l1 * p.l2 - mut * mut) * kPico;  // pH·H
        Eigen::Matrix2cd gamma;
        gamma << p.l2 / det, -mut / det, -mut / det, p.l1 / det;
        y = gamma / (kJ * omega);
        y(0, 0) += 1.0 / p.r1 + kJ * omega * p.c1 * kFemto;
        y(1, 1) += 1.0 / p.r2 + kJ * omega * p.c2 * kFemto;
        return y;
    }
    throw DegenerateNetwork("only active and MCR blocks have a Y-parameter form");
}

Abcd block_abcd(const Block& b, double omega)
{
    return std::visit(
        [&](const auto& blk) -> Abcd {
            using T = std::decay_t<decltype(blk)>;
            if constexpr (std::is_same_v<T, InputMatchBlock>) {
                Abcd m = Abcd::Identity();
                if (blk.l_par > 0.0)
                    m = shunt_y(1.0 / (kJ * omega * blk.l_par * kPico));
                return m * series_z(kJ * omega * blk.l_g * kPico);
            } else if constexpr (std::is_same_v<T, LoadBlock>) {
                const cplx g = std::isinf(blk.r) ? cplx(0.0) : cplx(1.0 / blk.r);
                return shunt_y(g + kJ * omega * blk.c * kFemto);
            } else {
                return abcd_from_y(block_y(b, omega), omega);
            }
        },
        b);
}

Abcd cascade(const Chain& chain, double omega, std::size_t first, std::size_t last)
{
    last = std::min(last, chain.size());
    Abcd m = Abcd::Identity();
    for (std::size_t i = first; i < last; ++i)
        m = m * block_abcd(chain[i], omega);
    if (!m.allFinite())
        throw SingularNetwork(fmt::format("non-finite cascade at {:.4g} GHz", omega_to_ghz(omega)));
    return m;
}

Chain assemble(const CandidateDesign& cand, const DeviceKb& kb, const LoadModel& load)
{
    const auto kinds = default_stage_kinds(3);
    std::array<DeviceRecord, 3> dev;
    for (std::size_t i = 0; i < 3; ++i)
        dev[i] = find_device(kb.table(kinds[i]), cand.width[i], cand.vgs[i]);
    return Chain{InputMatchBlock{cand.l_par, cand.l_g},
                 ActiveBlock{dev[0], cand.l_s},
                 McrBlock{cand.mcr[0]},
                 ActiveBlock{dev[1], 0.0},
                 McrBlock{cand.mcr[1]},
                 ActiveBlock{dev[2], 0.0},
                 McrBlock{cand.mcr[2]},
                 LoadBlock{load.r_load, load.c_load}};
}

Chain critical_chain(const DeviceRecord& s1, const DeviceRecord& s2, const MCRPhysical& mcr1, double l_s,
                     std::optional<std::pair<double, double>> match)
{
    Chain c;
    if (match)
        c.push_back(InputMatchBlock{match->first, match->second});
    c.push_back(ActiveBlock{s1, l_s});
    c.push_back(McrBlock{mcr1});
    c.push_back(ActiveBlock{s2, 0.0});
    return c;
}

cplx input_impedance(const Chain& chain, double omega)
{
    const Abcd m = cascade(chain, omega);
    if (std::abs(m(1, 0)) == 0.0)
        return {kInf, 0.0};
    return m(0, 0) / m(1, 0);
}

cplx input_reflection(const Chain& chain, double omega)
{
    return reflection(input_impedance(chain, omega));
}

double gain_to_node_db(const Chain& chain, double omega, std::size_t node)
{
    const Abcd total = cascade(chain, omega);
    const cplx a_suffix = node >= chain.size() ? cplx(1.0) : cascade(chain, omega, node)(0, 0);
    return db20(std::abs(2.0 * a_suffix / (total(0, 0) + kZ0 * total(1, 0))));
}

std::vector<std::size_t> active_indices(const Chain& chain)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < chain.size(); ++i)
        if (std::holds_alternative<ActiveBlock>(chain[i]))
            idx.push_back(i);
    return idx;
}

std::vector<double> stage_gains_db(const Chain& chain, double omega)
{
    const auto act = active_indices(chain);
    std::vector<cplx> a_suffix;
    for (std::size_t i : act)
        a_suffix.push_back(cascade(chain, omega, i)(0, 0));
    a_suffix.push_back(1.0);
    std::vector<double> g;
    for (std::size_t i = 0; i < act.size(); ++i)
        g.push_back(db20(std::abs(a_suffix[i + 1] / a_suffix[i])));
    return g;
}

SmallSignal small_signal(const Chain& chain, const std::vector<double>& grid_ghz)
{
    if (grid_ghz.empty())
        throw GridMismatch("empty frequency grid");
    const bool has_load = !chain.empty() && std::holds_alternative<LoadBlock>(chain.back());
    const std::size_t out_end = has_load ? chain.size() - 1 : chain.size();

    SmallSignal r;
    for (double f : grid_ghz) {
        const double w = ghz_to_omega(f);
        const Abcd m = cascade(chain, w);
        r.gain_db.push_back(db20(std::abs(2.0 / (m(0, 0) + kZ0 * m(1, 0)))));
        const cplx zin = std::abs(m(1, 0)) == 0.0 ? cplx(kInf, 0.0) : m(0, 0) / m(1, 0);
        r.s11_db.push_back(reflection_db(reflection(zin)));

        const Abcd n = cascade(chain, w, 0, out_end);
        const cplx zout = (n(1, 1) * kZ0 + n(0, 1)) / (n(1, 0) * kZ0 + n(0, 0));
        r.s22_db.push_back(reflection_db(reflection(zout)));
    }
    return r;
}


double available_gain(const Eigen::Matrix2cd& y, cplx ys)
{
    const cplx yout = y(1, 1) - y(0, 1) * y(1, 0) / (y(0, 0) + ys);
    return std::norm(y(1, 0)) * ys.real() / (std::norm(y(0, 0) + ys) * yout.real());
}

cplx output_admittance(const Eigen::Matrix2cd& y, cplx ys)
{
    return y(1, 1) - y(0, 1) * y(1, 0) / (y(0, 0) + ys);
}

double mcr_available_gain(const McrBlock& m, cplx ys, double omega)
{
    return available_gain(block_y(Block{m}, omega), ys);
}

NoiseResult noise_figure(const Chain& chain, double f_ghz)
{
    const double w = ghz_to_omega(f_ghz);
    const auto act = active_indices(chain);
    if (act.empty())
        throw DegenerateNetwork("noise figure needs at least one active stage");
    const cplx gamma = input_reflection(chain, w);

    // Source admittance of the first stage: everything in front of it, fed from 50 Ω.
    cplx ys = 1.0 / kZ0;
    if (act[0] > 0) {
        const Abcd pre = cascade(chain, w, 0, act[0]);
        ys = (pre(1, 0) * kZ0 + pre(0, 0)) / (pre(1, 1) * kZ0 + pre(0, 1));
    }

    NoiseResult r;
    double f_total = 0.0;
    double g_cum = 1.0;
    for (std::size_t i = 0; i < act.size(); ++i) {
        const auto& d = std::get<ActiveBlock>(chain[act[i]]).device;
        const Eigen::Matrix2cd ya = block_y(chain[act[i]], w);
        const double ga = available_gain(ya, ys);
        ys = output_admittance(ya, ys);

        // The MCR right after the stage counts as part of it.
        double loss = 1.0;
        const std::size_t b = act[i] + 1;
        if (b < chain.size() && std::holds_alternative<McrBlock>(chain[b])) {
            const Eigen::Matrix2cd ym = block_y(chain[b], w);
            loss = 1.0 / available_gain(ym, ys);
            ys = output_admittance(ym, ys);
        }
        double fi = from_db10(d.nf_min);
        if (i == 0)
            fi += kMismatchNoise * std::norm(gamma);
        fi += (loss - 1.0) / ga;
        r.per_stage_nf_db.push_back(db10(fi));
        f_total += i == 0 ? fi : (fi - 1.0) / g_cum;
        g_cum *= ga / loss;
    }
    r.nf_db = db10(f_total);
    return r;
}

CompressionResult compression(const Chain& chain, double f_ghz)
{
    const double w = ghz_to_omega(f_ghz);
    const auto act = active_indices(chain);
    if (act.empty())
        throw DegenerateNetwork("compression needs at least one active stage");
    const auto gains = stage_gains_db(chain, w);
    double inv = 0.0;
    double g_cum = 1.0;
    for (std::size_t i = 0; i < act.size(); ++i) {
        const auto& d = std::get<ActiveBlock>(chain[act[i]]).device;
        inv += g_cum / from_db10(d.ip1db_stage);
        g_cum *= from_db10(gains[i]);
    }
    CompressionResult r;
    r.ip1db_dbm = -db10(inv);
    const Abcd m = cascade(chain, w);
    r.op1db_dbm = r.ip1db_dbm + db20(std::abs(2.0 / (m(0, 0) + kZ0 * m(1, 0)))) - 1.0;
    return r;
}

bool SimReport::all_pass() const
{
    if (!error.empty() || pass_flags.empty())
        return false;
    return std::all_of(pass_flags.begin(), pass_flags.end(), [](const auto& kv) { return kv.second; });
}

double SimReport::total_violation() const
{
    double s = 0;
    for (const auto& [k, v] : violations)
        s += v;
    return s;
}

void apply_constraints(SimReport& r, const DesignSpec& spec)
{
    const auto mask = in_band_mask(spec, r.freq_grid);
    double g_min = kInf, g_max = -kInf, s11_max = -kInf;
    for (std::size_t i = 0; i < r.freq_grid.size(); ++i) {
        if (!mask[i])
            continue;
        g_min = std::min(g_min, r.gain_db[i]);
        g_max = std::max(g_max, r.gain_db[i]);
        s11_max = std::max(s11_max, r.s11_db[i]);
    }
    const bool gain_on = std::isfinite(spec.gain) && std::isfinite(g_min);
    r.violations["gain"] = gain_on ? std::max(0.0, std::abs(spec.gain - g_min) - 3.0) : 0.0;
    r.violations["ripple"] = gain_on ? std::max(0.0, g_max - g_min - 3.0) : 0.0;
    r.violations["nf"] = std::isfinite(spec.nf_max) ? std::max(0.0, r.nf_db - spec.nf_max) : 0.0;
    r.violations["ip1db"] = std::isfinite(spec.ip1db_min) ? std::max(0.0, spec.ip1db_min - r.ip1db_dbm) : 0.0;
    r.violations["s11"] =
        std::isfinite(spec.s11_max) && std::isfinite(s11_max) ? std::max(0.0, s11_max - spec.s11_max) : 0.0;
    for (const auto& name : constraint_names())
        r.pass_flags[name] = r.violations[name] == 0.0;
}

namespace {

void mark_failed(SimReport& r, const std::string& why)
{
    r.error = why;
    for (const auto& name : constraint_names()) {
        r.pass_flags[name] = false;
        r.violations[name] = kInf;
    }
}

} // namespace

SimReport evaluate_chain(const Chain& chain, const DesignSpec& spec, std::optional<std::size_t> gain_node)
{
    hf::record();
    SimReport r;
    r.hf_eval_count_delta = 1;
    r.freq_grid = band_grid(spec);
    try {
        auto ss = small_signal(chain, r.freq_grid);
        if (gain_node) {
            for (std::size_t i = 0; i < r.freq_grid.size(); ++i)
                ss.gain_db[i] = gain_to_node_db(chain, ghz_to_omega(r.freq_grid[i]), *gain_node);
        }
        r.gain_db = std::move(ss.gain_db);
        r.s11_db = std::move(ss.s11_db);
        r.s22_db = std::move(ss.s22_db);
        for (double f : r.freq_grid)
            r.nf_curve_db.push_back(noise_figure(chain, f).nf_db);
        const auto nf = noise_figure(chain, spec.fc);
        r.nf_db = nf.nf_db;
        r.per_stage_nf_db = nf.per_stage_nf_db;
        const auto cp = compression(chain, spec.fc);
        r.ip1db_dbm = cp.ip1db_dbm;
        r.op1db_dbm = cp.op1db_dbm;
        r.per_stage_gain_db = stage_gains_db(chain, ghz_to_omega(spec.fc));
        for (std::size_t i : active_indices(chain)) {
            const auto& d = std::get<ActiveBlock>(chain[i]).device;
            r.per_stage_ip1db_dbm.push_back(d.ip1db_stage);
            r.dc_current_ma += d.id;
        }
        const auto finite = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
        };
        if (!finite(r.gain_db) || !finite(r.s11_db) || !std::isfinite(r.nf_db) || !std::isfinite(r.ip1db_dbm))
            throw SingularNetwork("non-finite response");
        apply_constraints(r, spec);
    } catch (const Error& e) {
        mark_failed(r, e.what());
    }
    return r;
}

SimReport fullchain_report(const CandidateDesign& cand, const DesignSpec& spec, const DeviceKb& kb,
                           const LoadModel& load)
{
    Chain chain;
    try {
        chain = assemble(cand, kb, load);
    } catch (const Error& e) {
        hf::record();
        SimReport r;
        r.hf_eval_count_delta = 1;
        r.freq_grid = band_grid(spec);
        mark_failed(r, e.what());
        return r;
    }
    return evaluate_chain(chain, spec);
}

// JSON

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& path)
{
    if (!j.is_object() || !j.contains(key))
        throw SchemaError(fmt::format("{}{}: missing required field", path.empty() ? "" : path + ".", key));
    return j.at(key);
}

double num_field(const nlohmann::json& j, const char* key, const std::string& path)
{
    return json_number(field(j, key, path), path.empty() ? key : path + "." + key);
}

std::array<double, 3> triple(const nlohmann::json& j, const std::string& path)
{
    if (!j.is_array() || j.size() != 3)
        throw SchemaError(fmt::format("{}: expected 3 numbers", path));
    return {json_number(j[0], path + "[0]"), json_number(j[1], path + "[1]"), json_number(j[2], path + "[2]")};
}

nlohmann::json curve_json(const std::vector<double>& v)
{
    nlohmann::json a = nlohmann::json::array();
    for (double x : v)
        a.push_back(number_json(x));
    return a;
}

std::vector<double> curve_from(const nlohmann::json& j, const std::string& path)
{
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i)
        v.push_back(json_number(j[i], fmt::format("{}[{}]", path, i)));
    return v;
}

} // namespace

void to_json(nlohmann::json& j, const CandidateDesign& c)
{
    j = nlohmann::json{
        {"x1", {{"width", c.width}, {"vgs", c.vgs}}},
        {"x2", c.mcr},
        {"x3", {{"l_par", c.l_par}, {"l_g", c.l_g}, {"l_s", c.l_s}}},
        {"meta", {{"agent", c.meta.agent}, {"call_id", c.meta.call_id}, {"timestamp", c.meta.timestamp}}}};
}

void from_json(const nlohmann::json& j, CandidateDesign& c)
{
    c = CandidateDesign{};
    const auto& x1 = field(j, "x1", "");
    c.width = triple(field(x1, "width", "x1"), "x1.width");
    c.vgs = triple(field(x1, "vgs", "x1"), "x1.vgs");
    const auto& x2 = field(j, "x2", "");
    if (!x2.is_array() || x2.size() != 3)
        throw SchemaError("x2: expected 3 MCR blocks");
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string path = fmt::format("x2[{}]", i);
        auto& m = c.mcr[i];
        m.k = num_field(x2[i], "k", path);
        m.l1 = num_field(x2[i], "l1", path);
        m.l2 = num_field(x2[i], "l2", path);
        m.r1 = num_field(x2[i], "r1", path);
        m.r2 = num_field(x2[i], "r2", path);
        m.c1 = num_field(x2[i], "c1", path);
        m.c2 = num_field(x2[i], "c2", path);
    }
    const auto& x3 = field(j, "x3", "");
    c.l_par = num_field(x3, "l_par", "x3");
    c.l_g = num_field(x3, "l_g", "x3");
    c.l_s = num_field(x3, "l_s", "x3");
    if (j.contains("meta")) {
        const auto& m = j.at("meta");
        c.meta.agent = m.value("agent", std::string{});
        c.meta.call_id = m.value("call_id", std::string{});
        c.meta.timestamp = m.value("timestamp", std::int64_t{0});
    }
}

void to_json(nlohmann::json& j, const SimReport& r)
{
    nlohmann::json viol = nlohmann::json::object();
    for (const auto& [k, v] : r.violations)
        viol[k] = number_json(v);
    j = nlohmann::json{{"freq_grid", r.freq_grid},
                       {"gain_db", curve_json(r.gain_db)},
                       {"s11_db", curve_json(r.s11_db)},
                       {"s22_db", curve_json(r.s22_db)},
                       {"nf_db", number_json(r.nf_db)},
                       {"nf_curve_db", curve_json(r.nf_curve_db)},
                       {"ip1db_dbm", number_json(r.ip1db_dbm)},
                       {"op1db_dbm", number_json(r.op1db_dbm)},
                       {"per_stage_gain_db", curve_json(r.per_stage_gain_db)},
                       {"per_stage_nf_db", curve_json(r.per_stage_nf_db)},
                       {"per_stage_ip1db_dbm", curve_json(r.per_stage_ip1db_dbm)},
                       {"dc_current_ma", r.dc_current_ma},
                       {"pass_flags", r.pass_flags},
                       {"violations", viol},
                       {"hf_eval_count_delta", r.hf_eval_count_delta},
                       {"error", r.error}};
}

void from_json(const nlohmann::json& j, SimReport& r)
{
    r = SimReport{};
    r.freq_grid = curve_from(field(j, "freq_grid", "report"), "report.freq_grid");
    r.gain_db = curve_from(field(j, "gain_db", "report"), "report.gain_db");
    r.s11_db = curve_from(field(j, "s11_db", "report"), "report.s11_db");
    r.s22_db = curve_from(field(j, "s22_db", "report"), "report.s22_db");
    r.nf_db = num_field(j, "nf_db", "report");
    r.nf_curve_db = curve_from(j.value("nf_curve_db", nlohmann::json::array()), "report.nf_curve_db");
    r.ip1db_dbm = num_field(j, "ip1db_dbm", "report");
    r.op1db_dbm = j.contains("op1db_dbm") ? num_field(j, "op1db_dbm", "report") : 0.0;
    r.per_stage_gain_db = curve_from(field(j, "per_stage_gain_db", "report"), "report.per_stage_gain_db");
    r.per_stage_nf_db = curve_from(field(j, "per_stage_nf_db", "report"), "report.per_stage_nf_db");
    r.per_stage_ip1db_dbm = curve_from(field(j, "per_stage_ip1db_dbm", "report"), "report.per_stage_ip1db_dbm");
    r.dc_current_ma = j.value("dc_current_ma", 0.0);
    for (const auto& [k, v] : field(j, "pass_flags", "report").items())
        r.pass_flags[k] = v.get<bool>();
    for (const auto& [k, v] : field(j, "violations", "report").items())
        r.violations[k] = json_number(v, "report.violations." + k);
    r.hf_eval_count_delta = j.value("hf_eval_count_delta", std::int64_t{0});
    r.error = j.value("error", std::string{});
}

} // namespace rfamp
