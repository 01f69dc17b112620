#include "rfamp/memory.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>

#include <fmt/args.h>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace rfamp {

namespace {

constexpr int kMemorySchema = 1;

template <class T>
T field(const nlohmann::json& j, const char* key, const char* record)
{
    if (!j.contains(key))
        throw SchemaError(fmt::format("{}.{}: missing required field", record, key));
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(fmt::format("{}.{}: {}", record, key, e.what()));
    }
}

std::vector<double> number_list(const nlohmann::json& j, const char* key, const char* record)
{
    if (!j.contains(key) || !j.at(key).is_array())
        throw SchemaError(fmt::format("{}.{}: expected a list", record, key));
    std::vector<double> v;
    for (std::size_t i = 0; i < j.at(key).size(); ++i)
        v.push_back(json_number(j.at(key)[i], fmt::format("{}.{}[{}]", record, key, i)));
    return v;
}

nlohmann::json number_list_json(const std::vector<double>& v)
{
    nlohmann::json a = nlohmann::json::array();
    for (double x : v)
        a.push_back(number_json(x));
    return a;
}

const std::string& run_key(const KbRecord& r) { return r.run_id; }
const std::string& run_key(const EbRecord& r) { return r.run_id; }

} // namespace

void validate(const KbRecord& r)
{
    r.spec.validate();
    if (r.candidate_hash != hex64(r.candidate.hash()))
        throw SchemaError(fmt::format("kb record: candidate_hash {} does not match the candidate ({})",
                                      r.candidate_hash, hex64(r.candidate.hash())));
}

void validate(const EbRecord& r)
{
    r.spec.validate();
    const auto n = static_cast<std::size_t>(r.spec.stages);
    if (r.per_stage_ip1db.size() != n || r.per_stage_gain.size() != n || r.power_split.size() != n)
        throw SchemaError(fmt::format("eb record: per-stage lists must have {} entries", n));
}

void to_json(nlohmann::json& j, const KbRecord& r)
{
    j = nlohmann::json{{"schema_version", kMemorySchema},
                       {"id", r.id},
                       {"spec", r.spec},
                       {"candidate", r.candidate},
                       {"report", r.report},
                       {"created_at", r.created_at},
                       {"run_id", r.run_id},
                       {"candidate_hash", r.candidate_hash}};
}

void from_json(const nlohmann::json& j, KbRecord& r)
{
    r.id = field<std::int64_t>(j, "id", "kb");
    r.spec = field<DesignSpec>(j, "spec", "kb");
    r.candidate = field<CandidateDesign>(j, "candidate", "kb");
    r.report = field<SimReport>(j, "report", "kb");
    r.created_at = field<double>(j, "created_at", "kb");
    r.run_id = field<std::string>(j, "run_id", "kb");
    r.candidate_hash = field<std::string>(j, "candidate_hash", "kb");
}

void to_json(nlohmann::json& j, const EbRecord& r)
{
    j = nlohmann::json{{"schema_version", kMemorySchema},
                       {"id", r.id},
                       {"spec", r.spec},
                       {"system_nf", number_json(r.system_nf)},
                       {"first_stage_nf", number_json(r.first_stage_nf)},
                       {"system_ip1db", number_json(r.system_ip1db)},
                       {"per_stage_ip1db", number_list_json(r.per_stage_ip1db)},
                       {"per_stage_gain", number_list_json(r.per_stage_gain)},
                       {"power_split", number_list_json(r.power_split)},
                       {"template_id", r.template_id},
                       {"notes", r.notes},
                       {"run_id", r.run_id},
                       {"candidate_hash", r.candidate_hash}};
}

void from_json(const nlohmann::json& j, EbRecord& r)
{
    r.id = field<std::int64_t>(j, "id", "eb");
    r.spec = field<DesignSpec>(j, "spec", "eb");
    for (auto [key, dst] : {std::pair{"system_nf", &r.system_nf}, std::pair{"first_stage_nf", &r.first_stage_nf},
                            std::pair{"system_ip1db", &r.system_ip1db}}) {
        if (!j.contains(key))
            throw SchemaError(fmt::format("eb.{}: missing required field", key));
        *dst = json_number(j.at(key), fmt::format("eb.{}", key));
    }
    r.per_stage_ip1db = number_list(j, "per_stage_ip1db", "eb");
    r.per_stage_gain = number_list(j, "per_stage_gain", "eb");
    r.power_split = number_list(j, "power_split", "eb");
    r.template_id = field<std::string>(j, "template_id", "eb");
    r.notes = field<std::string>(j, "notes", "eb");
    r.run_id = field<std::string>(j, "run_id", "eb");
    r.candidate_hash = field<std::string>(j, "candidate_hash", "eb");
}

// Store

template <class Record>
JsonlStore<Record>::JsonlStore(std::filesystem::path file) : file_(std::move(file))
{
    std::ifstream in(file_);
    if (!in) {
        if (std::filesystem::exists(file_))
            throw StorageError(fmt::format("{}: cannot open for reading", file_.string()));
        return;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        Record r;
        try {
            r = nlohmann::json::parse(line).get<Record>();
        } catch (const std::exception& e) {
            throw StorageError(fmt::format("{}:{}: {}", file_.string(), lineno, e.what()));
        }
        keys_.emplace(std::pair{run_key(r), r.candidate_hash}, r.id);
        records_.push_back(std::move(r));
    }
}

template <class Record>
std::int64_t JsonlStore<Record>::put(Record r)
{
    validate(r);
    std::lock_guard lock(write_mutex_);
    const auto key = std::pair{run_key(r), r.candidate_hash};
    if (const auto it = keys_.find(key); it != keys_.end())
        return it->second;
    r.id = records_.empty() ? 1 : records_.back().id + 1;
    if (!file_.parent_path().empty())
        std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app);
    if (!out)
        throw StorageError(fmt::format("{}: cannot open for appending", file_.string()));
    out << nlohmann::json(r).dump() << '\n';
    out.flush();
    if (!out)
        throw StorageError(fmt::format("{}: write failed", file_.string()));
    keys_.emplace(key, r.id);
    records_.push_back(std::move(r));
    return records_.back().id;
}

template <class Record>
std::optional<Record> JsonlStore<Record>::get(std::int64_t id) const
{
    const auto it = std::lower_bound(records_.begin(), records_.end(), id,
                                     [](const Record& r, std::int64_t v) { return r.id < v; });
    if (it == records_.end() || it->id != id)
        return std::nullopt;
    return *it;
}

template class JsonlStore<KbRecord>;
template class JsonlStore<EbRecord>;

MemoryStore::MemoryStore(const std::filesystem::path& dir) : kb(dir / "kb.jsonl"), eb(dir / "eb.jsonl")
{
    std::filesystem::create_directories(dir);
}

// Retrieval

namespace {

struct Axis {
    double weight;
    double span;
};

// Spans of the ten-row benchmark suite.
constexpr std::array<Axis, 6> kAxes{{{2.0, 1.6094379124341003},  // ln 50 − ln 10
                                     {2.0, 70.0},
                                     {1.0, 15.0},
                                     {1.0, 5.0},
                                     {1.0, 2.5},
                                     {1.0, 10.0}}};

double axis_distance(double a, double b, double span)
{
    if (std::isinf(a) || std::isinf(b))
        return a == b ? 0.0 : 1.0;
    return std::min(1.0, std::abs(a - b) / span);
}

} // namespace

double similarity(const DesignSpec& a, const DesignSpec& b)
{
    const std::array<double, 6> va{std::log(a.fc), a.fbw, a.power, a.gain, a.nf_max, a.ip1db_min};
    const std::array<double, 6> vb{std::log(b.fc), b.fbw, b.power, b.gain, b.nf_max, b.ip1db_min};
    double d = 0.0;
    double wsum = 0.0;
    for (std::size_t i = 0; i < kAxes.size(); ++i) {
        d += kAxes[i].weight * axis_distance(va[i], vb[i], kAxes[i].span);
        wsum += kAxes[i].weight;
    }
    return std::clamp(1.0 - d / wsum, 0.0, 1.0);
}

namespace {

template <class Record>
std::vector<const Record*> top_k(const std::vector<Record>& records, const DesignSpec& spec, int k,
                                 std::vector<double>* scores = nullptr)
{
    if (k < 1)
        throw SchemaError("k: must be at least 1");
    std::vector<std::pair<double, const Record*>> ranked;
    for (const auto& r : records)
        ranked.emplace_back(similarity(spec, r.spec), &r);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first)
            return x.first > y.first;
        return x.second->id > y.second->id;
    });
    ranked.resize(std::min(ranked.size(), static_cast<std::size_t>(k)));
    std::vector<const Record*> out;
    for (const auto& [s, r] : ranked) {
        out.push_back(r);
        if (scores)
            scores->push_back(s);
    }
    return out;
}

} // namespace

std::vector<KbRecord> kb_query(const KbStore& kb, const DesignSpec& spec, int k)
{
    std::vector<KbRecord> out;
    for (const KbRecord* r : top_k(kb.all(), spec, k))
        out.push_back(*r);
    return out;
}

ExperienceHints eb_hints(const EbStore& eb, const DesignSpec& spec, int k)
{
    if (eb.size() == 0)
        throw NoExperience("experience base is empty");
    std::vector<double> w;
    const auto top = top_k(eb.all(), spec, k, &w);
    double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    if (wsum <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0);
        wsum = static_cast<double>(w.size());
    }

    ExperienceHints h;
    const auto mean = [&](auto member) {
        std::vector<double> m((top.front()->*member).size(), 0.0);
        for (std::size_t r = 0; r < top.size(); ++r) {
            const auto& v = top[r]->*member;
            if (v.size() != m.size())
                throw SchemaError("eb records disagree on the stage count");
            for (std::size_t i = 0; i < m.size(); ++i)
                m[i] += w[r] / wsum * v[i];
        }
        return m;
    };
    h.power_split_hint = mean(&EbRecord::power_split);
    h.per_stage_gain_hint = mean(&EbRecord::per_stage_gain);

    double nf_margin = kInf;
    double ip_margin = kInf;
    for (const EbRecord* r : top) {
        nf_margin = std::min(nf_margin, spec.nf_max - r->system_nf);
        ip_margin = std::min(ip_margin, r->system_ip1db - spec.ip1db_min);
    }
    h.headroom_estimates = {{"nf", nf_margin}, {"ip1db", ip_margin}};
    return h;
}

// Templates

std::string to_string(TemplateId t)
{
    switch (t) {
    case TemplateId::Success: return "success";
    case TemplateId::Partial: return "partial";
    case TemplateId::Infeasible: return "infeasible";
    }
    return "partial";
}

std::string render_template(TemplateId t, const std::map<std::string, std::string>& slots)
{
    static const std::map<TemplateId, std::string> text{
        {TemplateId::Success,
         "Met every constraint. NF {nf} dB with {nf1} dB from stage 1; IP1dB {ip1db} dBm; stage gains {gains} dB; "
         "power split {split}."},
        {TemplateId::Partial,
         "Violated {violations}. NF {nf} dB with {nf1} dB from stage 1; IP1dB {ip1db} dBm; stage gains {gains} dB; "
         "power split {split}."},
        {TemplateId::Infeasible, "No realization within {power} mA. Last evaluation failed with: {reason}."},
    };
    fmt::dynamic_format_arg_store<fmt::format_context> store;
    for (const auto& [k, v] : slots)
        store.push_back(fmt::arg(k.c_str(), v));
    try {
        return fmt::vformat(text.at(t), store);
    } catch (const fmt::format_error& e) {
        throw SchemaError(fmt::format("template {}: {}", to_string(t), e.what()));
    }
}

EbRecord make_eb_record(const DesignSpec& spec, const CandidateDesign& cand, const SimReport& report,
                        const std::vector<double>& power_split, const std::string& run_id)
{
    EbRecord r;
    r.spec = spec;
    r.system_nf = report.nf_db;
    r.first_stage_nf = report.per_stage_nf_db.empty() ? report.nf_db : report.per_stage_nf_db.front();
    r.system_ip1db = report.ip1db_dbm;
    r.per_stage_ip1db = report.per_stage_ip1db_dbm;
    r.per_stage_gain = report.per_stage_gain_db;
    r.power_split = power_split;
    r.run_id = run_id;
    r.candidate_hash = hex64(cand.hash());

    const auto num = [](double v) { return fmt::format("{:.2f}", v); };
    const auto list = [](const std::vector<double>& v) { return fmt::format("[{:.2f}]", fmt::join(v, ", ")); };
    TemplateId t = TemplateId::Partial;
    std::map<std::string, std::string> slots;
    if (!report.error.empty()) {
        t = TemplateId::Infeasible;
        slots = {{"power", num(spec.power)}, {"reason", report.error}};
    } else {
        t = report.all_pass() ? TemplateId::Success : TemplateId::Partial;
        std::vector<std::string> viol;
        for (const auto& [k, v] : report.violations)
            if (v > 0.0)
                viol.push_back(fmt::format("{} by {:.2f}", k, v));
        slots = {{"nf", num(report.nf_db)},   {"nf1", num(r.first_stage_nf)}, {"ip1db", num(report.ip1db_dbm)},
                 {"gains", list(r.per_stage_gain)}, {"split", list(power_split)},
                 {"violations", fmt::format("{}", fmt::join(viol, ", "))}};
    }
    r.template_id = to_string(t);
    r.notes = render_template(t, slots);
    return r;
}

} // namespace rfamp
