#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfamp/evaluator.hpp"
#include "rfamp/spec.hpp"

namespace rfamp {

/// A solved design and its measured performance.
struct KbRecord {
    std::int64_t id = 0;  // assigned by the store
    DesignSpec spec;
    CandidateDesign candidate;
    SimReport report;
    double created_at = 0;
    std::string run_id;
    std::string candidate_hash;  // hex of candidate.hash(); must match on put

    bool operator==(const KbRecord&) const = default;
};

/// Per-stage distributions of one finished task, with a rendered summary.
struct EbRecord {
    std::int64_t id = 0;
    DesignSpec spec;
    double system_nf = 0;       // dB
    double first_stage_nf = 0;  // dB
    double system_ip1db = 0;    // dBm
    std::vector<double> per_stage_ip1db;
    std::vector<double> per_stage_gain;
    std::vector<double> power_split;
    std::string template_id;
    std::string notes;
    std::string run_id;
    std::string candidate_hash;

    bool operator==(const EbRecord&) const = default;
};

void validate(const KbRecord& r);
void validate(const EbRecord& r);

void to_json(nlohmann::json& j, const KbRecord& r);
void from_json(const nlohmann::json& j, KbRecord& r);
void to_json(nlohmann::json& j, const EbRecord& r);
void from_json(const nlohmann::json& j, EbRecord& r);

/// Append-only JSON-lines store. The index is rebuilt when the file is opened; writes
/// go through one mutex. A put with a (run_id, candidate_hash) pair already present
/// returns the existing id and writes nothing.
template <class Record>
class JsonlStore {
public:
    explicit JsonlStore(std::filesystem::path file);

    std::int64_t put(Record r);
    std::optional<Record> get(std::int64_t id) const;
    const std::vector<Record>& all() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const std::filesystem::path& path() const { return file_; }

private:
    std::filesystem::path file_;
    std::vector<Record> records_;
    std::map<std::pair<std::string, std::string>, std::int64_t> keys_;
    mutable std::mutex write_mutex_;
};

using KbStore = JsonlStore<KbRecord>;
using EbStore = JsonlStore<EbRecord>;

/// kb.jsonl and eb.jsonl under one data directory, created if missing.
struct MemoryStore {
    explicit MemoryStore(const std::filesystem::path& dir);

    KbStore kb;
    EbStore eb;
};

/// 1 − weighted L1 distance over (ln f_c, fbw, power, gain, NF, IP1dB), weights
/// (2, 2, 1, 1, 1, 1), each axis divided by its benchmark-suite span; clipped to [0, 1].
/// An axis where exactly one side is unconstrained counts as a full span apart.
double similarity(const DesignSpec& a, const DesignSpec& b);

/// The k most similar records, most recent first on ties.
std::vector<KbRecord> kb_query(const KbStore& kb, const DesignSpec& spec, int k);

struct ExperienceHints {
    std::vector<double> power_split_hint;
    std::vector<double> per_stage_gain_hint;
    /// Smallest margin seen per constraint ("nf", "ip1db"); positive means slack.
    std::map<std::string, double> headroom_estimates;
};

/// Similarity-weighted mean of the top-k records. Throws NoExperience on an empty store.
ExperienceHints eb_hints(const EbStore& eb, const DesignSpec& spec, int k);

enum class TemplateId { Success, Partial, Infeasible };
std::string to_string(TemplateId t);

/// Fills the {slot} placeholders of a fixed template. Missing slots throw SchemaError.
std::string render_template(TemplateId t, const std::map<std::string, std::string>& slots);

/// Experience record of a finished task; the template follows from the report.
EbRecord make_eb_record(const DesignSpec& spec, const CandidateDesign& cand, const SimReport& report,
                        const std::vector<double>& power_split, const std::string& run_id);

} // namespace rfamp
