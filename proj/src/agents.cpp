#include "rfamp/agents.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace rfamp {

using nlohmann::json;

AgentReport report_from_sim(const SimReport& r)
{
    AgentReport a;
    if (!r.gain_db.empty()) {
        a.metrics["gain_min_db"] = *std::min_element(r.gain_db.begin(), r.gain_db.end());
        a.metrics["gain_max_db"] = *std::max_element(r.gain_db.begin(), r.gain_db.end());
    }
    a.metrics["nf_db"] = r.nf_db;
    a.metrics["ip1db_dbm"] = r.ip1db_dbm;
    a.metrics["dc_current_ma"] = r.dc_current_ma;
    for (const auto& [k, v] : r.violations)
        if (v > 0.0)
            a.violated.push_back({k, v});
    if (!r.error.empty()) {
        a.violated.push_back({"evaluation", kInf});
        a.failure_reasons.push_back(r.error);
    }
    a.success = a.violated.empty();
    return a;
}

// ReAct loop

namespace {

ToolResult format_error(const std::string& call_id, const std::string& what)
{
    ToolResult r;
    r.call_id = call_id;
    r.ok = false;
    r.error = "FormatError: " + what + ". Reply with one tool call or a Terminate action.";
    return r;
}

} // namespace

Transcript react_loop(Policy& policy, const ToolFn& tools, const TaskFrame& frame, const LoopLimits& limits)
{
    if (limits.max_turns < 1)
        throw SchemaError("max_turns: must be at least 1");
    Transcript t;
    t.frame = frame;
    const double t0 = limits.clock ? limits.clock() : 0.0;
    std::int64_t hf_used = 0;
    std::int64_t calls = 0;
    std::optional<AgentReport> final_report;
    std::string stop_reason = "max turns reached";

    for (int turn = 1; turn <= limits.max_turns; ++turn) {
        const bool wall_left = !limits.clock || limits.clock() - t0 < limits.budget.wall_seconds;
        if (calls >= limits.budget.tool_calls || hf_used >= limits.budget.hf_evals || !wall_left) {
            stop_reason = "budget exhausted";
            break;
        }
        std::optional<PolicyTurn> pt;
        for (int attempt = 0; attempt < 2 && !pt; ++attempt) {
            try {
                pt = policy.next(frame, t.turns);
            } catch (const PolicyError& e) {
                PolicyTurn bad;
                bad.malformed = true;
                bad.thought = e.what();
                if (const auto* m = dynamic_cast<const MalformedAction*>(&e))
                    bad.tokens = m->tokens;
                bad.observation = format_error(fmt::format("{}-{}-{}", frame.agent, turn, attempt), e.what());
                t.turns.push_back(std::move(bad));
            }
        }
        if (!pt)
            continue;
        if (!pt->action) {
            if (!pt->final_report)
                pt->final_report = AgentReport{};
            final_report = pt->final_report;
            t.turns.push_back(std::move(*pt));
            break;
        }
        ToolCall call = *pt->action;
        call.call_id = fmt::format("{}-{}", frame.agent, turn);
        call.timestamp = limits.clock ? static_cast<std::int64_t>(std::llround(limits.clock() * 1000.0)) : 0;
        pt->action = call;
        pt->observation = tools(call);
        ++calls;
        hf_used += pt->observation->hf_evals_used;
        t.turns.push_back(std::move(*pt));
    }

    if (final_report) {
        t.report = *final_report;
    } else {
        t.report = AgentReport{};
        t.report.failure_reasons.push_back(stop_reason);
        t.report.budget_exhausted = stop_reason == "budget exhausted";
        t.report.violated.push_back({"terminated", 0.0});
    }
    t.report.tokens = {};
    for (const auto& turn : t.turns)
        t.report.tokens += turn.tokens;
    t.report.tool_calls_made = static_cast<int>(calls);
    t.report.hf_evals = hf_used;
    return t;
}

// Candidates

std::uint64_t CriticalCandidate::hash() const
{
    if (full)
        return full->hash();
    std::vector<double> v;
    for (const auto& s : active.stages) {
        v.push_back(s.width);
        v.push_back(s.vbias);
    }
    const auto& m = passive.mcr1;
    for (double x : {m.k, m.l1, m.l2, m.r1, m.r2, m.c1, m.c2, passive.l_s, passive.l_par, passive.l_g})
        v.push_back(x);
    return hash_doubles(v);
}

namespace {

bool dispatched(const PolicyTurn& t) { return t.action && t.observation && !t.malformed; }

std::map<std::string, double> critical_violations(const SimReport& r)
{
    std::map<std::string, double> v;
    for (const char* k : {"nf", "ip1db"})
        if (const auto it = r.violations.find(k); it != r.violations.end())
            v[k] = it->second;
    return v;
}

PolicyTurn call_turn(std::string thought, ToolName tool, json args)
{
    PolicyTurn t;
    t.thought = std::move(thought);
    t.action = ToolCall{tool, std::move(args), {}, 0};
    return t;
}

PolicyTurn terminate_turn(std::string thought, AgentReport report)
{
    PolicyTurn t;
    t.thought = std::move(thought);
    t.final_report = std::move(report);
    return t;
}

// Searcher procedure: sizing, then both match variants per configuration.

PolicyTurn scripted_searcher(const TaskFrame& frame, std::span<const PolicyTurn> transcript)
{
    const json& ctx = frame.context;
    const auto ratios = ctx.at("power_ratio_list").get<std::vector<double>>();
    const std::uint64_t seed = ctx.value("seed", std::uint64_t{1});
    std::optional<double> gain_req;
    if (ctx.contains("gain_require") && !ctx.at("gain_require").is_null())
        gain_req = json_number(ctx.at("gain_require"), "context.gain_require");

    std::vector<PolicyTurn> plan;
    plan.push_back(call_turn(fmt::format("Size the devices for power ratios {}.", ratios), ToolName::ActiveSizing,
                             json{{"power_ratio_list", ratios}}));

    std::vector<const PolicyTurn*> done;
    for (const auto& t : transcript)
        if (dispatched(t))
            done.push_back(&t);

    std::string failure;
    if (!done.empty()) {
        const ToolResult& obs = *done.front()->observation;
        if (!obs.ok) {
            failure = obs.error.value_or("active sizing failed");
        } else {
            const json& configs = obs.payload.at("active_params_dict_list");
            for (std::size_t i = 0; i < configs.size(); ++i) {
                json base{{"active_params_dict", configs[i]}};
                if (ctx.contains("nf_headroom"))
                    base["nf_headroom"] = ctx.at("nf_headroom");
                if (gain_req) {
                    json a = base;
                    a["gain_require"] = *gain_req;
                    a["seed"] = mix_seed(seed, 2 * i);
                    plan.push_back(call_turn(
                        fmt::format("Match configuration {} with the stage-2 gate held above {} dB.", i, *gain_req),
                        ToolName::ImpedanceMatching, a));
                }
                json a = base;
                a["seed"] = mix_seed(seed, 2 * i + 1);
                plan.push_back(call_turn(fmt::format("Match configuration {} without a gain constraint.", i),
                                         ToolName::ImpedanceMatching, a));
            }
        }
    }
    if (failure.empty() && done.size() < plan.size())
        return plan[done.size()];

    AgentReport r;
    int produced = 0;
    for (const auto* t : done)
        if (t->action->tool == ToolName::ImpedanceMatching && t->observation->ok)
            ++produced;
    r.metrics["candidates"] = produced;
    r.success = produced > 0;
    if (!r.success) {
        r.violated.push_back({"candidates", 1.0});
        r.failure_reasons.push_back(failure.empty() ? "no configuration could be matched" : failure);
    }
    return terminate_turn(fmt::format("Produced {} critical-stage candidates.", produced), r);
}

// Refiner procedure, replayed from the transcript.

enum class Phase { Match, Plan, Eval, Done };

struct RefinerState {
    ActiveConfig active;
    Stage2Passive s2;
    std::vector<double> head;
    std::optional<double> gain_require;
    double headroom = kDefaultHeadroom;
    int gain_attempts = 0;
    std::optional<std::vector<double>> gain_req_list;
    std::vector<double> stage_gain;
    std::array<MCRPhysical, 2> planned{};
    std::optional<CandidateDesign> design;
    Phase phase = Phase::Plan;
    int plan_failures = 0;
    int match_reruns = 0;
    bool stage3_upgraded = false;
    std::string note;
    AgentReport done;
};

constexpr int kMaxPlanFailures = 2;
constexpr int kMaxMatchReruns = 3;

std::vector<double> number_vector(const json& j, const std::string& path)
{
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i)
        v.push_back(json_number(j[i], fmt::format("{}[{}]", path, i)));
    return v;
}

bool linearity_or_gain(const SimReport& r)
{
    for (const char* k : {"ip1db", "gain", "ripple"})
        if (const auto it = r.violations.find(k); it != r.violations.end() && it->second > 0.0)
            return true;
    return false;
}

/// Largest stage-3 device the remaining current allows, if it draws more than the current one.
std::optional<DeviceRecord> bigger_stage3(const DeviceKb& kb, const DesignSpec& spec, const ActiveConfig& a)
{
    const double left = spec.power - a.stages[0].id - a.stages[1].id;
    const auto feasible = lookup_by_current(kb.table(a.stages[2].kind), left);
    if (feasible.empty())
        return std::nullopt;
    const auto best = std::max_element(feasible.begin(), feasible.end(), [](const auto& x, const auto& y) {
        return std::tie(x.width, x.vbias) < std::tie(y.width, y.vbias);
    });
    if (best->id <= a.stages[2].id * (1.0 + 1e-9))
        return std::nullopt;
    return *best;
}

void finish(RefinerState& st, AgentReport r, std::string note)
{
    st.done = std::move(r);
    st.note = std::move(note);
    st.phase = Phase::Done;
}

void fail(RefinerState& st, const std::string& reason, const std::optional<SimReport>& last)
{
    AgentReport r = last ? report_from_sim(*last) : AgentReport{};
    r.success = false;
    if (r.violated.empty())
        r.violated.push_back({"infeasible", 0.0});
    r.failure_reasons.push_back(reason);
    r.infeasible = true;
    finish(st, std::move(r), reason);
}

void on_full_report(RefinerState& st, const DesignSpec& spec, const DeviceKb& kb, const SimReport& rep)
{
    const AttemptState attempt{st.headroom, st.gain_attempts, false, st.stage_gain, 2.0, 3};
    const BacktrackAction act = backtrack_decide(rep, spec, attempt);
    switch (act.kind) {
    case BacktrackKind::Accept:
        finish(st, report_from_sim(rep), "Every constraint holds.");
        return;
    case BacktrackKind::Abort:
        fail(st, "budget exhausted", rep);
        return;
    case BacktrackKind::EscalateStage1:
        if (rep.error.empty() && linearity_or_gain(rep) && !st.stage3_upgraded) {
            if (const auto dev = bigger_stage3(kb, spec, st.active)) {
                st.active.stages[2] = *dev;
                st.active.power_split.clear();
                for (const auto& s : st.active.stages)
                    st.active.power_split.push_back(s.id / st.active.total_budget);
                st.stage3_upgraded = true;
                st.gain_attempts = 0;
                st.gain_req_list.reset();
                st.phase = Phase::Plan;
                st.note = fmt::format("Raise the third-stage budget to {:.2f} mA and replan.", dev->id);
                return;
            }
        }
        fail(st, rep.error.empty() ? "needs a different stage-1 allocation" : rep.error, rep);
        return;
    case BacktrackKind::RerunStages2to4:
        if (++st.match_reruns > kMaxMatchReruns || (act.adjusted_headroom && *act.adjusted_headroom >= spec.nf_max)) {
            fail(st, "the critical stages cannot reach the noise and match targets", rep);
            return;
        }
        st.headroom = act.adjusted_headroom.value_or(st.headroom);
        st.phase = Phase::Match;
        st.note = fmt::format("Rematch the critical stages with {:.2f} dB of NF headroom.", st.headroom);
        return;
    case BacktrackKind::ReplanStage3Tighter:
        ++st.gain_attempts;
        st.gain_req_list = act.gain_constraints;
        st.phase = Phase::Plan;
        st.note = "Replan the band with more gain in the last stage.";
        return;
    case BacktrackKind::RerunStages2to4GlobalGain:
        ++st.gain_attempts;
        st.gain_req_list = act.gain_constraints;
        st.phase = Phase::Match;
        st.note = "Rematch the critical stages, then replan with a shifted gain split.";
        return;
    }
}

RefinerState replay_refiner(const TaskFrame& frame, std::span<const PolicyTurn> transcript, const DeviceKb& kb,
                            const DesignSpec& spec)
{
    const CriticalCandidate cand = frame.context.at("candidate").get<CriticalCandidate>();
    RefinerState st;
    st.active = cand.active;
    st.s2 = cand.passive;
    st.head = cand.head_gain_db;
    st.gain_require = cand.gain_require;
    st.headroom = cand.headroom;
    if (cand.full) {
        st.design = cand.full;
        st.phase = Phase::Eval;
        st.note = "Evaluate the retrieved design as it stands.";
    } else {
        st.note = "Plan the remaining two stages over the band.";
    }

    for (const auto& t : transcript) {
        if (!dispatched(t) || st.phase == Phase::Done)
            continue;
        const ToolResult& obs = *t.observation;
        switch (t.action->tool) {
        case ToolName::ImpedanceMatching:
            if (!obs.ok) {
                fail(st, obs.error.value_or("impedance matching failed"), std::nullopt);
                break;
            }
            st.s2 = obs.payload.at("passive_params_cpstages").get<Stage2Passive>();
            st.head = number_vector(obs.payload.at("sim_result_cpstages").at("gain_db"), "gain_db");
            st.phase = Phase::Plan;
            st.note = "Plan the remaining two stages on the new critical stages.";
            break;
        case ToolName::BandPlanning:
            if (!obs.ok) {
                if (++st.plan_failures >= kMaxPlanFailures) {
                    fail(st, obs.error.value_or("band planning failed"), std::nullopt);
                } else {
                    st.phase = Phase::Plan;
                    st.note = "Planning did not converge; try again from another seed.";
                }
                break;
            }
            st.planned = {obs.payload.at("passive_params_dict").at("mcr2").get<MCRPhysical>(),
                          obs.payload.at("passive_params_dict").at("mcr3").get<MCRPhysical>()};
            st.stage_gain = number_vector(obs.payload.at("cal_gain_dict").at("stage_gain_db"), "stage_gain_db");
            st.design = compose_candidate(st.active, st.s2, st.planned);
            st.phase = Phase::Eval;
            st.note = "Evaluate the whole chain.";
            break;
        case ToolName::FullchainEval: {
            const SimReport rep = obs.payload.at("sim_results_dict").get<SimReport>();
            on_full_report(st, spec, kb, rep);
            break;
        }
        case ToolName::ActiveSizing:
            break;
        }
    }
    return st;
}

PolicyTurn scripted_refiner(const TaskFrame& frame, std::span<const PolicyTurn> transcript, const DeviceKb& kb)
{
    const DesignSpec spec = frame.context.at("spec").get<DesignSpec>();
    const std::uint64_t seed = frame.context.value("seed", std::uint64_t{1});
    RefinerState st = replay_refiner(frame, transcript, kb, spec);
    const auto step = static_cast<std::uint64_t>(
        std::count_if(transcript.begin(), transcript.end(), [](const PolicyTurn& t) { return dispatched(t); }));
    const std::uint64_t call_seed = mix_seed(seed, step);

    switch (st.phase) {
    case Phase::Match: {
        json a{{"active_params_dict", st.active}, {"nf_headroom", st.headroom}, {"seed", call_seed}};
        if (st.gain_require)
            a["gain_require"] = *st.gain_require;
        return call_turn(st.note, ToolName::ImpedanceMatching, a);
    }
    case Phase::Plan: {
        json a{{"active_params_dict", st.active},
               {"passive_params_cpstages", st.s2},
               {"gain_list", st.head},
               {"seed", call_seed}};
        if (st.gain_req_list) {
            json req = json::array();
            for (double g : *st.gain_req_list)
                req.push_back(number_json(g));
            a["gain_req_list"] = req;
        }
        return call_turn(st.note, ToolName::BandPlanning, a);
    }
    case Phase::Eval:
        return call_turn(st.note, ToolName::FullchainEval,
                         json{{"wholechain_active_dict", st.active},
                              {"wholechain_passive_dict", wholechain_passive_json(*st.design)}});
    case Phase::Done:
        break;
    }
    return terminate_turn(st.note, st.done);
}

} // namespace

PolicyTurn ScriptedPolicy::next(const TaskFrame& frame, std::span<const PolicyTurn> transcript)
{
    if (frame.agent == "searcher")
        return scripted_searcher(frame, transcript);
    if (frame.agent == "refiner")
        return scripted_refiner(frame, transcript, *kb_);
    throw PolicyError(fmt::format("scripted policy has no procedure for agent \"{}\"", frame.agent));
}

// Sub-agents

SearchOutcome searcher_run(const SearchInstruction& instruction, std::span<const std::uint64_t> queue_snapshot,
                           const DesignSpec& spec, Policy& policy, const ToolFn& tools, const LoopLimits& limits)
{
    TaskFrame frame{"searcher", json{{"spec", spec}, {"power_ratio_list", instruction.power_ratios},
                                     {"seed", instruction.seed}}};
    frame.context["gain_require"] =
        instruction.gain_require ? json(*instruction.gain_require) : json(nullptr);
    if (instruction.nf_headroom)
        frame.context["nf_headroom"] = *instruction.nf_headroom;

    SearchOutcome out;
    out.transcript = react_loop(policy, tools, frame, limits);
    std::vector<std::uint64_t> seen(queue_snapshot.begin(), queue_snapshot.end());
    for (const auto& t : out.transcript.turns) {
        if (!dispatched(t) || t.action->tool != ToolName::ImpedanceMatching || !t.observation->ok)
            continue;
        try {
            CriticalCandidate c;
            const json& args = t.action->args;
            const json& p = t.observation->payload;
            c.active = args.at("active_params_dict").get<ActiveConfig>();
            c.passive = p.at("passive_params_cpstages").get<Stage2Passive>();
            const SimReport sim = p.at("sim_result_cpstages").get<SimReport>();
            c.head_gain_db = sim.gain_db;
            c.critical_violations = critical_violations(sim);
            if (args.contains("gain_require"))
                c.gain_require = json_number(args.at("gain_require"), "args.gain_require");
            c.headroom = json_number(p.at("nf_headroom"), "nf_headroom");
            const auto h = c.hash();
            if (std::find(seen.begin(), seen.end(), h) != seen.end())
                continue;
            seen.push_back(h);
            out.candidates.push_back(std::move(c));
        } catch (const std::exception& e) {
            out.transcript.report.failure_reasons.push_back(fmt::format("{}: {}", t.action->call_id, e.what()));
        }
    }
    out.report = out.transcript.report;
    out.report.metrics["candidates"] = static_cast<double>(out.candidates.size());
    out.report.success = !out.candidates.empty();
    out.report.violated.clear();
    if (!out.report.success) {
        out.report.violated.push_back({"candidates", 1.0});
        if (out.report.failure_reasons.empty())
            out.report.failure_reasons.push_back("no critical-stage candidate was produced");
    }
    for (const auto& t : out.transcript.turns)
        if (dispatched(t) && !t.observation->ok)
            out.report.failure_reasons.push_back(
                fmt::format("{}: {}", t.action->call_id, t.observation->error.value_or("failed")));
    return out;
}

RefineOutcome refiner_run(const CriticalCandidate& candidate, const DesignSpec& spec, std::uint64_t seed,
                          Policy& policy, const ToolFn& tools, const LoopLimits& limits)
{
    TaskFrame frame{"refiner", json{{"spec", spec}, {"candidate", candidate}, {"seed", seed}}};
    RefineOutcome out;
    out.transcript = react_loop(policy, tools, frame, limits);
    AgentReport rep = out.transcript.report;

    // The outcome rests on the last full-chain observation, whatever the policy claimed.
    const PolicyTurn* last_eval = nullptr;
    for (const auto& t : out.transcript.turns)
        if (dispatched(t) && t.action->tool == ToolName::FullchainEval && t.observation->payload.contains("sim_results_dict"))
            last_eval = &t;
    if (last_eval) {
        const SimReport sim = last_eval->observation->payload.at("sim_results_dict").get<SimReport>();
        const AgentReport measured = report_from_sim(sim);
        rep.metrics = measured.metrics;
        rep.violated = measured.violated;
        out.report = sim;
        if (measured.success) {
            const json& a = last_eval->action->args;
            CandidateDesign d = parse_wholechain(a.at("wholechain_active_dict"), a.at("wholechain_passive_dict"));
            d.meta = CandidateMeta{"refiner", last_eval->action->call_id, last_eval->action->timestamp};
            out.design = d;
        }
    }
    rep.success = out.design.has_value();
    if (rep.success) {
        rep.violated.clear();
        rep.failure_reasons.clear();
        rep.infeasible = false;
    } else {
        if (rep.violated.empty())
            rep.violated.push_back({"unfinished", 0.0});
        if (rep.failure_reasons.empty())
            rep.failure_reasons.push_back("no full-chain evaluation passed");
        if (!rep.budget_exhausted)
            rep.infeasible = true;
    }
    rep.candidate_hash = candidate.hash();
    out.agent_report = rep;
    return out;
}

// Manager

std::string to_string(AgentMode m)
{
    return m == AgentMode::AutonomousSearch ? "search" : "rar";
}

AgentMode agent_mode_from_string(const std::string& s)
{
    if (s == "search")
        return AgentMode::AutonomousSearch;
    if (s == "rar")
        return AgentMode::RetrieveAndRefine;
    throw SchemaError(fmt::format("mode: expected \"search\" or \"rar\", got \"{}\"", s));
}

std::string to_string(ManagerAction a)
{
    return a == ManagerAction::SearchCandidates ? "SearchCandidates" : "RefineCandidate";
}

double priority_score(const std::map<std::string, double>& v)
{
    const auto get = [&](const char* k) {
        const auto it = v.find(k);
        return it == v.end() ? 0.0 : it->second;
    };
    return -(get("nf") + get("ip1db") + 0.5 * get("gain"));
}

double priority_score(const std::vector<Violation>& violated)
{
    std::map<std::string, double> v;
    for (const auto& x : violated)
        v[x.constraint] += x.magnitude;
    return priority_score(v);
}

bool ManagerState::enqueue(const CriticalCandidate& c, double priority, std::int64_t hf_spent)
{
    const auto h = c.hash();
    if (find(h))
        return false;
    queue.push_back(QueueEntry{c, h, priority, hf_spent, next_order++});
    return true;
}

QueueEntry* ManagerState::find(std::uint64_t hash)
{
    const auto it = std::find_if(queue.begin(), queue.end(), [&](const QueueEntry& e) { return e.hash == hash; });
    return it == queue.end() ? nullptr : &*it;
}

const QueueEntry* ManagerState::head() const
{
    const auto it = std::min_element(queue.begin(), queue.end(), [](const QueueEntry& a, const QueueEntry& b) {
        if (a.priority != b.priority)
            return a.priority > b.priority;
        if (a.hf_spent != b.hf_spent)
            return a.hf_spent < b.hf_spent;
        return a.order < b.order;
    });
    return it == queue.end() ? nullptr : &*it;
}

ManagerDecision manager_step(ManagerState& state, const DesignSpec& spec, const std::optional<AgentReport>& last)
{
    (void)spec;
    if (!state.budget_remaining.positive())
        throw BudgetExhausted("manager budget exhausted");
    if (last && last->candidate_hash) {
        if (QueueEntry* e = state.find(*last->candidate_hash)) {
            if (last->infeasible) {
                const auto h = e->hash;
                std::erase_if(state.queue, [&](const QueueEntry& q) { return q.hash == h; });
                state.history.push_back(json{{"event", "evict"}, {"candidate", hex64(h)}});
            } else {
                e->priority = priority_score(last->violated);
                e->hf_spent += last->hf_evals;
            }
        }
    }
    ManagerDecision d;
    if (const QueueEntry* h = state.head()) {
        d.action = ManagerAction::RefineCandidate;
        d.target = h->hash;
        state.history.push_back(json{{"action", to_string(d.action)}, {"candidate", hex64(h->hash)},
                                     {"priority", number_json(h->priority)}});
    } else {
        d.action = ManagerAction::SearchCandidates;
        state.history.push_back(json{{"action", to_string(d.action)}});
    }
    return d;
}

// Orchestrator

namespace {

ActiveConfig active_from_design(const CandidateDesign& d, const DeviceKb& kb, double budget)
{
    const auto kinds = default_stage_kinds(3);
    ActiveConfig a;
    for (std::size_t i = 0; i < 3; ++i)
        a.stages.push_back(find_device(kb.table(kinds[i]), d.width[i], d.vgs[i]));
    a.total_budget = budget;
    for (const auto& s : a.stages)
        a.power_split.push_back(s.id / budget);
    return a;
}

// One evaluation: the head curve of the critical stages under the new spec. The planned stages
// are kept only for an identical query; otherwise the Refiner plans them for the new targets.
CriticalCandidate candidate_from_design(const CandidateDesign& d, const DesignSpec& solved_for, const ToolContext& ctx)
{
    CriticalCandidate c;
    c.active = active_from_design(d, *ctx.kb, ctx.spec.power);
    c.passive = Stage2Passive{d.mcr[0], d.l_s, d.l_par, d.l_g};
    const SimReport head = evaluate_chain(matched_critical_chain(c.active, c.passive), ctx.spec, kStage2GateIndex);
    c.head_gain_db = head.gain_db;
    c.critical_violations = critical_violations(head);
    if (solved_for == ctx.spec)
        c.full = d;
    return c;
}

} // namespace

DesignOutcome run_design(const ToolContext& ctx, Policy& policy, const OrchestratorConfig& cfg, MemoryStore* memory)
{
    const DesignSpec& spec = ctx.spec;
    const ToolFn tools = [&ctx](const ToolCall& call) { return dispatch(ctx, call); };
    const std::int64_t hf0 = hf::thread_count();
    const hf::ScopedLimit hf_cap(cfg.budget.hf_evals);
    const double t0 = ctx.now();
    DesignOutcome out;

    ManagerState state;
    state.mode = cfg.mode;
    state.budget_remaining = cfg.budget;
    std::int64_t calls = 0;
    const auto refresh = [&] {
        out.hf_evals = hf::thread_count() - hf0;
        out.elapsed_s = ctx.now() - t0;
        state.budget_remaining = Budget{cfg.budget.hf_evals - out.hf_evals, cfg.budget.wall_seconds - out.elapsed_s,
                                        cfg.budget.tool_calls - calls};
    };

    std::vector<std::vector<double>> splits;
    if (cfg.mode == AgentMode::RetrieveAndRefine && memory) {
        for (const KbRecord& rec : kb_query(memory->kb, spec, cfg.retrieve_k)) {
            try {
                CriticalCandidate c = candidate_from_design(rec.candidate, rec.spec, ctx);
                SimReport prior = rec.report;
                apply_constraints(prior, spec);
                if (state.enqueue(c, priority_score(prior.violations)))
                    state.history.push_back(json{{"event", "preload"}, {"kb_id", rec.id}, {"candidate", hex64(c.hash())}});
            } catch (const Error& e) {
                out.failure_reasons.push_back(fmt::format("kb record {}: {}", rec.id, e.what()));
            }
        }
        try {
            const ExperienceHints h = eb_hints(memory->eb, spec, cfg.retrieve_k);
            if (h.power_split_hint.size() == 3)
                splits.push_back(h.power_split_hint);
        } catch (const NoExperience&) {
        }
    }
    for (const auto& s : cfg.splits)
        splits.push_back({(1.0 - cfg.r3) * s[0], (1.0 - cfg.r3) * s[1], cfg.r3});

    std::size_t next_split = 0;
    std::optional<AgentReport> last;
    LoopLimits limits;
    limits.max_turns = cfg.max_turns;
    limits.clock = ctx.clock;
    while (true) {
        refresh();
        ManagerDecision d;
        try {
            d = manager_step(state, spec, last);
        } catch (const BudgetExhausted&) {
            out.failure_reasons.push_back("budget exhausted");
            break;
        }
        last.reset();
        limits.budget = state.budget_remaining;

        if (d.action == ManagerAction::SearchCandidates) {
            if (next_split >= splits.size()) {
                out.failure_reasons.push_back("every power split has been searched");
                break;
            }
            SearchInstruction ins;
            ins.power_ratios = splits[next_split];
            ins.gain_require = cfg.gain_require;
            ins.seed = mix_seed(cfg.seed, next_split);
            ++next_split;
            std::vector<std::uint64_t> snapshot;
            for (const auto& e : state.queue)
                snapshot.push_back(e.hash);
            SearchOutcome s = searcher_run(ins, snapshot, spec, policy, tools, limits);
            calls += s.report.tool_calls_made;
            out.tokens += s.report.tokens;
            for (const auto& c : s.candidates)
                state.enqueue(c, priority_score(c.critical_violations));
            out.transcripts.push_back(std::move(s.transcript));
            continue;
        }

        const QueueEntry* entry = state.find(*d.target);
        const CriticalCandidate cand = entry->candidate;
        RefineOutcome r = refiner_run(cand, spec, mix_seed(cfg.seed, entry->hash), policy, tools, limits);
        calls += r.agent_report.tool_calls_made;
        out.tokens += r.agent_report.tokens;
        out.transcripts.push_back(std::move(r.transcript));
        if (r.design) {
            out.success = true;
            out.design = r.design;
            out.report = r.report;
            out.power_split = active_from_design(*r.design, *ctx.kb, spec.power).power_split;
            break;
        }
        last = r.agent_report;
        if (r.agent_report.budget_exhausted) {
            out.failure_reasons.push_back("budget exhausted");
            break;
        }
    }
    refresh();
    out.tool_calls = static_cast<int>(calls);
    out.history = state.history;
    if (out.success && memory) {
        KbRecord rec{0, spec, *out.design, *out.report, ctx.now(), cfg.run_id, hex64(out.design->hash())};
        memory->kb.put(rec);
        memory->eb.put(make_eb_record(spec, *out.design, *out.report, out.power_split, cfg.run_id));
    }
    return out;
}

// JSON

void to_json(json& j, const TokenCount& t)
{
    j = json{{"prompt", t.prompt}, {"completion", t.completion}};
}

void from_json(const json& j, TokenCount& t)
{
    t.prompt = j.value("prompt", std::int64_t{0});
    t.completion = j.value("completion", std::int64_t{0});
}

void to_json(json& j, const AgentReport& r)
{
    json viol = json::array();
    for (const auto& v : r.violated)
        viol.push_back(json{{"constraint", v.constraint}, {"magnitude", number_json(v.magnitude)}});
    json metrics = json::object();
    for (const auto& [k, v] : r.metrics)
        metrics[k] = number_json(v);
    j = json{{"success", r.success},
             {"metrics", metrics},
             {"violated", viol},
             {"failure_reasons", r.failure_reasons},
             {"tokens", r.tokens},
             {"tool_calls_made", r.tool_calls_made},
             {"hf_evals", r.hf_evals},
             {"infeasible", r.infeasible},
             {"budget_exhausted", r.budget_exhausted}};
    if (r.candidate_hash)
        j["candidate_hash"] = hex64(*r.candidate_hash);
}

void from_json(const json& j, AgentReport& r)
{
    r = AgentReport{};
    r.success = j.value("success", false);
    if (j.contains("metrics"))
        for (const auto& [k, v] : j.at("metrics").items())
            r.metrics[k] = json_number(v, "metrics." + k);
    if (j.contains("violated"))
        for (const auto& v : j.at("violated"))
            r.violated.push_back({v.at("constraint").get<std::string>(), json_number(v.at("magnitude"), "magnitude")});
    r.failure_reasons = j.value("failure_reasons", std::vector<std::string>{});
    if (j.contains("tokens"))
        r.tokens = j.at("tokens").get<TokenCount>();
    r.tool_calls_made = j.value("tool_calls_made", 0);
    r.hf_evals = j.value("hf_evals", std::int64_t{0});
    r.infeasible = j.value("infeasible", false);
    r.budget_exhausted = j.value("budget_exhausted", false);
    if (j.contains("candidate_hash"))
        r.candidate_hash = std::stoull(j.at("candidate_hash").get<std::string>(), nullptr, 16);
}

void to_json(json& j, const PolicyTurn& t)
{
    j = json{{"thought", t.thought}, {"tokens", t.tokens}, {"malformed", t.malformed}};
    j["action"] = t.action ? json(*t.action) : json("Terminate");
    if (t.final_report)
        j["final_report"] = *t.final_report;
    if (t.observation)
        j["observation"] = *t.observation;
}

void from_json(const json& j, PolicyTurn& t)
{
    t = PolicyTurn{};
    t.thought = j.value("thought", std::string{});
    if (j.contains("tokens"))
        t.tokens = j.at("tokens").get<TokenCount>();
    t.malformed = j.value("malformed", false);
    if (j.contains("action") && j.at("action").is_object())
        t.action = j.at("action").get<ToolCall>();
    if (j.contains("final_report"))
        t.final_report = j.at("final_report").get<AgentReport>();
    if (j.contains("observation"))
        t.observation = j.at("observation").get<ToolResult>();
}

void to_json(json& j, const TaskFrame& f)
{
    j = json{{"agent", f.agent}, {"context", f.context}};
}

void from_json(const json& j, TaskFrame& f)
{
    f.agent = j.at("agent").get<std::string>();
    f.context = j.value("context", json::object());
}

void to_json(json& j, const Transcript& t)
{
    j = json{{"schema_version", kSchemaVersion}, {"frame", t.frame}, {"turns", t.turns}, {"report", t.report}};
}

void from_json(const json& j, Transcript& t)
{
    t.frame = j.at("frame").get<TaskFrame>();
    t.turns = j.at("turns").get<std::vector<PolicyTurn>>();
    t.report = j.at("report").get<AgentReport>();
}

void to_json(json& j, const CriticalCandidate& c)
{
    json viol = json::object();
    for (const auto& [k, v] : c.critical_violations)
        viol[k] = number_json(v);
    json head = json::array();
    for (double g : c.head_gain_db)
        head.push_back(number_json(g));
    j = json{{"active", c.active},
             {"passive", c.passive},
             {"head_gain_db", head},
             {"critical_violations", viol},
             {"gain_require", c.gain_require ? json(*c.gain_require) : json(nullptr)},
             {"headroom", c.headroom}};
    if (c.full)
        j["full"] = *c.full;
}

void from_json(const json& j, CriticalCandidate& c)
{
    c = CriticalCandidate{};
    c.active = j.at("active").get<ActiveConfig>();
    c.passive = j.at("passive").get<Stage2Passive>();
    c.head_gain_db = number_vector(j.at("head_gain_db"), "head_gain_db");
    if (j.contains("critical_violations"))
        for (const auto& [k, v] : j.at("critical_violations").items())
            c.critical_violations[k] = json_number(v, "critical_violations." + k);
    if (j.contains("gain_require") && !j.at("gain_require").is_null())
        c.gain_require = json_number(j.at("gain_require"), "gain_require");
    c.headroom = j.value("headroom", kDefaultHeadroom);
    if (j.contains("full"))
        c.full = j.at("full").get<CandidateDesign>();
}

} // namespace rfamp
