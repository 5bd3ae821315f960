#include "malr/domain.hpp"

#include "malr/errors.hpp"
#include "malr/knowledge.hpp"
#include "malr/text.hpp"

#include <set>
#include <unordered_set>

namespace malr {

std::string_view to_string(Violation::Code code) {
    switch (code) {
        case Violation::Code::empty_case_id: return "empty case id";
        case Violation::Code::empty_fact: return "empty fact";
        case Violation::Code::no_queries: return "no queries";
        case Violation::Code::unknown_charge: return "unknown charge";
        case Violation::Code::duplicate_charge: return "duplicate charge";
    }
    return "?";
}

std::vector<Violation> validate_case(const CaseRecord& record, const RuleKB& rules) {
    std::vector<Violation> out;
    if (text::trim(record.fact.case_id.str()).empty()) {
        out.push_back({Violation::Code::empty_case_id, "case id is empty"});
    }
    if (text::trim(record.fact.text).empty()) {
        out.push_back({Violation::Code::empty_fact, "empty fact: case '" + record.fact.case_id.str() + "'"});
    }
    if (record.queries.empty()) {
        out.push_back({Violation::Code::no_queries, "case '" + record.fact.case_id.str() + "' has no queries"});
    }
    std::set<ChargeName> seen;
    for (const auto& q : record.queries) {
        if (!rules.contains(q.charge_name)) {
            out.push_back({Violation::Code::unknown_charge, "unknown charge '" + q.charge_name.str() + "'"});
        }
        if (!seen.insert(q.charge_name).second) {
            out.push_back({Violation::Code::duplicate_charge, "duplicate charge '" + q.charge_name.str() + "'"});
        }
    }
    return out;
}

SubTaskSet::SubTaskSet(std::vector<SubTask> subtasks) : items_(std::move(subtasks)) {
    std::set<SubTaskId> ids;
    for (const auto& st : items_) {
        if (st.id.empty()) throw ValidationError("sub-task with empty id");
        if (!(st.probability >= 0.0 && st.probability <= 1.0)) {
            throw ValidationError("sub-task '" + st.id.str() + "' probability outside [0,1]");
        }
        if (!ids.insert(st.id).second) throw ValidationError("duplicate sub-task id '" + st.id.str() + "'");
    }
}

bool SubTaskSet::contains(const SubTaskId& id) const {
    for (const auto& st : items_) {
        if (st.id == id) return true;
    }
    return false;
}

const SubTask& SubTaskSet::at(const SubTaskId& id) const {
    for (const auto& st : items_) {
        if (st.id == id) return st;
    }
    throw NotFoundError("unknown sub-task '" + id.str() + "'");
}

std::vector<SubTaskId> SubTaskSet::ids() const {
    std::vector<SubTaskId> out;
    out.reserve(items_.size());
    for (const auto& st : items_) out.push_back(st.id);
    return out;
}

std::string_view to_string(Finding f) {
    switch (f) {
        case Finding::satisfied: return "satisfied";
        case Finding::not_satisfied: return "not_satisfied";
        case Finding::uncertain: return "uncertain";
    }
    return "uncertain";
}

Finding finding_from_string(std::string_view s) {
    if (s == "satisfied") return Finding::satisfied;
    if (s == "not_satisfied") return Finding::not_satisfied;
    if (s == "uncertain") return Finding::uncertain;
    throw ValidationError("unknown finding '" + std::string(s) + "'");
}

std::string_view to_string(ChargeRole r) { return r == ChargeRole::golden ? "golden" : "confusing"; }

Trajectory::Trajectory(ChargeName charge, ChargeRole role, int trial_index, std::vector<SubAnswer> answers,
                       const SubTaskSet& subtasks, int max_trials)
    : charge_(std::move(charge)), role_(role), trial_index_(trial_index), answers_(std::move(answers)) {
    if (trial_index_ < 1 || trial_index_ > max_trials) {
        throw ValidationError("trial index " + std::to_string(trial_index_) + " outside [1, " +
                              std::to_string(max_trials) + "]");
    }
    std::set<SubTaskId> seen;
    for (const auto& a : answers_) {
        if (!subtasks.contains(a.subtask_id)) {
            throw ValidationError("trajectory answer for unknown sub-task '" + a.subtask_id.str() + "'");
        }
        if (!seen.insert(a.subtask_id).second) {
            throw ValidationError("trajectory holds two answers for sub-task '" + a.subtask_id.str() + "'");
        }
    }
    if (seen.size() != subtasks.size()) {
        for (const auto& st : subtasks) {
            if (!seen.count(st.id)) throw ValidationError("trajectory misses sub-task '" + st.id.str() + "'");
        }
    }
}

const SubAnswer& Trajectory::answer_for(const SubTaskId& id) const {
    for (const auto& a : answers_) {
        if (a.subtask_id == id) return a;
    }
    throw NotFoundError("no answer for sub-task '" + id.str() + "'");
}

CaseOutcome make_case_outcome(const CaseRecord& record, std::vector<Verdict> verdicts) {
    if (verdicts.size() != record.queries.size()) {
        throw PreconditionError("case '" + record.fact.case_id.str() + "': " + std::to_string(verdicts.size()) +
                                " verdicts for " + std::to_string(record.queries.size()) + " queries");
    }
    CaseOutcome out;
    out.case_id = record.fact.case_id;
    out.pair_tag = record.pair_tag;
    out.y_correct = true;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        QueryVerdict qv{record.queries[i].charge_name, record.queries[i].expected_guilty, std::move(verdicts[i])};
        const bool matched = !qv.verdict.parse_flag && qv.verdict.guilty == qv.expected_guilty;
        out.y_correct = out.y_correct && matched;
        out.per_query_verdicts.push_back(std::move(qv));
    }
    return out;
}

}  // namespace malr
