#pragma once

#include "malr/ids.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace malr {

class RuleKB;

// Natural-language description of one case.
struct FactDescription {
    CaseId case_id;
    std::string text;
};

// Definition of one criminal charge.
struct LegalRule {
    ChargeName charge_name;
    std::string text;
    std::optional<std::string> article_ref;

    friend bool operator==(const LegalRule&, const LegalRule&) = default;
};

// One charge to test against a fact. expected_guilty is true for the golden charge and
// false for a confusing charge (or for the similar charge of an innocent case).
struct ChargeQuery {
    ChargeName charge_name;
    bool expected_guilty = false;
};

struct CaseRecord {
    FactDescription fact;
    std::vector<ChargeQuery> queries;
    std::optional<std::string> pair_tag;
};

struct Violation {
    enum class Code { empty_case_id, empty_fact, no_queries, unknown_charge, duplicate_charge };
    Code code;
    std::string message;
};

std::string_view to_string(Violation::Code code);

// Checks a record built from external input. Returns an empty list when every invariant
// holds; never throws.
std::vector<Violation> validate_case(const CaseRecord& record, const RuleKB& rules);

struct SubTask {
    SubTaskId id;
    std::string label;
    std::string description;
    double probability = 1.0;

    friend bool operator==(const SubTask&, const SubTask&) = default;
};

// Ordered set of rule aspects produced by the planner. Ids are unique and every
// probability lies in [0,1]; the constructor enforces both.
class SubTaskSet {
public:
    SubTaskSet() = default;
    explicit SubTaskSet(std::vector<SubTask> subtasks);

    const std::vector<SubTask>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    bool contains(const SubTaskId& id) const;
    const SubTask& at(const SubTaskId& id) const;
    std::vector<SubTaskId> ids() const;

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    friend bool operator==(const SubTaskSet&, const SubTaskSet&) = default;

private:
    std::vector<SubTask> items_;
};

enum class Finding { satisfied, not_satisfied, uncertain };

std::string_view to_string(Finding f);
Finding finding_from_string(std::string_view s);

struct SubAnswer {
    SubTaskId subtask_id;
    Finding finding = Finding::uncertain;
    std::string rationale;
    std::vector<InsightId> used_insight_ids;
    std::vector<FeedbackId> used_feedback_ids;
    // Set when the completion carried no recognisable answer and the finding was defaulted.
    bool parse_flag = false;
};

enum class ChargeRole { golden, confusing };

std::string_view to_string(ChargeRole r);

// Per-aspect findings for one (fact, charge) at one trial index.
class Trajectory {
public:
    // Rejects a trial index outside [1, max_trials] and any answer list that does not hold
    // exactly one answer per sub-task of `subtasks`.
    Trajectory(ChargeName charge, ChargeRole role, int trial_index, std::vector<SubAnswer> answers,
               const SubTaskSet& subtasks, int max_trials);

    const ChargeName& charge_name() const noexcept { return charge_; }
    ChargeRole role() const noexcept { return role_; }
    int trial_index() const noexcept { return trial_index_; }
    const std::vector<SubAnswer>& answers() const noexcept { return answers_; }
    const SubAnswer& answer_for(const SubTaskId& id) const;

private:
    ChargeName charge_;
    ChargeRole role_;
    int trial_index_;
    std::vector<SubAnswer> answers_;
};

struct Verdict {
    bool guilty = false;
    std::string rationale;
    bool parse_flag = false;
};

struct QueryVerdict {
    ChargeName charge_name;
    bool expected_guilty = false;
    Verdict verdict;
};

struct CaseOutcome {
    CaseId case_id;
    std::optional<std::string> pair_tag;
    std::vector<QueryVerdict> per_query_verdicts;
    bool y_correct = false;
};

// y_correct is the conjunction over queries of (guilty == expected_guilty).
CaseOutcome make_case_outcome(const CaseRecord& record, std::vector<Verdict> verdicts);

}  // namespace malr
