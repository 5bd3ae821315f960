#pragma once

#include "malr/domain.hpp"
#include "malr/gateway.hpp"
#include "malr/judgment.hpp"
#include "malr/knowledge.hpp"

#include <atomic>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace malr {

// A training case with exactly one golden and one confusing charge.
struct TrainingPair {
    FactDescription fact;
    ChargeName golden;
    ChargeName confusing;
};

struct TrainerConfig {
    int max_trials = 2;
    std::vector<TrainingPair> pairs;
    bool enable_success_experience = true;
    bool enable_esp_experience = true;
    bool enable_filtering = true;

    void validate() const;
    // Throws ValidationError for records that are not golden/confusing pairs.
    static std::vector<TrainingPair> pairs_from_cases(const std::vector<CaseRecord>& cases);
};

struct ReflectionReport {
    std::vector<SubTaskId> error_subtask_ids;
    std::map<SubTaskId, std::string> reasons;
    ChargeRole target_role = ChargeRole::golden;
};

enum class ExperienceKind { success, error_success_pair };

std::string_view to_string(ExperienceKind k);

struct TrajectoryPair {
    Trajectory golden;
    Trajectory confusing;
};

struct Experience {
    ExperienceKind kind;
    CaseId case_id;
    std::string fact_text;
    ChargeName charge_name;       // golden charge of the pair
    ChargeName confusing_charge;
    TrajectoryPair success;
    std::optional<TrajectoryPair> failed;  // first-trial trajectories, error_success_pair only
    std::vector<ReflectionReport> reflections;

    // success: first-trial success, no failed pair. error_success_pair: failed present and
    // success trial > 1. Throws ValidationError otherwise.
    void validate() const;
};

struct ErrorSuccessPair {
    ChargeName charge_name;
    SubTaskId subtask_id;
    SubAnswer error_answer;
    SubAnswer success_answer;
};

struct TrialEvaluation {
    bool success = false;
    bool golden_wrong = false;
    bool confusing_wrong = false;
};

// Ground-truth comparison: success iff the golden trajectory combines to guilty and the
// confusing one to not guilty.
TrialEvaluation evaluate_trial(const Trajectory& golden, const Trajectory& confusing, const SubTaskSet& subtasks);

// Pairs for sub-tasks whose finding changed between the failed and the corrected trial.
std::vector<ErrorSuccessPair> construct_pairs(const Experience& exp);

// True when the text carries both an "if" and a "then" word.
bool has_if_then(std::string_view text);

struct TrainingItemReport {
    CaseId case_id;
    ChargeName golden;
    ChargeName confusing;
    int evaluations = 0;
    std::optional<int> resolved_at_trial;
    std::optional<ExperienceKind> kind;
    bool unresolved = false;
    std::string reason;
};

struct GainResult {
    std::vector<Experience> experiences;
    std::vector<TrainingItemReport> items;
};

struct ChargeTrainingReport {
    int insights_drawn = 0;
    int insights_written = 0;
};

struct TrainingReport {
    std::vector<TrainingItemReport> items;
    std::map<ChargeName, ChargeTrainingReport> charges;
    int pair_insights = 0;
    int success_insights = 0;
    int filtered_out = 0;

    std::vector<CaseId> unresolved() const;
    std::string to_document() const;
};

// Hands out "<prefix><charge>/<subtask>/<n>" ids that the KB does not hold yet.
class InsightIdAllocator {
public:
    explicit InsightIdAllocator(const InsightKB& kb, std::string prefix = {}) : kb_(kb), prefix_(std::move(prefix)) {}
    InsightId next(const ChargeName& charge, const SubTaskId& subtask);

private:
    const InsightKB& kb_;
    std::string prefix_;
    std::map<std::pair<ChargeName, SubTaskId>, int> next_;
};

// Trial-and-error experience gathering with aspect-level reflection, then insight drawing
// and filtering into the KB.
class InsightTrainer {
public:
    InsightTrainer(const CompletionBackend& backend, const TemplateLibrary& templates, const RuleKB& rules,
                   const SubTaskSet& subtasks, DecodingParams decoding = {});

    // Counts every call; see evaluate_calls().
    TrialEvaluation evaluate(const Trajectory& golden, const Trajectory& confusing) const;

    // Throws ParseError when no erroneous aspect is named and ValidationError for ids outside
    // the sub-task set.
    ReflectionReport reflect(const Trajectory& failed, const LegalRule& rule, const FactDescription& fact,
                             bool expected_guilty) const;

    // Re-answers only the reported aspects with their reasons in the reflection slot.
    // Throws TrialBudgetExhausted when failed.trial_index() >= max_trials.
    Trajectory retry_subtasks(const Trajectory& failed, const ReflectionReport& report, const LegalRule& rule,
                              const FactDescription& fact, int max_trials) const;

    GainResult gain_experience(const TrainerConfig& config) const;

    // Throws PreconditionError when the findings agree, ParseError when the reply lacks
    // an if-then statement.
    Insight draw_insight_from_pair(const ErrorSuccessPair& pair, const LegalRule& rule, InsightId id) const;

    std::vector<Insight> draw_insight_from_success(const Experience& exp, InsightIdAllocator& ids) const;

    // Output is an order-preserving subset of `bucket`. Throws ValidationError when the
    // filter names an unknown id.
    std::vector<Insight> filter_insights(const std::vector<Insight>& bucket) const;

    // Writes surviving insights into `kb` and reports per item and per charge.
    TrainingReport run_training(const TrainerConfig& config, InsightKB& kb) const;

    std::size_t evaluate_calls() const noexcept { return evaluate_calls_.load(); }

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    const RuleKB& rules_;
    const SubTaskSet& subtasks_;
    DecodingParams decoding_;
    JudgmentEngine engine_;
    mutable std::atomic<std::size_t> evaluate_calls_{0};
};

// Insights written straight from the rule text, without any experience.
std::vector<Insight> generate_direct_insights(const CompletionBackend& backend, const TemplateLibrary& templates,
                                              const LegalRule& rule, const SubTaskSet& subtasks,
                                              DecodingParams decoding = {});

// Lines "subtask_id | text" -> (id, text), skipping blanks and lines without a separator.
std::vector<std::pair<std::string, std::string>> parse_keyed_lines(std::string_view raw);

std::string format_trajectory(const Trajectory& trajectory, const SubTaskSet& subtasks);

}  // namespace malr
