#pragma once

#include "malr/domain.hpp"
#include "malr/errors.hpp"
#include "malr/feedback.hpp"
#include "malr/gateway.hpp"
#include "malr/knowledge.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace malr {

// One role-configured agent per sub-task.
struct AgentSpec {
    SubTaskId subtask_id;
    std::string role_preamble;
    std::string template_name = "subtask_judge";

    static AgentSpec for_subtask(const SubTask& subtask);
};

enum class InsightMode { trained, direct, none };

std::string_view to_string(InsightMode m);
InsightMode insight_mode_from_string(std::string_view s);

struct JudgmentContext {
    bool use_insights = false;
    bool use_feedback = false;
    InsightMode insight_mode = InsightMode::none;
    InsightBuckets insights;
    FeedbackBuckets feedback;

    // Throws PreconditionError when a disabled channel still carries data, or when
    // insight_mode is none while insights are on.
    void validate() const;
};

struct ParsedFinding {
    Finding finding = Finding::uncertain;
    std::string rationale;
    bool parse_flag = false;
};

// Final `ANSWER: YES|NO|UNCERTAIN` line (any case) wins; otherwise a keyword scan of the last
// sentence; otherwise uncertain with parse_flag set. Total.
ParsedFinding parse_finding(std::string_view raw);

// Guilty iff every finding is satisfied. The rationale names the first aspect that is not.
// Throws ValidationError unless `answers` has exactly one answer per sub-task.
Verdict combine(const std::vector<SubAnswer>& answers, const SubTaskSet& subtasks);

// Thrown when a backend failure interrupts a charge judgment; carries the answers gathered so
// far.
class ChargeJudgmentError : public BackendError {
public:
    ChargeJudgmentError(const std::string& what, std::vector<SubAnswer> partial)
        : BackendError(what), partial_(std::move(partial)) {}
    const std::vector<SubAnswer>& partial_answers() const noexcept { return partial_; }

private:
    std::vector<SubAnswer> partial_;
};

struct ChargeJudgment {
    Verdict verdict;
    Trajectory trajectory;
    FeedbackBuckets feedback;
};

// Supplies insight buckets for a charge. Implementations: trained KB (with nearest-rule
// transfer for unseen charges) and direct generation.
class InsightProvider {
public:
    virtual ~InsightProvider() = default;
    virtual InsightBuckets insights_for(const LegalRule& rule, const SubTaskSet& subtasks) const = 0;
};

struct MalrFlags {
    bool use_insights = true;
    bool use_feedback = true;
    InsightMode insight_mode = InsightMode::trained;

    static MalrFlags bare() { return {false, false, InsightMode::none}; }
};

class JudgmentEngine {
public:
    JudgmentEngine(const CompletionBackend& backend, const TemplateLibrary& templates,
                   FeedbackOracle* oracle = nullptr, DecodingParams decoding = {})
        : backend_(backend), templates_(templates), oracle_(oracle), decoding_(decoding) {}

    // `reflection` fills the template's reflection slot (used by trainer retries).
    SubAnswer answer_subtask(const AgentSpec& agent, const SubTask& subtask, const LegalRule& rule,
                             const FactDescription& fact, const JudgmentContext& ctx,
                             std::string_view reflection = {}) const;

    // Asks the oracle first for aspects the insights mark as needing fact-checking (when
    // ctx.use_feedback and an oracle is attached), then runs every agent and combines.
    ChargeJudgment judge_charge(const FactDescription& fact, const LegalRule& rule,
                                const SubTaskSet& subtasks, const JudgmentContext& ctx,
                                ChargeRole role = ChargeRole::golden, int trial_index = 1,
                                int max_trials = 1) const;

    // Builds a context per query from `flags` and `provider`; the provider is never touched
    // when insights are off.
    CaseOutcome predict_case(const CaseRecord& record, const RuleKB& rules, const SubTaskSet& subtasks,
                             const MalrFlags& flags, const InsightProvider* provider) const;

    JudgmentContext context_for(const LegalRule& rule, const SubTaskSet& subtasks, const MalrFlags& flags,
                                const InsightProvider* provider) const;

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    FeedbackOracle* oracle_;
    DecodingParams decoding_;
};

// Renders insights/feedback the way the judge template expects.
std::string format_insights(const std::vector<Insight>& insights);
std::string format_feedback(const std::vector<KnowledgeFeedback>& feedback);
std::string format_aspect(const SubTask& subtask);

}  // namespace malr
