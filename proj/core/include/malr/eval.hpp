#pragma once

#include "malr/domain.hpp"
#include "malr/feedback.hpp"
#include "malr/gateway.hpp"
#include "malr/judgment.hpp"
#include "malr/knowledge.hpp"
#include "malr/trainer.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace malr {

enum class StrategyName { zs_cot, lrp, fs_prompt, fs_cot, chain_of_logic, malr };

std::string_view to_string(StrategyName s);
// Throws PreconditionError for an unknown name.
StrategyName strategy_from_string(std::string_view s);
bool is_baseline(StrategyName s);

struct Exemplar {
    std::string fact;
    std::string rule;
    std::string charge;
    std::string reasoning;
    bool guilty = false;
};

// Built-in two-shot set: one positive, one negative demonstration.
std::vector<Exemplar> default_exemplars();
std::vector<Exemplar> load_exemplars(const std::filesystem::path& path);

struct StrategySpec {
    StrategyName name = StrategyName::malr;
    MalrFlags malr_flags;
    std::vector<Exemplar> exemplars;

    // Exemplars present iff the strategy is fs_prompt or fs_cot; one positive and one
    // negative.
    void validate() const;
    static StrategySpec baseline(StrategyName name);
    static StrategySpec malr(MalrFlags flags);
};

// One JSON object per line: {id, fact, queries:[{charge, expected}], pair_tag}. Every
// violation is collected with its line number before a DataError is thrown.
std::vector<CaseRecord> load_cases(const std::filesystem::path& path, const RuleKB& rules);
std::vector<CaseRecord> parse_cases(std::string_view jsonl, const RuleKB& rules);
std::string cases_to_jsonl(const std::vector<CaseRecord>& cases);

// Single-prompt and element-wise baseline strategies.
class BaselineJudge {
public:
    BaselineJudge(const CompletionBackend& backend, const TemplateLibrary& templates, DecodingParams decoding = {})
        : backend_(backend), templates_(templates), decoding_(decoding) {}

    // Unparseable output yields parse_flag=true (scored as wrong).
    Verdict baseline_judge(const StrategySpec& strategy, const FactDescription& fact, const LegalRule& rule) const;

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    DecodingParams decoding_;
};

struct CostLedger {
    long total_prompt_tokens = 0;
    long total_output_tokens = 0;
    long completions = 0;
    double wall_time_seconds = 0.0;
    double per_case_mean_tokens = 0.0;
};

struct EvalReport {
    std::string strategy;
    std::string variant;  // ablation label, "" for a plain run
    std::string dataset_id;
    double joint_accuracy = 0.0;
    double golden_accept_rate = 0.0;
    double confusing_reject_rate = 0.0;
    std::map<std::string, double> per_pair;
    std::map<std::string, double> per_golden_charge;
    long parse_failures = 0;
    CostLedger cost;
    std::vector<CaseOutcome> per_case_outcomes;

    std::string to_document() const;
    std::string text_table() const;
};

std::string reports_to_document(const std::vector<EvalReport>& reports);
std::string reports_text_table(const std::vector<EvalReport>& reports);

// A query counts as matched when its verdict carries no parse flag and guilty equals
// expected_guilty.
bool query_matched(const QueryVerdict& qv);

// Derives every rate in the report from its per-case outcomes.
void fill_metrics(EvalReport& report);

// KB-backed insights; unseen charges go through nearest-rule transfer (cached per charge).
class TrainedInsightProvider final : public InsightProvider {
public:
    TrainedInsightProvider(const InsightKB& kb, const RuleKB& rules, const InsightTransfer* transfer)
        : kb_(kb), rules_(rules), transfer_(transfer) {}
    InsightBuckets insights_for(const LegalRule& rule, const SubTaskSet& subtasks) const override;

private:
    const InsightKB& kb_;
    const RuleKB& rules_;
    const InsightTransfer* transfer_;
    mutable std::mutex mutex_;
    mutable std::map<ChargeName, InsightBuckets> transferred_;
};

// Insights generated from each rule on first use, cached per charge.
class DirectInsightProvider final : public InsightProvider {
public:
    DirectInsightProvider(const CompletionBackend& backend, const TemplateLibrary& templates,
                          DecodingParams decoding = {})
        : backend_(backend), templates_(templates), decoding_(decoding) {}
    InsightBuckets insights_for(const LegalRule& rule, const SubTaskSet& subtasks) const override;

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    DecodingParams decoding_;
    mutable std::mutex mutex_;
    mutable std::map<ChargeName, InsightBuckets> generated_;
};

struct EvalEnvironment {
    const CompletionBackend* backend = nullptr;
    const TemplateLibrary* templates = nullptr;
    const RuleKB* rules = nullptr;
    const SubTaskSet* subtasks = nullptr;      // malr only
    const InsightKB* insight_kb = nullptr;     // malr with trained insights
    const Embedder* embedder = nullptr;        // transfer for unseen charges
    ExpertAdapter* expert = nullptr;           // malr with feedback
    DecodingParams decoding;
};

struct EvalConfig {
    std::size_t workers = 1;
    // Zeroes wall time in the report.
    bool deterministic = false;
    std::string dataset_id;
    std::string variant;
};

EvalReport evaluate(const std::vector<CaseRecord>& dataset, const StrategySpec& strategy, const EvalEnvironment& env,
                    const EvalConfig& config);

// Inputs the trainer-flag ablations retrain from.
struct AblationTraining {
    TrainerConfig base;
};

// w/o insight, w/o ask, directly generate, full; plus w/o E_success, w/o E_esp and
// w/o M_filtering when `training` is given (each retrains a KB with one stage off).
std::vector<EvalReport> compare_ablations(const std::vector<CaseRecord>& dataset, const EvalEnvironment& env,
                                          const EvalConfig& config, const AblationTraining* training);

}  // namespace malr
