#pragma once

#include "malr/domain.hpp"
#include "malr/gateway.hpp"
#include "malr/knowledge.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace malr {

struct SubTaskProposal {
    std::string raw_label;
    std::string description;
    CaseId source_sample_id;
};

struct TrainingSampleRef {
    CaseId case_id;
    ChargeName charge;
};

struct PlannerConfig {
    double zeta = 0.8;
    std::vector<TrainingSampleRef> samples;
    std::string planner_template = "planner";
    std::string canonicalizer_template = "canonicalize";

    // Throws PreconditionError unless zeta is in (0,1].
    void validate() const;
};

struct LabelFrequency {
    std::string label;
    int samples = 0;
    double probability = 0.0;
};

struct PlanResult {
    SubTaskSet subtasks;
    std::vector<LabelFrequency> kept;
    std::vector<LabelFrequency> dropped;
    int sample_count = 0;
    double zeta = 0.8;
};

// Reads the enumerated list a planner completion contains ("1. Label - description",
// "- Label: description", ...). Throws ParseError when no list item is found.
std::vector<SubTaskProposal> parse_proposals(std::string_view raw, const CaseId& sample);

// Per canonical label, probability = distinct proposing samples / sample_count. Labels with
// probability >= zeta are kept, ordered by descending probability then label.
PlanResult filter_by_frequency(const std::vector<SubTaskProposal>& canonical_proposals, int sample_count,
                               double zeta);

// "Does the fact description constitute the charge of <charge>?"
std::string planning_question(const ChargeName& charge);

class AutoPlanner {
public:
    AutoPlanner(const CompletionBackend& backend, const TemplateLibrary& templates, DecodingParams decoding = {})
        : backend_(backend), templates_(templates), decoding_(decoding) {}

    std::vector<SubTaskProposal> propose_subtasks(const std::string& question, const LegalRule& rule,
                                                  const FactDescription& fact,
                                                  const std::string& template_name = "planner") const;

    // One model call over the distinct raw labels; labels the reply leaves out map to
    // themselves.
    std::map<std::string, std::string> canonicalize(const std::vector<std::string>& raw_labels,
                                                    const std::string& template_name = "canonicalize") const;

    // Throws PreconditionError on an empty proposal set or sample_count < 1.
    PlanResult consolidate(const std::vector<SubTaskProposal>& proposals, int sample_count, double zeta,
                           const std::string& template_name = "canonicalize") const;

    // Samples resolve against `corpus` by case id, rules against `rules`.
    PlanResult plan(const PlannerConfig& config, const std::vector<CaseRecord>& corpus, const RuleKB& rules) const;

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    DecodingParams decoding_;
};

// One sample per golden (expected-guilty) query of each record.
std::vector<TrainingSampleRef> golden_samples(const std::vector<CaseRecord>& corpus);

// {"subtasks":[{id,label,description,probability}],"sample_count","zeta","dropped":[...]}
std::string plan_to_document(const PlanResult& plan);
SubTaskSet subtasks_from_document(std::string_view doc);
SubTaskSet load_subtasks(const std::filesystem::path& path);

}  // namespace malr
