#pragma once

#include "malr/domain.hpp"
#include "malr/rule_world.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace malr {

// Rule-world fixtures: 8 confusing pairs (16 charges), each pair differing in exactly one
// element. `train` holds two cases per charge as golden charge (32 in all) with planner
// noise markers; `eval` holds the same layout where a share of the subject-element cases
// name a position instead of stating its category.
struct SyntheticCorpus {
    std::vector<LegalRule> rules;
    std::vector<CaseRecord> train;
    std::vector<CaseRecord> eval;
    world::Knowledge knowledge;
};

SyntheticCorpus make_synthetic_corpus();

// rules.json, train.jsonl, eval.jsonl, knowledge.json, exemplars.json
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

world::Knowledge load_knowledge(const std::filesystem::path& path);
std::string knowledge_to_document(const world::Knowledge& knowledge);

}  // namespace malr
