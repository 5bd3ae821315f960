#pragma once

#include "malr/domain.hpp"
#include "malr/gateway.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace malr {

// Charge definitions, looked up by exact charge name.
class RuleKB {
public:
    RuleKB() = default;
    explicit RuleKB(std::vector<LegalRule> rules);

    // Throws ValidationError on an empty name or text, or a duplicate name.
    void add(LegalRule rule);
    const LegalRule& get_rule(const ChargeName& charge) const;
    bool contains(const ChargeName& charge) const { return index_.count(charge) != 0; }
    const std::vector<LegalRule>& rules() const noexcept { return rules_; }
    std::size_t size() const noexcept { return rules_.size(); }

    // {"rules":[{"name","rule","article_ref"}]}
    std::string to_document() const;
    static RuleKB from_document(std::string_view doc);
    void save(const std::filesystem::path& path) const;
    static RuleKB load(const std::filesystem::path& path);

private:
    std::vector<LegalRule> rules_;
    std::unordered_map<ChargeName, std::size_t> index_;
};

enum class InsightSource { success, error_success_pair, transfer, direct };

std::string_view to_string(InsightSource s);
InsightSource insight_source_from_string(std::string_view s);

// If-then note about one aspect of one charge.
struct Insight {
    InsightId id;
    ChargeName charge_name;
    SubTaskId subtask_id;
    std::string text;
    InsightSource source = InsightSource::success;
    std::optional<ChargeName> origin_charge;

    friend bool operator==(const Insight&, const Insight&) = default;
};

using InsightBuckets = std::map<SubTaskId, std::vector<Insight>>;

// Rule-insight store keyed charge -> sub-task -> insertion-ordered insights.
class InsightKB {
public:
    // Throws ValidationError for empty text or id, a transfer insight without origin, or
    // an id already present.
    void put_insight(Insight insight);
    // Empty list when the bucket does not exist.
    const std::vector<Insight>& get_insights(const ChargeName& charge, const SubTaskId& subtask) const;
    InsightBuckets bucket(const ChargeName& charge) const;
    bool has_charge(const ChargeName& charge) const;
    bool has_id(const InsightId& id) const { return ids_.count(id) != 0; }
    std::vector<ChargeName> charges() const;
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    const std::map<ChargeName, InsightBuckets>& buckets() const noexcept { return buckets_; }

    // {"charges":{charge:{subtask:[{"id","text","source","origin_charge"?}]}}}
    std::string to_document() const;
    // Throws ParseError naming the offending record.
    static InsightKB from_document(std::string_view doc);
    void save(const std::filesystem::path& path) const;
    static InsightKB load(const std::filesystem::path& path);

    friend bool operator==(const InsightKB& a, const InsightKB& b) { return a.buckets_ == b.buckets_; }

private:
    std::map<ChargeName, InsightBuckets> buckets_;
    std::unordered_set<InsightId> ids_;
};

struct NeighborMatch {
    ChargeName charge;
    double similarity = 0.0;
};

// Most cosine-similar candidate to `query`; ties go to the lexicographically smallest
// charge name. Throws PreconditionError when candidates is empty.
NeighborMatch nearest_rule(const Embedder& embedder, const LegalRule& query,
                           const std::vector<LegalRule>& candidates);

struct TransferResult {
    NeighborMatch neighbor;
    std::vector<Insight> insights;
};

// Adapts insights of the nearest trained rule to a charge the KB has never seen.
class InsightTransfer {
public:
    InsightTransfer(const CompletionBackend& backend, const TemplateLibrary& templates,
                    const Embedder& embedder, DecodingParams decoding = {})
        : backend_(backend), templates_(templates), embedder_(embedder), decoding_(decoding) {}

    // The neighbor's whole bucket serves as the few-shot exemplar set.
    TransferResult transfer_insights(const LegalRule& unseen, const InsightKB& kb, const RuleKB& rules,
                                     const SubTaskSet& subtasks) const;

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    const Embedder& embedder_;
    DecodingParams decoding_;
};

// Text files.
std::string read_text_file(const std::filesystem::path& path);
// Throws DataError when the file cannot be written.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace malr
