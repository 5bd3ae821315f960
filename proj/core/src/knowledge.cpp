#include "malr/knowledge.hpp"

#include "malr/errors.hpp"
#include "malr/judgment.hpp"
#include "malr/text.hpp"
#include "malr/trainer.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace malr {

using json = nlohmann::json;

RuleKB::RuleKB(std::vector<LegalRule> rules) {
    for (auto& r : rules) add(std::move(r));
}

void RuleKB::add(LegalRule rule) {
    if (text::trim(rule.charge_name.str()).empty()) throw ValidationError("rule with empty charge name");
    if (text::trim(rule.text).empty()) throw ValidationError("rule '" + rule.charge_name.str() + "' has empty text");
    if (contains(rule.charge_name)) throw ValidationError("duplicate rule '" + rule.charge_name.str() + "'");
    index_.emplace(rule.charge_name, rules_.size());
    rules_.push_back(std::move(rule));
}

const LegalRule& RuleKB::get_rule(const ChargeName& charge) const {
    auto it = index_.find(charge);
    if (it == index_.end()) throw NotFoundError("unknown charge '" + charge.str() + "'");
    return rules_[it->second];
}

std::string RuleKB::to_document() const {
    json rules = json::array();
    for (const auto& r : rules_) {
        json entry = {{"name", r.charge_name.str()}, {"rule", r.text}};
        if (r.article_ref) entry["article_ref"] = *r.article_ref;
        rules.push_back(std::move(entry));
    }
    return json{{"rules", rules}}.dump(2) + "\n";
}

RuleKB RuleKB::from_document(std::string_view doc) {
    json parsed;
    try {
        parsed = json::parse(doc);
    } catch (const json::exception& e) {
        throw ParseError(std::string("rule KB is not valid JSON: ") + e.what(), std::string(doc));
    }
    if (!parsed.is_object() || !parsed.contains("rules") || !parsed["rules"].is_array()) {
        throw ParseError("rule KB lacks a 'rules' array", std::string(doc));
    }
    RuleKB kb;
    std::size_t i = 0;
    for (const auto& entry : parsed["rules"]) {
        const auto where = "rules[" + std::to_string(i++) + "]";
        if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string() || !entry.contains("rule") ||
            !entry["rule"].is_string()) {
            throw ParseError(where + ": needs string fields 'name' and 'rule'", entry.dump());
        }
        LegalRule rule{ChargeName(entry["name"].get<std::string>()), entry["rule"].get<std::string>(), std::nullopt};
        if (entry.contains("article_ref") && entry["article_ref"].is_string()) {
            rule.article_ref = entry["article_ref"].get<std::string>();
        }
        try {
            kb.add(std::move(rule));
        } catch (const ValidationError& e) {
            throw ParseError(where + ": " + e.what(), entry.dump());
        }
    }
    return kb;
}

void RuleKB::save(const std::filesystem::path& path) const { write_text_file(path, to_document()); }
RuleKB RuleKB::load(const std::filesystem::path& path) { return from_document(read_text_file(path)); }

std::string_view to_string(InsightSource s) {
    switch (s) {
        case InsightSource::success: return "success";
        case InsightSource::error_success_pair: return "error_success_pair";
        case InsightSource::transfer: return "transfer";
        case InsightSource::direct: return "direct";
    }
    return "success";
}

InsightSource insight_source_from_string(std::string_view s) {
    if (s == "success") return InsightSource::success;
    if (s == "error_success_pair") return InsightSource::error_success_pair;
    if (s == "transfer") return InsightSource::transfer;
    if (s == "direct") return InsightSource::direct;
    throw ValidationError("unknown insight source '" + std::string(s) + "'");
}

void InsightKB::put_insight(Insight insight) {
    if (insight.id.empty()) throw ValidationError("insight with empty id");
    if (insight.charge_name.empty() || insight.subtask_id.empty()) {
        throw ValidationError("insight '" + insight.id.str() + "' lacks a charge or sub-task");
    }
    if (text::trim(insight.text).empty()) throw ValidationError("insight '" + insight.id.str() + "' has empty text");
    if (insight.source == InsightSource::transfer && !insight.origin_charge) {
        throw ValidationError("transfer insight '" + insight.id.str() + "' has no origin charge");
    }
    if (has_id(insight.id)) throw ValidationError("duplicate insight id '" + insight.id.str() + "'");
    ids_.insert(insight.id);
    auto& list = buckets_[insight.charge_name][insight.subtask_id];
    list.push_back(std::move(insight));
}

const std::vector<Insight>& InsightKB::get_insights(const ChargeName& charge, const SubTaskId& subtask) const {
    static const std::vector<Insight> empty;
    auto c = buckets_.find(charge);
    if (c == buckets_.end()) return empty;
    auto s = c->second.find(subtask);
    return s == c->second.end() ? empty : s->second;
}

InsightBuckets InsightKB::bucket(const ChargeName& charge) const {
    auto c = buckets_.find(charge);
    return c == buckets_.end() ? InsightBuckets{} : c->second;
}

bool InsightKB::has_charge(const ChargeName& charge) const {
    auto c = buckets_.find(charge);
    if (c == buckets_.end()) return false;
    for (const auto& [_, list] : c->second) {
        if (!list.empty()) return true;
    }
    return false;
}

std::vector<ChargeName> InsightKB::charges() const {
    std::vector<ChargeName> out;
    for (const auto& [charge, _] : buckets_) {
        if (has_charge(charge)) out.push_back(charge);
    }
    return out;
}

std::string InsightKB::to_document() const {
    json charges = json::object();
    for (const auto& [charge, subtasks] : buckets_) {
        json per_charge = json::object();
        for (const auto& [subtask, list] : subtasks) {
            json records = json::array();
            for (const auto& in : list) {
                json r = {{"id", in.id.str()}, {"text", in.text}, {"source", std::string(to_string(in.source))}};
                if (in.origin_charge) r["origin_charge"] = in.origin_charge->str();
                records.push_back(std::move(r));
            }
            per_charge[subtask.str()] = std::move(records);
        }
        charges[charge.str()] = std::move(per_charge);
    }
    return json{{"charges", charges}}.dump(2) + "\n";
}

InsightKB InsightKB::from_document(std::string_view doc) {
    json parsed;
    try {
        parsed = json::parse(doc);
    } catch (const json::exception& e) {
        throw ParseError(std::string("insight KB is not valid JSON: ") + e.what(), std::string(doc));
    }
    if (!parsed.is_object() || !parsed.contains("charges") || !parsed["charges"].is_object()) {
        throw ParseError("insight KB lacks a 'charges' object", std::string(doc));
    }
    InsightKB kb;
    for (const auto& [charge, subtasks] : parsed["charges"].items()) {
        if (!subtasks.is_object()) throw ParseError("charges." + charge + ": expected an object", subtasks.dump());
        for (const auto& [subtask, records] : subtasks.items()) {
            const auto where = "charges." + charge + "." + subtask;
            if (!records.is_array()) throw ParseError(where + ": expected a list", records.dump());
            std::size_t i = 0;
            for (const auto& r : records) {
                const auto at = where + "[" + std::to_string(i++) + "]";
                if (!r.is_object() || !r.contains("id") || !r["id"].is_string() || !r.contains("text") ||
                    !r["text"].is_string() || !r.contains("source") || !r["source"].is_string()) {
                    throw ParseError(at + ": needs string fields 'id', 'text' and 'source'", r.dump());
                }
                try {
                    Insight in{InsightId(r["id"].get<std::string>()),
                               ChargeName(charge),
                               SubTaskId(subtask),
                               r["text"].get<std::string>(),
                               insight_source_from_string(r["source"].get<std::string>()),
                               std::nullopt};
                    if (r.contains("origin_charge") && r["origin_charge"].is_string()) {
                        in.origin_charge = ChargeName(r["origin_charge"].get<std::string>());
                    }
                    kb.put_insight(std::move(in));
                } catch (const ValidationError& e) {
                    throw ParseError(at + ": " + e.what(), r.dump());
                }
            }
            kb.buckets_[ChargeName(charge)][SubTaskId(subtask)];  // keep empty buckets
        }
    }
    return kb;
}

void InsightKB::save(const std::filesystem::path& path) const { write_text_file(path, to_document()); }
InsightKB InsightKB::load(const std::filesystem::path& path) { return from_document(read_text_file(path)); }

NeighborMatch nearest_rule(const Embedder& embedder, const LegalRule& query, const std::vector<LegalRule>& candidates) {
    if (candidates.empty()) throw PreconditionError("no trained rule to compare against");
    const auto q = embedder.embed(query.text);
    std::optional<NeighborMatch> best;
    for (const auto& c : candidates) {
        const double sim = cosine_similarity(q, embedder.embed(c.text));
        if (!best || sim > best->similarity || (sim == best->similarity && c.charge_name < best->charge)) {
            best = NeighborMatch{c.charge_name, sim};
        }
    }
    return *best;
}

TransferResult InsightTransfer::transfer_insights(const LegalRule& unseen, const InsightKB& kb, const RuleKB& rules,
                                                  const SubTaskSet& subtasks) const {
    std::vector<LegalRule> candidates;
    for (const auto& charge : kb.charges()) {
        if (charge != unseen.charge_name) candidates.push_back(rules.get_rule(charge));
    }
    if (candidates.empty()) throw PreconditionError("insight KB holds no trained charge to transfer from");
    TransferResult out;
    out.neighbor = nearest_rule(embedder_, unseen, candidates);
    const auto& reference = rules.get_rule(out.neighbor.charge);

    std::ostringstream reference_lines, aspect_lines;
    for (const auto& [subtask, list] : kb.bucket(out.neighbor.charge)) {
        for (const auto& in : list) reference_lines << subtask << " | " << in.text << "\n";
    }
    for (const auto& st : subtasks) aspect_lines << st.id << " | " << format_aspect(st) << "\n";

    const Bindings bindings = {
        {"reference_charge", reference.charge_name.str()},
        {"reference_rule", reference.text},
        {"reference_insights", reference_lines.str()},
        {"charge", unseen.charge_name.str()},
        {"rule", unseen.text},
        {"aspects", aspect_lines.str()},
    };
    CompletionRequest request{render(templates_.get("transfer_insight"), bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);

    std::map<SubTaskId, int> counters;
    for (const auto& [id, body] : parse_keyed_lines(reply.text)) {
        const SubTaskId subtask(id);
        if (!subtasks.contains(subtask)) {
            throw ValidationError("transfer reply names unknown sub-task '" + id + "'");
        }
        Insight in;
        in.id = InsightId("transfer:" + unseen.charge_name.str() + "/" + id + "/" + std::to_string(++counters[subtask]));
        in.charge_name = unseen.charge_name;
        in.subtask_id = subtask;
        in.text = body;
        in.source = InsightSource::transfer;
        in.origin_charge = out.neighbor.charge;
        out.insights.push_back(std::move(in));
    }
    if (out.insights.empty()) throw ParseError("transfer reply carries no insight line", reply.text);
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace malr
