#include "malr/planner.hpp"

#include "malr/errors.hpp"
#include "malr/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

namespace malr {

using json = nlohmann::json;

void PlannerConfig::validate() const {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw PreconditionError("zeta must lie in (0, 1], got " + std::to_string(zeta));
}

std::vector<SubTaskProposal> parse_proposals(std::string_view raw, const CaseId& sample) {
    static const std::regex item(R"(^\s*(?:\d+[.)]|[-*])\s+(.+)$)");
    std::vector<SubTaskProposal> out;
    for (const auto& line : text::split_lines(raw)) {
        std::smatch m;
        if (!std::regex_match(line, m, item)) continue;
        const std::string body = m[1].str();
        std::size_t cut = body.find(" - ");
        std::size_t skip = 3;
        if (cut == std::string::npos) {
            cut = body.find(": ");
            skip = 2;
        }
        SubTaskProposal p;
        p.source_sample_id = sample;
        if (cut == std::string::npos) {
            p.raw_label = std::string(text::trim(body));
        } else {
            p.raw_label = std::string(text::trim(std::string_view(body).substr(0, cut)));
            p.description = std::string(text::trim(std::string_view(body).substr(cut + skip)));
        }
        if (!p.raw_label.empty()) out.push_back(std::move(p));
    }
    if (out.empty()) throw ParseError("planner output for '" + sample.str() + "' contains no list item", std::string(raw));
    return out;
}

PlanResult filter_by_frequency(const std::vector<SubTaskProposal>& canonical_proposals, int sample_count, double zeta) {
    if (sample_count < 1) throw PreconditionError("sample count must be at least 1");
    std::map<std::string, std::set<CaseId>> proposers;
    std::map<std::string, std::string> description;
    for (const auto& p : canonical_proposals) {
        proposers[p.raw_label].insert(p.source_sample_id);
        description.emplace(p.raw_label, p.description);
    }
    PlanResult out;
    out.sample_count = sample_count;
    out.zeta = zeta;
    for (const auto& [label, samples] : proposers) {
        const int n = static_cast<int>(samples.size());
        if (n > sample_count) {
            throw PreconditionError("label '" + label + "' proposed by more samples than the sample count");
        }
        LabelFrequency f{label, n, static_cast<double>(n) / sample_count};
        (f.probability >= zeta ? out.kept : out.dropped).push_back(f);
    }
    const auto order = [](const LabelFrequency& a, const LabelFrequency& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        return a.label < b.label;
    };
    std::sort(out.kept.begin(), out.kept.end(), order);
    std::sort(out.dropped.begin(), out.dropped.end(), order);
    std::vector<SubTask> subtasks;
    for (const auto& f : out.kept) {
        subtasks.push_back(SubTask{SubTaskId(text::slug(f.label)), f.label, description[f.label], f.probability});
    }
    out.subtasks = SubTaskSet(std::move(subtasks));
    return out;
}

std::string planning_question(const ChargeName& charge) {
    return "Does the fact description constitute the charge of " + charge.str() + "?";
}

std::vector<SubTaskProposal> AutoPlanner::propose_subtasks(const std::string& question, const LegalRule& rule,
                                                           const FactDescription& fact,
                                                           const std::string& template_name) const {
    if (text::trim(rule.text).empty() || text::trim(fact.text).empty()) {
        throw PreconditionError("planning needs a non-empty rule and fact");
    }
    const Bindings bindings = {{"question", question}, {"rule", rule.text}, {"fact", fact.text}};
    CompletionRequest request{render(templates_.get(template_name), bindings), std::nullopt, decoding_};
    return parse_proposals(complete(request, backend_).text, fact.case_id);
}

std::map<std::string, std::string> AutoPlanner::canonicalize(const std::vector<std::string>& raw_labels,
                                                             const std::string& template_name) const {
    std::vector<std::string> distinct;
    for (const auto& l : raw_labels) {
        if (std::find(distinct.begin(), distinct.end(), l) == distinct.end()) distinct.push_back(l);
    }
    std::map<std::string, std::string> out;
    for (const auto& l : distinct) out[l] = l;
    if (distinct.empty()) return out;
    CompletionRequest request{render(templates_.get(template_name), {{"labels", text::join(distinct, "\n")}}),
                              std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    for (const auto& line : text::split_lines(reply.text)) {
        const auto arrow = line.find("=>");
        if (arrow == std::string::npos) continue;
        const std::string raw(text::trim(std::string_view(line).substr(0, arrow)));
        const std::string canonical(text::trim(std::string_view(line).substr(arrow + 2)));
        if (out.count(raw) && !canonical.empty()) out[raw] = canonical;
    }
    return out;
}

PlanResult AutoPlanner::consolidate(const std::vector<SubTaskProposal>& proposals, int sample_count, double zeta,
                                    const std::string& template_name) const {
    if (proposals.empty()) throw PreconditionError("no sub-task proposals to consolidate");
    if (sample_count < 1) throw PreconditionError("sample count must be at least 1");
    std::vector<std::string> labels;
    for (const auto& p : proposals) labels.push_back(p.raw_label);
    const auto mapping = canonicalize(labels, template_name);
    std::vector<SubTaskProposal> canonical = proposals;
    for (auto& p : canonical) p.raw_label = mapping.at(p.raw_label);
    return filter_by_frequency(canonical, sample_count, zeta);
}

PlanResult AutoPlanner::plan(const PlannerConfig& config, const std::vector<CaseRecord>& corpus,
                             const RuleKB& rules) const {
    config.validate();
    if (config.samples.empty()) throw PreconditionError("planning needs at least one training sample");
    std::vector<SubTaskProposal> proposals;
    for (const auto& ref : config.samples) {
        auto it = std::find_if(corpus.begin(), corpus.end(),
                               [&](const CaseRecord& r) { return r.fact.case_id == ref.case_id; });
        if (it == corpus.end()) throw NotFoundError("training sample '" + ref.case_id.str() + "' is not in the corpus");
        const auto& rule = rules.get_rule(ref.charge);
        const auto where = "sample '" + ref.case_id.str() + "' (" + ref.charge.str() + "): ";
        try {
            auto got = propose_subtasks(planning_question(ref.charge), rule, it->fact, config.planner_template);
            proposals.insert(proposals.end(), got.begin(), got.end());
        } catch (const ParseError& e) {
            throw ParseError(where + e.what(), e.raw_text());
        } catch (const MalformedResponseError& e) {
            throw MalformedResponseError(where + e.what(), e.raw_payload());
        } catch (const BackendError& e) {
            throw BackendError(where + e.what());
        }
    }
    return consolidate(proposals, static_cast<int>(config.samples.size()), config.zeta, config.canonicalizer_template);
}

std::vector<TrainingSampleRef> golden_samples(const std::vector<CaseRecord>& corpus) {
    std::vector<TrainingSampleRef> out;
    for (const auto& r : corpus) {
        for (const auto& q : r.queries) {
            if (q.expected_guilty) out.push_back({r.fact.case_id, q.charge_name});
        }
    }
    return out;
}

std::string plan_to_document(const PlanResult& plan) {
    json subtasks = json::array();
    for (const auto& st : plan.subtasks) {
        subtasks.push_back(
            {{"id", st.id.str()}, {"label", st.label}, {"description", st.description}, {"probability", st.probability}});
    }
    json dropped = json::array();
    for (const auto& f : plan.dropped) {
        dropped.push_back({{"label", f.label}, {"samples", f.samples}, {"probability", f.probability}});
    }
    return json{{"subtasks", subtasks}, {"sample_count", plan.sample_count}, {"zeta", plan.zeta}, {"dropped", dropped}}
               .dump(2) +
           "\n";
}

SubTaskSet subtasks_from_document(std::string_view doc) {
    json parsed;
    try {
        parsed = json::parse(doc);
    } catch (const json::exception& e) {
        throw ParseError(std::string("sub-task document is not valid JSON: ") + e.what(), std::string(doc));
    }
    if (!parsed.is_object() || !parsed.contains("subtasks") || !parsed["subtasks"].is_array()) {
        throw ParseError("sub-task document lacks a 'subtasks' array", std::string(doc));
    }
    std::vector<SubTask> out;
    std::size_t i = 0;
    for (const auto& s : parsed["subtasks"]) {
        const auto where = "subtasks[" + std::to_string(i++) + "]";
        if (!s.is_object() || !s.contains("id") || !s["id"].is_string() || !s.contains("label") ||
            !s["label"].is_string()) {
            throw ParseError(where + ": needs string fields 'id' and 'label'", s.dump());
        }
        out.push_back(SubTask{SubTaskId(s["id"].get<std::string>()), s["label"].get<std::string>(),
                              s.value("description", std::string()), s.value("probability", 1.0)});
    }
    try {
        return SubTaskSet(std::move(out));
    } catch (const ValidationError& e) {
        throw ParseError(std::string("sub-task document: ") + e.what(), std::string(doc));
    }
}

SubTaskSet load_subtasks(const std::filesystem::path& path) { return subtasks_from_document(read_text_file(path)); }

}  // namespace malr
