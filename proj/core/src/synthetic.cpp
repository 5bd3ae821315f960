#include "malr/synthetic.hpp"

#include "malr/errors.hpp"
#include "malr/eval.hpp"
#include "malr/knowledge.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>

namespace malr {

namespace {

using world::Attribute;
using world::Element;

struct ChargeSpec {
    const char* name;
    const char* summary;
    const char* subject;
    const char* mental;
    const char* object;
    const char* conduct;
};

struct PairSpec {
    ChargeSpec a;
    ChargeSpec b;
    const char* differs;  // element key the two rules disagree on
};

// Each pair shares three elements and disagrees on the fourth.
const std::array<PairSpec, 8> kPairs = {{
    {{"Embezzlement", "A state functionary takes public property entrusted to the office as their own.",
      "state_functionary", "intent", "public_property", "misappropriation_through_office"},
     {"Job embezzlement", "An employee of a company takes property of the unit entrusted to the post as their own.",
      "non_state_functionary", "intent", "public_property", "misappropriation_through_office"},
     "subject"},
    {{"Bribe acceptance", "A state functionary accepts property and seeks a benefit for the giver through the office.",
      "state_functionary", "intent", "integrity_of_office", "accepting_property_for_benefit"},
     {"Non-state bribe acceptance",
      "An employee of a company accepts property and seeks a benefit for the giver through the post.",
      "non_state_functionary", "intent", "integrity_of_office", "accepting_property_for_benefit"},
     "subject"},
    {{"Intentional homicide", "A person deliberately takes the life of another.", "any_person", "intent", "life",
      "causing_death"},
     {"Negligent homicide", "A person causes the death of another through carelessness.", "any_person", "negligence",
      "life", "causing_death"},
     "mental"},
    {{"Intentional injury", "A person deliberately harms the body of another.", "any_person", "intent",
      "bodily_health", "causing_injury"},
     {"Negligent serious injury", "A person seriously injures another through carelessness.", "any_person",
      "negligence", "bodily_health", "causing_injury"},
     "mental"},
    {{"Robbery", "A person takes property from another by force or threat of force.", "any_person",
      "intent_to_possess", "property", "violent_taking"},
     {"Theft", "A person takes property of another in secret.", "any_person", "intent_to_possess", "property",
      "secret_taking"},
     "conduct"},
    {{"Extortion", "A person obtains property of another by threats or intimidation.", "any_person",
      "intent_to_possess", "property", "coercive_demand"},
     {"Fraud", "A person obtains property of another by fabricating facts or hiding the truth.", "any_person",
      "intent_to_possess", "property", "deceptive_taking"},
     "conduct"},
    {{"Intentional destruction of property", "A person deliberately destroys or damages property of another.",
      "any_person", "intent", "ownership_of_property", "destroying_property"},
     {"Sabotage of production", "A person destroys machinery or equipment to disrupt production.", "any_person",
      "intent", "production_operations", "destroying_property"},
     "object"},
    {{"Obstruction of official duties", "A person uses violence or threats to stop an officer performing duties.",
      "any_person", "intent", "public_administration", "violent_obstruction"},
     {"Picking quarrels", "A person provokes trouble in a public place and seriously disturbs public order.",
      "any_person", "intent", "public_order", "violent_obstruction"},
     "object"},
}};

// Named positions whose category only the expert knows. The first two are state
// functionaries, the last two are not.
const std::array<std::pair<const char*, const char*>, 4> kPositions = {{
    {"deputy_director_of_the_finance_bureau", "state_functionary"},
    {"township_tax_officer", "state_functionary"},
    {"company_accountant", "non_state_functionary"},
    {"private_hospital_purchasing_manager", "non_state_functionary"},
}};

std::vector<Element> elements_of(const ChargeSpec& c, bool verify_subject) {
    return {
        {"subject", c.subject, verify_subject},
        {"mental", c.mental, false},
        {"object", c.object, false},
        {"conduct", c.conduct, false},
    };
}

std::string rule_text(const ChargeSpec& c, bool verify_subject) {
    std::string out = std::string(c.name) + ". " + c.summary;
    for (const auto& e : elements_of(c, verify_subject)) out += " " + world::element_marker(e);
    return out;
}

std::string fact_text(const ChargeSpec& golden, const std::string& case_id, const std::string& opaque_position,
                      const std::vector<std::string>& noise) {
    std::string out = "In case " + case_id + " the defendant ";
    out += opaque_position.empty() ? "is a " + world::humanize(golden.subject) : "works as a " + world::humanize(opaque_position);
    out += ", acted with " + world::humanize(golden.mental) + ", engaged in " + world::humanize(golden.conduct) +
           " and harmed " + world::humanize(golden.object) + ".";
    out += " " + world::attribute_marker(opaque_position.empty() ? Attribute{"subject", golden.subject, false}
                                                                 : Attribute{"subject", opaque_position, true});
    out += " " + world::attribute_marker({"mental", golden.mental, false});
    out += " " + world::attribute_marker({"object", golden.object, false});
    out += " " + world::attribute_marker({"conduct", golden.conduct, false});
    for (const auto& n : noise) out += " " + n;
    return out;
}

std::string pair_tag(const PairSpec& p) { return std::string(p.a.name) + " / " + p.b.name; }

std::string numbered(const char* prefix, int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%02d", prefix, n);
    return buf;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus() {
    SyntheticCorpus corpus;
    for (const auto& p : kPairs) {
        const bool verify = std::string(p.differs) == "subject";
        for (const auto* c : {&p.a, &p.b}) {
            corpus.rules.push_back(
                LegalRule{ChargeName(c->name), rule_text(*c, verify), "R-" + std::to_string(corpus.rules.size() + 1)});
        }
    }
    for (const auto& [position, category] : kPositions) corpus.knowledge.emplace(position, category);

    // Planner noise on training cases: a synonym label on every third case, "Sentencing"
    // on five cases and "Harm" on three.
    int train_n = 0, eval_n = 0, state_pos = 0, non_state_pos = 2;
    for (std::size_t pi = 0; pi < kPairs.size(); ++pi) {
        const auto& p = kPairs[pi];
        const bool subject_pair = std::string(p.differs) == "subject";
        for (int side = 0; side < 2; ++side) {
            const auto& golden = side == 0 ? p.a : p.b;
            const auto& confusing = side == 0 ? p.b : p.a;
            for (int k = 0; k < 2; ++k) {
                const auto id = numbered("train", ++train_n);
                std::vector<std::string> noise;
                if (train_n % 3 == 0) noise.push_back("[PLAN-ALIAS " + std::string(train_n % 2 ? "subject" : "mental") + "]");
                if (train_n % 6 == 1 && train_n < 31) noise.push_back("[PLAN-EXTRA Sentencing]");
                if (train_n % 10 == 5) noise.push_back("[PLAN-EXTRA Harm]");
                corpus.train.push_back(CaseRecord{FactDescription{CaseId(id), fact_text(golden, id, "", noise)},
                                                  {{ChargeName(golden.name), true}, {ChargeName(confusing.name), false}},
                                                  pair_tag(p)});
            }
            for (int k = 0; k < 2; ++k) {
                const auto id = numbered("eval", ++eval_n);
                std::string position;
                if (subject_pair && k == 1) {
                    position = std::string(golden.subject) == "state_functionary" ? kPositions[state_pos++ % 2].first
                                                                                  : kPositions[non_state_pos++ % 2 + 2].first;
                }
                corpus.eval.push_back(CaseRecord{FactDescription{CaseId(id), fact_text(golden, id, position, {})},
                                                 {{ChargeName(golden.name), true}, {ChargeName(confusing.name), false}},
                                                 pair_tag(p)});
            }
        }
    }
    return corpus;
}

std::string knowledge_to_document(const world::Knowledge& knowledge) {
    nlohmann::json positions = nlohmann::json::object();
    for (const auto& [position, category] : knowledge) positions[position] = category;
    return nlohmann::json{{"positions", positions}}.dump(2) + "\n";
}

world::Knowledge load_knowledge(const std::filesystem::path& path) {
    const auto raw = read_text_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("knowledge table '" + path.string() + "' is not valid JSON: " + e.what(), raw);
    }
    if (!doc.is_object() || !doc.contains("positions") || !doc["positions"].is_object()) {
        throw ParseError("knowledge table '" + path.string() + "' lacks a 'positions' object", raw);
    }
    world::Knowledge out;
    for (const auto& [position, category] : doc["positions"].items()) {
        if (!category.is_string()) throw ParseError("knowledge entry '" + position + "' is not a string", category.dump());
        out.emplace(position, category.get<std::string>());
    }
    return out;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
    RuleKB(corpus.rules).save(dir / "rules.json");
    write_text_file(dir / "train.jsonl", cases_to_jsonl(corpus.train));
    write_text_file(dir / "eval.jsonl", cases_to_jsonl(corpus.eval));
    write_text_file(dir / "knowledge.json", knowledge_to_document(corpus.knowledge));
    nlohmann::ordered_json exemplars = nlohmann::ordered_json::array();
    for (const auto& e : default_exemplars()) {
        exemplars.push_back(
            {{"fact", e.fact}, {"rule", e.rule}, {"charge", e.charge}, {"reasoning", e.reasoning}, {"guilty", e.guilty}});
    }
    write_text_file(dir / "exemplars.json", nlohmann::ordered_json{{"exemplars", exemplars}}.dump(2) + "\n");
}

}  // namespace malr
