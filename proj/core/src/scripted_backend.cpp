#include "malr/scripted_backend.hpp"

#include "malr/errors.hpp"
#include "malr/rule_world.hpp"
#include "malr/text.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace malr {

namespace {

using world::Attribute;
using world::Element;

std::string strip_examples(std::string_view prompt) {
    std::string out(prompt);
    const std::string open = "<examples>", close = "</examples>";
    std::size_t pos;
    while ((pos = out.find(open)) != std::string::npos) {
        const auto end = out.find(close, pos);
        if (end == std::string::npos) {
            out.erase(pos);
            break;
        }
        out.erase(pos, end + close.size() - pos);
    }
    return out;
}

std::vector<std::string> nonblank_lines(std::string_view s) {
    std::vector<std::string> out;
    for (auto& line : text::split_lines(s)) {
        auto t = text::trim(line);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

// "a | b | c" -> trimmed fields
std::vector<std::string> fields(std::string_view line) {
    std::vector<std::string> out;
    for (auto& f : text::split(line, '|')) out.emplace_back(text::trim(f));
    return out;
}

std::string label_of_aspect(std::string_view aspect) {
    const auto colon = aspect.find(':');
    return std::string(text::trim(colon == std::string_view::npos ? aspect : aspect.substr(0, colon)));
}

enum class Truth { yes, no, unknown };

std::string_view answer_word(Truth t) {
    switch (t) {
        case Truth::yes: return "YES";
        case Truth::no: return "NO";
        case Truth::unknown: return "UNCERTAIN";
    }
    return "UNCERTAIN";
}

Truth evaluate(const std::optional<Element>& element, const std::map<std::string, Attribute>& attrs,
               std::string_view knowledge_text) {
    if (!element) return Truth::yes;
    auto it = attrs.find(element->key);
    if (it == attrs.end()) return Truth::no;
    const auto& attr = it->second;
    if (attr.opaque) {
        auto category = world::stated_category(knowledge_text, attr.value);
        if (!category) return Truth::unknown;
        return *category == element->value ? Truth::yes : Truth::no;
    }
    return attr.value == element->value ? Truth::yes : Truth::no;
}

std::string describe_attr(const std::map<std::string, Attribute>& attrs, const std::string& key) {
    auto it = attrs.find(key);
    if (it == attrs.end()) return "nothing about the " + world::humanize(key);
    if (it->second.opaque) return "the position " + world::humanize(it->second.value);
    return world::humanize(key) + " " + world::humanize(it->second.value);
}

std::string insight_text(const std::string& key, const std::optional<Element>& element) {
    const auto label = world::aspect_label(key);
    if (!element) {
        return "If the rule sets no requirement on the " + label + " aspect, then that aspect is satisfied. " +
               world::note_marker(key);
    }
    std::string out = "If the fact shows that the " + world::humanize(key) + " is " + world::humanize(element->value) +
                      ", then the " + label + " element of this charge is satisfied; otherwise it is not. " +
                      world::note_marker(key);
    if (element->verify) {
        out += " If the fact only names a position, then ask an expert whether it counts as " +
               world::humanize(element->value) + ". " + world::fact_check_marker(key, element->value);
    }
    return out;
}

bool has_if_then_words(std::string_view s) {
    const auto ws = text::words(s);
    return std::find(ws.begin(), ws.end(), "if") != ws.end() && std::find(ws.begin(), ws.end(), "then") != ws.end();
}

class Responder {
public:
    Responder(const ScriptedConfig& config, std::string_view prompt)
        : config_(config), prompt_(strip_examples(prompt)), task_(task_of(prompt)) {}

    std::string run() const {
        if (task_ == "plan") return plan();
        if (task_ == "canonicalize") return canonicalize();
        if (task_ == "judge") return judge();
        if (task_ == "reflect") return reflect();
        if (task_ == "draw_pair") return draw_pair();
        if (task_ == "draw_success") return draw_success();
        if (task_ == "filter") return filter();
        if (task_ == "direct_insight") return direct_insight();
        if (task_ == "transfer_insight") return transfer_insight();
        if (task_ == "select_fact_check") return select_fact_check();
        if (task_ == "key_question") return key_question();
        if (task_ == "expert") return "Unknown.";
        if (task_.rfind("baseline_", 0) == 0) return baseline();
        return "Unsupported request.";
    }

private:
    std::string section(std::string_view tag) const { return tagged_section(prompt_, tag); }

    bool flawed_on(const std::string& key) const {
        return config_.mode == ScriptedMode::flawed && key == config_.flawed_element;
    }

    // Finding an agent reports for one element; hints (insight or reflection notes) and
    // expert answers live in `context`.
    Truth agent_finding(const std::string& key, const std::optional<Element>& element,
                        const std::map<std::string, Attribute>& attrs, std::string_view context) const {
        if (config_.mode == ScriptedMode::affirmative) return Truth::yes;
        if (flawed_on(key) && element && !world::has_note(context, key)) return Truth::yes;
        return evaluate(element, attrs, context);
    }

    std::string plan() const {
        const auto rule = section("rule");
        const auto fact = section("fact");
        const auto elements = world::parse_elements(rule);
        if (elements.empty()) return "The rule cannot be decomposed.";
        const auto aliases = world::plan_aliases(fact);
        std::ostringstream out;
        out << "Sub-tasks:\n";
        int n = 0;
        for (const auto& e : elements) {
            const bool alias = std::find(aliases.begin(), aliases.end(), e.key) != aliases.end();
            out << ++n << ". " << (alias ? world::alias_label(e.key) : world::aspect_label(e.key)) << " - Check whether the "
                << world::humanize(e.key) << " described in the fact meets the rule's requirement.\n";
        }
        for (const auto& extra : world::plan_extras(fact)) {
            out << ++n << ". " << extra << " - Consider the " << text::to_lower(extra) << " of the case.\n";
        }
        return out.str();
    }

    std::string canonicalize() const {
        std::ostringstream out;
        for (const auto& raw : nonblank_lines(section("labels"))) {
            out << raw << " => " << world::canonical_label(raw) << "\n";
        }
        return out.str();
    }

    std::string judge() const {
        const auto key = world::element_key_for_label(label_of_aspect(section("aspect")));
        const auto rule = section("rule");
        const auto attrs = world::parse_attributes(section("fact"));
        const std::string context = section("insights") + "\n" + section("reflection") + "\n" + section("feedback");
        if (world::parse_elements(rule).empty() && config_.mode != ScriptedMode::affirmative) {
            return "This request falls outside what the scripted backend models.";
        }
        const auto element = world::find_element(rule, key);
        const Truth t = agent_finding(key, element, attrs, context);
        std::ostringstream out;
        if (!element) {
            out << "The rule sets no requirement on the " << world::aspect_label(key) << " aspect.";
        } else {
            out << "The rule requires the " << world::humanize(key) << " to be " << world::humanize(element->value)
                << "; the fact states " << describe_attr(attrs, key) << ".";
        }
        out << "\nANSWER: " << answer_word(t);
        return out.str();
    }

    std::string reflect() const {
        const auto rule = section("rule");
        const auto attrs = world::parse_attributes(section("fact"));
        struct Line {
            std::string id, key;
            std::string finding;
            bool wrong;
        };
        std::vector<Line> lines;
        for (const auto& row : nonblank_lines(section("trajectory"))) {
            auto f = fields(row);
            if (f.size() < 3) continue;
            const auto key = world::element_key_for_label(f[1]);
            const Truth truth = evaluate(world::find_element(rule, key), attrs, "");
            const std::string expected = truth == Truth::yes ? "satisfied"
                                         : truth == Truth::no ? "not_satisfied"
                                                              : "uncertain";
            lines.push_back({f[0], key, f[2], f[2] != expected});
        }
        std::ostringstream out;
        const bool any_wrong = std::any_of(lines.begin(), lines.end(), [](const Line& l) { return l.wrong; });
        if (!any_wrong) return "Every sub-task agent answered consistently with the rule.";
        if (config_.reflector == ReflectorQuality::misdirected) {
            for (const auto& l : lines) {
                if (!l.wrong) {
                    out << "ERROR: " << l.id << " | The " << world::aspect_label(l.key)
                        << " agent overlooked the rule's requirement. " << world::note_marker(l.key) << "\n";
                    return out.str();
                }
            }
            return "Every sub-task agent may have erred.";
        }
        for (const auto& l : lines) {
            if (!l.wrong) continue;
            const auto element = world::find_element(rule, l.key);
            out << "ERROR: " << l.id << " | The " << world::aspect_label(l.key) << " agent answered " << l.finding;
            if (element) {
                out << ", but the rule requires the " << world::humanize(l.key) << " to be "
                    << world::humanize(element->value) << " and the fact states " << describe_attr(attrs, l.key) << ".";
            } else {
                out << ", but the rule sets no requirement on this aspect.";
            }
            out << " " << world::note_marker(l.key) << "\n";
        }
        return out.str();
    }

    std::string draw_pair() const {
        const auto key = world::element_key_for_label(label_of_aspect(section("aspect")));
        return insight_text(key, world::find_element(section("rule"), key));
    }

    std::string draw_success() const {
        const std::string golden_charge(text::trim(section("golden_charge")));
        const std::string confusing_charge(text::trim(section("confusing_charge")));
        const auto golden_rule = section("golden_rule");
        const auto confusing_rule = section("confusing_rule");
        std::map<std::string, std::pair<std::string, std::string>> golden;  // id -> (key, finding)
        for (const auto& row : nonblank_lines(section("golden_trajectory"))) {
            auto f = fields(row);
            if (f.size() >= 3) golden[f[0]] = {world::element_key_for_label(f[1]), f[2]};
        }
        std::ostringstream out;
        for (const auto& row : nonblank_lines(section("confusing_trajectory"))) {
            auto f = fields(row);
            if (f.size() < 3) continue;
            auto it = golden.find(f[0]);
            if (it == golden.end() || it->second.second == f[2]) continue;
            const auto& key = it->second.first;
            out << golden_charge << " | " << f[0] << " | " << insight_text(key, world::find_element(golden_rule, key))
                << "\n";
            out << confusing_charge << " | " << f[0] << " | "
                << insight_text(key, world::find_element(confusing_rule, key)) << "\n";
        }
        return out.str();
    }

    std::string filter() const {
        std::vector<std::string> keep;
        std::set<std::string> seen;
        for (const auto& row : nonblank_lines(section("insights"))) {
            const auto bar = row.find('|');
            if (bar == std::string::npos) continue;
            const std::string id(text::trim(std::string_view(row).substr(0, bar)));
            const std::string body(text::trim(std::string_view(row).substr(bar + 1)));
            if (!has_if_then_words(body)) continue;
            if (!seen.insert(body).second) continue;
            keep.push_back(id);
        }
        return "KEEP: " + (keep.empty() ? std::string("none") : text::join(keep, ", "));
    }

    std::string direct_insight() const {
        std::ostringstream out;
        for (const auto& row : nonblank_lines(section("aspects"))) {
            auto f = fields(row);
            if (f.size() < 2) continue;
            const auto label = label_of_aspect(f[1]);
            out << f[0] << " | If the fact meets what the rule describes for the " << label << " aspect, then the "
                << label << " element is satisfied.\n";
        }
        return out.str();
    }

    std::string transfer_insight() const {
        std::map<std::string, std::string> labels;
        for (const auto& row : nonblank_lines(section("aspects"))) {
            auto f = fields(row);
            if (f.size() >= 2) labels[f[0]] = label_of_aspect(f[1]);
        }
        const auto rule = section("rule");
        std::set<std::string> done;
        std::ostringstream out;
        for (const auto& row : nonblank_lines(section("reference_insights"))) {
            auto f = fields(row);
            if (f.size() < 2 || !done.insert(f[0]).second) continue;
            auto it = labels.find(f[0]);
            const auto key = world::element_key_for_label(it == labels.end() ? f[0] : it->second);
            out << f[0] << " | " << insight_text(key, world::find_element(rule, key)) << "\n";
        }
        return out.str();
    }

    std::string select_fact_check() const {
        std::vector<std::string> ids;
        for (const auto& row : nonblank_lines(section("insights"))) {
            auto f = fields(row);
            if (f.size() < 2 || world::fact_checks(f[1]).empty()) continue;
            if (std::find(ids.begin(), ids.end(), f[0]) == ids.end()) ids.push_back(f[0]);
        }
        return "CHECK: " + (ids.empty() ? std::string("none") : text::join(ids, ", "));
    }

    std::string key_question() const {
        const auto key = world::element_key_for_label(label_of_aspect(section("aspect")));
        const auto attrs = world::parse_attributes(section("fact"));
        for (const auto& [check_key, value] : world::fact_checks(section("insights"))) {
            if (check_key != key) continue;
            auto it = attrs.find(key);
            if (it == attrs.end()) return "";
            return world::key_question(it->second.value, value);
        }
        return "";
    }

    std::string baseline() const {
        const auto rule = section("rule");
        const auto attrs = world::parse_attributes(section("fact"));
        const auto elements = world::parse_elements(rule);
        if (elements.empty() && config_.mode != ScriptedMode::affirmative) {
            return "The rule text gives nothing to compare against the fact.";
        }
        std::ostringstream out;
        bool all_yes = true;
        const bool element_wise = task_ == "baseline_chain_of_logic";
        out << "Comparing the fact with the rule.\n";
        for (const auto& e : elements) {
            const Truth t = agent_finding(e.key, e, attrs, "");
            all_yes = all_yes && t == Truth::yes;
            if (element_wise) out << "ELEMENT " << e.key << ": " << answer_word(t) << "\n";
        }
        out << "ANSWER: " << (all_yes ? "YES" : "NO");
        return out.str();
    }

    const ScriptedConfig& config_;
    std::string prompt_;
    std::string task_;
};

}  // namespace

ScriptedConfig ScriptedConfig::parse(std::string_view spec) {
    auto parts = text::split(text::trim(spec), ':');
    ScriptedConfig cfg;
    const auto mode = text::to_lower(parts.at(0));
    if (mode == "perfect") {
        cfg.mode = ScriptedMode::perfect;
    } else if (mode == "affirmative") {
        cfg.mode = ScriptedMode::affirmative;
    } else if (mode == "flawed") {
        cfg.mode = ScriptedMode::flawed;
        if (parts.size() < 2 || text::trim(parts[1]).empty()) {
            throw PreconditionError("flawed scripted mode needs an element: flawed:<element>");
        }
        cfg.flawed_element = std::string(text::trim(parts[1]));
    } else {
        throw PreconditionError("unknown scripted mode '" + std::string(spec) + "'");
    }
    const std::size_t reflector_at = cfg.mode == ScriptedMode::flawed ? 2 : 1;
    if (parts.size() > reflector_at) {
        const auto r = text::to_lower(text::trim(parts[reflector_at]));
        if (r == "misdirected") {
            cfg.reflector = ReflectorQuality::misdirected;
        } else if (r != "accurate") {
            throw PreconditionError("unknown reflector quality '" + r + "'");
        }
    }
    return cfg;
}

std::string ScriptedConfig::describe() const {
    std::string out = mode == ScriptedMode::perfect ? "perfect" : mode == ScriptedMode::affirmative ? "affirmative" : "flawed";
    if (mode == ScriptedMode::flawed) out += ":" + flawed_element;
    if (reflector == ReflectorQuality::misdirected) out += ":misdirected";
    return out;
}

std::string tagged_section(std::string_view prompt, std::string_view tag) {
    const std::string stripped = strip_examples(prompt);
    const std::string open = "<" + std::string(tag) + ">", close = "</" + std::string(tag) + ">";
    const auto start = stripped.find(open);
    if (start == std::string::npos) return {};
    const auto body = start + open.size();
    const auto end = stripped.find(close, body);
    return stripped.substr(body, end == std::string::npos ? std::string::npos : end - body);
}

std::string task_of(std::string_view prompt) {
    const auto t = text::trim(prompt);
    if (t.substr(0, 6) != "[TASK ") return {};
    const auto end = t.find(']');
    if (end == std::string_view::npos) return {};
    return std::string(text::trim(t.substr(6, end - 6)));
}

std::string ScriptedBackend::respond(std::string_view prompt) const { return Responder(config_, prompt).run(); }

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) const {
    CompletionResult out;
    out.text = respond(request.rendered_prompt);
    out.prompt_tokens = static_cast<long>(text::whitespace_token_count(request.rendered_prompt) +
                                          (request.role_preamble ? text::whitespace_token_count(*request.role_preamble) : 0));
    out.output_tokens = static_cast<long>(text::whitespace_token_count(out.text));
    out.backend_id = id();
    return out;
}

}  // namespace malr
