#include "malr/rule_world.hpp"

#include "malr/text.hpp"

#include <array>
#include <cctype>

namespace malr::world {

namespace {

// Contents of every "[TAG ...]" marker, in order.
std::vector<std::string> marker_bodies(std::string_view text, std::string_view tag) {
    std::vector<std::string> out;
    const std::string open = "[" + std::string(tag) + " ";
    std::size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string_view::npos) {
        const auto start = pos + open.size();
        const auto end = text.find(']', start);
        if (end == std::string_view::npos) break;
        out.emplace_back(text::trim(text.substr(start, end - start)));
        pos = end + 1;
    }
    return out;
}

std::pair<std::string, std::string> split_kv(std::string_view body) {
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) return {std::string(text::trim(body)), std::string()};
    return {std::string(text::trim(body.substr(0, eq))), std::string(text::trim(body.substr(eq + 1)))};
}

struct AliasEntry {
    const char* key;
    const char* alias;
};

constexpr std::array<AliasEntry, 4> kAliases = {{
    {"subject", "Subject qualification"},
    {"mental", "Mens rea"},
    {"object", "Protected object"},
    {"conduct", "Objective conduct"},
}};

}  // namespace

std::vector<Element> parse_elements(std::string_view rule_text) {
    std::vector<Element> out;
    for (const auto& body : marker_bodies(rule_text, "ELEM")) {
        auto parts = text::split(body, ' ');
        auto [key, value] = split_kv(parts.front());
        if (key.empty()) continue;
        Element e{key, value, false};
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (text::trim(parts[i]) == "verify") e.verify = true;
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::optional<Element> find_element(std::string_view rule_text, std::string_view key) {
    for (auto& e : parse_elements(rule_text)) {
        if (e.key == key) return e;
    }
    return std::nullopt;
}

std::map<std::string, Attribute> parse_attributes(std::string_view fact_text) {
    std::map<std::string, Attribute> out;
    for (const auto& body : marker_bodies(fact_text, "ATTR")) {
        auto [key, value] = split_kv(body);
        if (key.empty()) continue;
        Attribute a{key, value, false};
        if (!a.value.empty() && a.value.front() == '~') {
            a.opaque = true;
            a.value.erase(0, 1);
        }
        out.insert_or_assign(key, std::move(a));
    }
    return out;
}

std::vector<std::string> plan_aliases(std::string_view fact_text) { return marker_bodies(fact_text, "PLAN-ALIAS"); }
std::vector<std::string> plan_extras(std::string_view fact_text) { return marker_bodies(fact_text, "PLAN-EXTRA"); }

std::string element_marker(const Element& e) {
    return "[ELEM " + e.key + "=" + e.value + (e.verify ? " verify]" : "]");
}

std::string attribute_marker(const Attribute& a) {
    return "[ATTR " + a.key + "=" + (a.opaque ? "~" : "") + a.value + "]";
}

std::string note_marker(std::string_view key) { return "[NOTE " + std::string(key) + "]"; }

std::string fact_check_marker(std::string_view key, std::string_view value) {
    return "[FACT-CHECK " + std::string(key) + "=" + std::string(value) + "]";
}

bool has_note(std::string_view text, std::string_view key) {
    for (const auto& body : marker_bodies(text, "NOTE")) {
        if (body == key) return true;
    }
    return false;
}

std::vector<std::pair<std::string, std::string>> fact_checks(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& body : marker_bodies(text, "FACT-CHECK")) out.push_back(split_kv(body));
    return out;
}

std::string aspect_label(std::string_view key) {
    std::string out(key);
    for (auto& c : out) {
        if (c == '_') c = ' ';
    }
    if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

std::string alias_label(std::string_view key) {
    for (const auto& a : kAliases) {
        if (key == a.key) return a.alias;
    }
    return aspect_label(key) + " element";
}

std::string canonical_label(std::string_view raw_label) {
    const auto trimmed = text::trim(raw_label);
    for (const auto& a : kAliases) {
        if (text::iequals(trimmed, a.alias) || text::iequals(trimmed, aspect_label(a.key)) ||
            text::iequals(trimmed, aspect_label(a.key) + " element")) {
            return aspect_label(a.key);
        }
    }
    return std::string(trimmed);
}

std::string element_key_for_label(std::string_view label) { return text::slug(canonical_label(label)); }

std::string humanize(std::string_view identifier) {
    std::string out(identifier);
    for (auto& c : out) {
        if (c == '_') c = ' ';
    }
    return out;
}

std::string identifier_of(std::string_view words) { return text::slug(words); }

std::string key_question(std::string_view position, std::string_view category) {
    return "Is a " + humanize(position) + " a " + humanize(category) + "?";
}

std::optional<std::pair<std::string, std::string>> parse_key_question(std::string_view question) {
    auto q = text::trim(question);
    if (q.size() < 8 || q.substr(0, 5) != "Is a " || q.back() != '?') return std::nullopt;
    q = q.substr(5, q.size() - 6);
    const auto split = q.rfind(" a ");
    if (split == std::string_view::npos) return std::nullopt;
    auto position = identifier_of(q.substr(0, split));
    auto category = identifier_of(q.substr(split + 3));
    if (position.empty() || category.empty()) return std::nullopt;
    return std::make_pair(std::move(position), std::move(category));
}

std::optional<std::string> expert_answer(const Knowledge& knowledge, std::string_view question) {
    auto parsed = parse_key_question(question);
    if (!parsed) return std::nullopt;
    const auto& [position, asked] = *parsed;
    std::string known;
    if (auto it = knowledge.find(position); it != knowledge.end()) {
        known = it->second;
    } else {
        for (const auto& [_, category] : knowledge) {
            if (category == position) known = position;
        }
    }
    if (known.empty()) return std::nullopt;
    const std::string statement = "A " + humanize(position) + " is a " + humanize(known) + ".";
    return (known == asked ? "Yes. " : "No. ") + statement;
}

std::optional<std::string> stated_category(std::string_view text, std::string_view position) {
    const std::string lowered = text::to_lower(text);
    const std::string needle = "a " + text::to_lower(humanize(position)) + " is a ";
    std::size_t pos = 0;
    while ((pos = lowered.find(needle, pos)) != std::string::npos) {
        if (pos == 0 || !std::isalnum(static_cast<unsigned char>(lowered[pos - 1]))) {
            const auto start = pos + needle.size();
            const auto end = lowered.find('.', start);
            auto category = identifier_of(lowered.substr(start, end == std::string::npos ? std::string::npos : end - start));
            if (!category.empty()) return category;
        }
        pos += needle.size();
    }
    return std::nullopt;
}

}  // namespace malr::world
