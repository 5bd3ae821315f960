#pragma once

// Machine-readable conventions of the synthetic rule world used by the scripted backend and
// the fixture generator.
//
//   rule text:  [ELEM subject=state_functionary]   element the charge requires
//               [ELEM subject=state_functionary verify]   same, and status is a matter of
//                                                         external knowledge
//   fact text:  [ATTR subject=state_functionary]   stated attribute
//               [ATTR subject=~deputy_director]    position named, category unknown
//               [PLAN-ALIAS subject]               planner words that aspect with a synonym
//               [PLAN-EXTRA Sentencing]            planner proposes an extra aspect
//   notes:      [NOTE subject]                     hint that corrects a flawed agent
//               [FACT-CHECK subject=state_functionary]   aspect needs an expert answer

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace malr::world {

struct Element {
    std::string key;
    std::string value;
    bool verify = false;
};

struct Attribute {
    std::string key;
    std::string value;
    bool opaque = false;
};

std::vector<Element> parse_elements(std::string_view rule_text);
std::optional<Element> find_element(std::string_view rule_text, std::string_view key);
std::map<std::string, Attribute> parse_attributes(std::string_view fact_text);
std::vector<std::string> plan_aliases(std::string_view fact_text);
std::vector<std::string> plan_extras(std::string_view fact_text);

std::string element_marker(const Element& e);
std::string attribute_marker(const Attribute& a);
std::string note_marker(std::string_view key);
std::string fact_check_marker(std::string_view key, std::string_view value);
bool has_note(std::string_view text, std::string_view key);
// key=value pairs of every [FACT-CHECK ...] marker in text.
std::vector<std::pair<std::string, std::string>> fact_checks(std::string_view text);

// Canonical aspect label for an element key: subject -> Subject.
std::string aspect_label(std::string_view key);
// Synonym the planner uses under [PLAN-ALIAS key].
std::string alias_label(std::string_view key);
// Maps planner wording (canonical or synonym, any case) onto the canonical label; unknown
// labels come back unchanged.
std::string canonical_label(std::string_view raw_label);
// Element key an aspect label refers to: "Subject qualification" -> subject.
std::string element_key_for_label(std::string_view label);

// deputy_director -> "deputy director"
std::string humanize(std::string_view identifier);
// "deputy director" -> deputy_director
std::string identifier_of(std::string_view words);

// Which category each named position belongs to (the expert's knowledge).
using Knowledge = std::map<std::string, std::string>;

std::string key_question(std::string_view position, std::string_view category);
// Inverse of key_question.
std::optional<std::pair<std::string, std::string>> parse_key_question(std::string_view question);
// "Yes. A deputy director is a state functionary." / "No. A ... is a ...".
std::optional<std::string> expert_answer(const Knowledge& knowledge, std::string_view question);
// Category stated for a position by an expert answer inside `text`, if any.
std::optional<std::string> stated_category(std::string_view text, std::string_view position);

}  // namespace malr::world
