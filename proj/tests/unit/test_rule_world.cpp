#include "malr/rule_world.hpp"

#include <gtest/gtest.h>

using namespace malr::world;

TEST(RuleWorld, ParsesElementsWithVerify) {
    const auto es = parse_elements("Text. [ELEM subject=state_functionary verify] [ELEM mental=intent]");
    ASSERT_EQ(es.size(), 2u);
    EXPECT_EQ(es[0].key, "subject");
    EXPECT_EQ(es[0].value, "state_functionary");
    EXPECT_TRUE(es[0].verify);
    EXPECT_FALSE(es[1].verify);
    EXPECT_EQ(element_marker(es[0]), "[ELEM subject=state_functionary verify]");
    EXPECT_EQ(find_element("[ELEM mental=intent]", "mental")->value, "intent");
    EXPECT_FALSE(find_element("[ELEM mental=intent]", "object"));
}

TEST(RuleWorld, ParsesOpaqueAttributes) {
    const auto as = parse_attributes("[ATTR subject=~township_tax_officer] [ATTR mental=negligence]");
    ASSERT_EQ(as.size(), 2u);
    EXPECT_TRUE(as.at("subject").opaque);
    EXPECT_EQ(as.at("subject").value, "township_tax_officer");
    EXPECT_FALSE(as.at("mental").opaque);
    EXPECT_EQ(attribute_marker(as.at("subject")), "[ATTR subject=~township_tax_officer]");
}

TEST(RuleWorld, PlannerNoiseMarkers) {
    const std::string fact = "x [PLAN-ALIAS subject] [PLAN-EXTRA Sentencing] [PLAN-EXTRA Harm]";
    EXPECT_EQ(plan_aliases(fact), (std::vector<std::string>{"subject"}));
    EXPECT_EQ(plan_extras(fact), (std::vector<std::string>{"Sentencing", "Harm"}));
}

TEST(RuleWorld, NotesAndFactChecks) {
    const std::string t = "a [NOTE subject] b [FACT-CHECK subject=state_functionary]";
    EXPECT_TRUE(has_note(t, "subject"));
    EXPECT_FALSE(has_note(t, "mental"));
    EXPECT_EQ(fact_checks(t), (std::vector<std::pair<std::string, std::string>>{{"subject", "state_functionary"}}));
    EXPECT_EQ(note_marker("k"), "[NOTE k]");
    EXPECT_EQ(fact_check_marker("k", "v"), "[FACT-CHECK k=v]");
}

TEST(RuleWorld, LabelsAndAliases) {
    EXPECT_EQ(aspect_label("subject"), "Subject");
    EXPECT_EQ(alias_label("subject"), "Subject qualification");
    EXPECT_EQ(canonical_label("subject QUALIFICATION"), "Subject");
    EXPECT_EQ(canonical_label("Mens rea"), "Mental");
    EXPECT_EQ(canonical_label(" Conduct "), "Conduct");
    EXPECT_EQ(canonical_label("Sentencing"), "Sentencing");
    EXPECT_EQ(element_key_for_label("Protected object"), "object");
    EXPECT_EQ(humanize("deputy_director"), "deputy director");
    EXPECT_EQ(identifier_of("Deputy Director"), "deputy_director");
}

TEST(RuleWorld, KeyQuestionRoundTrip) {
    const auto q = key_question("township_tax_officer", "state_functionary");
    EXPECT_EQ(q, "Is a township tax officer a state functionary?");
    const auto parsed = parse_key_question(q);
    ASSERT_TRUE(parsed);
    EXPECT_EQ(parsed->first, "township_tax_officer");
    EXPECT_EQ(parsed->second, "state_functionary");
    EXPECT_FALSE(parse_key_question("What is a tax officer?"));
}

TEST(RuleWorld, ExpertAnswersFromKnowledge) {
    const Knowledge k{{"company_accountant", "non_state_functionary"}};
    EXPECT_EQ(*expert_answer(k, key_question("company_accountant", "non_state_functionary")),
              "Yes. A company accountant is a non state functionary.");
    EXPECT_EQ(*expert_answer(k, key_question("company_accountant", "state_functionary")),
              "No. A company accountant is a non state functionary.");
    EXPECT_FALSE(expert_answer(k, key_question("pilot", "state_functionary")));
}

TEST(RuleWorld, StatedCategory) {
    const std::string t = "Q: ...\nA: No. A company accountant is a non state functionary.";
    EXPECT_EQ(*stated_category(t, "company_accountant"), "non_state_functionary");
    EXPECT_FALSE(stated_category(t, "township_tax_officer"));
    // Needs a word boundary before the article.
    EXPECT_FALSE(stated_category("XA company accountant is a clerk.", "company_accountant"));
}
