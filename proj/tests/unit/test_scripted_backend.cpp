#include "malr/errors.hpp"
#include "malr/scripted_backend.hpp"
#include "malr/text.hpp"

#include <gtest/gtest.h>

using namespace malr;

namespace {

const char* kRule = "Theft. [ELEM subject=person] [ELEM mental=intent] [ELEM conduct=secret_taking]";
const char* kOpaqueRule = "Embezzlement. [ELEM subject=state_functionary verify] [ELEM mental=intent]";

std::string judge_prompt(const std::string& aspect, const std::string& rule, const std::string& fact,
                         const std::string& insights = "", const std::string& feedback = "",
                         const std::string& reflection = "") {
    const auto lib = TemplateLibrary::builtin();
    return render(lib.get("subtask_judge"), {{"role", "You judge one aspect."},
                                             {"aspect", aspect + ": description"},
                                             {"rule", rule},
                                             {"fact", fact},
                                             {"insights", insights},
                                             {"feedback", feedback},
                                             {"reflection", reflection}});
}

std::string last_line(const std::string& s) {
    auto lines = text::split_lines(s);
    while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
    return lines.empty() ? "" : lines.back();
}

ScriptedBackend backend(const char* spec) { return ScriptedBackend(ScriptedConfig::parse(spec)); }

}  // namespace

TEST(ScriptedConfig, ParsesModes) {
    EXPECT_EQ(ScriptedConfig::parse("perfect").mode, ScriptedMode::perfect);
    EXPECT_EQ(ScriptedConfig::parse("Affirmative").mode, ScriptedMode::affirmative);
    const auto f = ScriptedConfig::parse("flawed:subject:misdirected");
    EXPECT_EQ(f.mode, ScriptedMode::flawed);
    EXPECT_EQ(f.flawed_element, "subject");
    EXPECT_EQ(f.reflector, ReflectorQuality::misdirected);
    EXPECT_EQ(f.describe(), "flawed:subject:misdirected");
    EXPECT_EQ(ScriptedConfig::parse("perfect:accurate").describe(), "perfect");
}

TEST(ScriptedConfig, RejectsBadSpecs) {
    EXPECT_THROW(ScriptedConfig::parse("sloppy"), PreconditionError);
    EXPECT_THROW(ScriptedConfig::parse("flawed"), PreconditionError);
    EXPECT_THROW(ScriptedConfig::parse("flawed:"), PreconditionError);
    EXPECT_THROW(ScriptedConfig::parse("perfect:clumsy"), PreconditionError);
}

TEST(ScriptedPrompt, TaskAndSections) {
    EXPECT_EQ(task_of("  [TASK judge]\nbody"), "judge");
    EXPECT_EQ(task_of("no header"), "");
    const std::string p = "<examples><fact>ignored</fact></examples><fact>real</fact>";
    EXPECT_EQ(tagged_section(p, "fact"), "real");
    EXPECT_EQ(tagged_section(p, "rule"), "");
}

TEST(ScriptedJudge, PerfectComparesAttributes) {
    const auto b = backend("perfect");
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kRule, "[ATTR subject=person]"))), "ANSWER: YES");
    EXPECT_EQ(last_line(b.respond(judge_prompt("Conduct", kRule, "[ATTR conduct=open_force]"))), "ANSWER: NO");
    // Missing attribute fails the element; an aspect the rule does not constrain passes.
    EXPECT_EQ(last_line(b.respond(judge_prompt("Mental", kRule, "[ATTR subject=person]"))), "ANSWER: NO");
    EXPECT_EQ(last_line(b.respond(judge_prompt("Object", kRule, ""))), "ANSWER: YES");
    // Alias wording resolves to the same element.
    EXPECT_EQ(last_line(b.respond(judge_prompt("Mens rea", kRule, "[ATTR mental=intent]"))), "ANSWER: YES");
}

TEST(ScriptedJudge, OpaquePositionNeedsExpertAnswer) {
    const auto b = backend("perfect");
    const std::string fact = "[ATTR subject=~township_tax_officer]";
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kOpaqueRule, fact))), "ANSWER: UNCERTAIN");
    const std::string yes = "Q: Is a township tax officer a state functionary?\nA: Yes. A township tax officer is a state functionary.";
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kOpaqueRule, fact, "", yes))), "ANSWER: YES");
    const std::string no = "A: No. A township tax officer is a non state functionary.";
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kOpaqueRule, fact, "", no))), "ANSWER: NO");
}

TEST(ScriptedJudge, FlawedSaysYesUntilHinted) {
    const auto b = backend("flawed:subject");
    const std::string fact = "[ATTR subject=animal]";
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kRule, fact))), "ANSWER: YES");
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kRule, fact, "- text [NOTE subject]"))), "ANSWER: NO");
    EXPECT_EQ(last_line(b.respond(judge_prompt("Subject", kRule, fact, "", "", "[NOTE subject]"))), "ANSWER: NO");
    // Other elements are unaffected.
    EXPECT_EQ(last_line(b.respond(judge_prompt("Conduct", kRule, "[ATTR conduct=force]"))), "ANSWER: NO");
}

TEST(ScriptedJudge, AffirmativeAlwaysYes) {
    const auto b = backend("affirmative");
    EXPECT_EQ(last_line(b.respond(judge_prompt("Conduct", kRule, "[ATTR conduct=force]"))), "ANSWER: YES");
}

TEST(ScriptedJudge, UnmodelledRuleHasNoAnswerLine) {
    const auto out = backend("perfect").respond(judge_prompt("Subject", "A rule without markers.", "fact"));
    EXPECT_EQ(out.find("ANSWER"), std::string::npos);
}

TEST(ScriptedPlan, ListsElementsAliasesAndExtras) {
    const auto lib = TemplateLibrary::builtin();
    const auto p = render(lib.get("planner"), {{"question", "Q?"},
                                               {"rule", kRule},
                                               {"fact", "[PLAN-ALIAS mental] [PLAN-EXTRA Harm]"}});
    const auto out = backend("perfect").respond(p);
    EXPECT_NE(out.find("1. Subject - "), std::string::npos);
    EXPECT_NE(out.find("2. Mens rea - "), std::string::npos);
    EXPECT_NE(out.find("3. Conduct - "), std::string::npos);
    EXPECT_NE(out.find("4. Harm - "), std::string::npos);
}

TEST(ScriptedFilter, KeepsFirstOfDuplicatesAndRequiresIfThen) {
    const auto lib = TemplateLibrary::builtin();
    const auto p = render(lib.get("filter"), {{"charge", "X"},
                                              {"insights",
                                               "a | If p, then q.\n"
                                               "b | If p, then q.\n"
                                               "c | Always q.\n"
                                               "d | If r then s."}});
    EXPECT_EQ(backend("perfect").respond(p), "KEEP: a, d");
}

TEST(ScriptedBackend, TokenCountsAreWhitespaceCounts) {
    const auto b = backend("perfect");
    CompletionRequest req{judge_prompt("Subject", kRule, "[ATTR subject=person]"), std::string("two words"), {}};
    const auto r = b.complete(req);
    EXPECT_EQ(r.prompt_tokens, static_cast<long>(text::whitespace_token_count(req.rendered_prompt) + 2));
    EXPECT_EQ(r.output_tokens, static_cast<long>(text::whitespace_token_count(r.text)));
    EXPECT_EQ(r.backend_id, "scripted:perfect");
    EXPECT_EQ(b.complete(req).text, r.text);
}

TEST(ScriptedBackend, UnknownTask) { EXPECT_EQ(backend("perfect").respond("hello"), "Unsupported request."); }
