#include "malr/errors.hpp"
#include "malr/rule_world.hpp"
#include "malr/scripted_backend.hpp"
#include "malr/text.hpp"
#include "malr/trainer.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace malr;
using malr::support::answer;

namespace {

struct World {
    ScriptedBackend backend;
    TemplateLibrary templates = TemplateLibrary::builtin();
    RuleKB rules = support::corpus_rules();
    SubTaskSet subtasks = support::four_aspects();
    InsightTrainer trainer{backend, templates, rules, subtasks};

    explicit World(const char* spec) : backend(ScriptedConfig::parse(spec)) {}

    TrainerConfig config(int max_trials = 2) const {
        TrainerConfig c;
        c.max_trials = max_trials;
        c.pairs = TrainerConfig::pairs_from_cases(support::corpus().train);
        return c;
    }
};

// The flaw sits on the subject element: only pairs whose rules differ there need a retry.
bool differs_on_subject(const RuleKB& rules, const ChargeName& a, const ChargeName& b) {
    const auto ea = world::find_element(rules.get_rule(a).text, "subject");
    const auto eb = world::find_element(rules.get_rule(b).text, "subject");
    return ea->value != eb->value;
}

Trajectory all(Finding f, const SubTaskSet& st, ChargeRole role = ChargeRole::golden, int trial = 1) {
    std::vector<SubAnswer> as;
    for (const auto& s : st) as.push_back(answer(s.id.str().c_str(), f));
    return Trajectory(ChargeName("X"), role, trial, as, st, 2);
}

Insight ins(const std::string& id, const std::string& text) {
    return {InsightId(id), ChargeName("Theft"), SubTaskId("conduct"), text, InsightSource::success, std::nullopt};
}

}  // namespace

TEST(TrainerConfig, PairsNeedOneGoldenAndOneConfusing) {
    EXPECT_EQ(TrainerConfig::pairs_from_cases(support::corpus().train).size(), 32u);
    CaseRecord innocent{{CaseId("i"), "f"}, {{ChargeName("Theft"), false}}, std::nullopt};
    EXPECT_THROW(TrainerConfig::pairs_from_cases({innocent}), ValidationError);
    CaseRecord two_golden{{CaseId("g"), "f"}, {{ChargeName("Theft"), true}, {ChargeName("Robbery"), true}}, std::nullopt};
    EXPECT_THROW(TrainerConfig::pairs_from_cases({two_golden}), ValidationError);
    TrainerConfig c;
    EXPECT_THROW(c.validate(), PreconditionError);
    c.pairs = TrainerConfig::pairs_from_cases(support::corpus().train);
    c.max_trials = 0;
    EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(EvaluateTrial, GroundTruthComparison) {
    const auto st = support::four_aspects();
    const auto yes = all(Finding::satisfied, st);
    const auto no = all(Finding::not_satisfied, st, ChargeRole::confusing);
    EXPECT_TRUE(evaluate_trial(yes, no, st).success);
    const auto both_yes = evaluate_trial(yes, all(Finding::satisfied, st, ChargeRole::confusing), st);
    EXPECT_FALSE(both_yes.success);
    EXPECT_TRUE(both_yes.confusing_wrong);
    EXPECT_FALSE(both_yes.golden_wrong);
    const auto unsure = evaluate_trial(all(Finding::uncertain, st), no, st);
    EXPECT_TRUE(unsure.golden_wrong);
}

TEST(Experience, ValidateKinds) {
    const auto st = support::four_aspects();
    const TrajectoryPair t1{all(Finding::satisfied, st), all(Finding::not_satisfied, st, ChargeRole::confusing)};
    const TrajectoryPair t2{all(Finding::satisfied, st, ChargeRole::golden, 2),
                            all(Finding::not_satisfied, st, ChargeRole::confusing, 2)};
    Experience ok{ExperienceKind::success, CaseId("c"), "f", ChargeName("A"), ChargeName("B"), t1, std::nullopt, {}};
    EXPECT_NO_THROW(ok.validate());
    Experience late = ok;
    late.success = t2;
    EXPECT_THROW(late.validate(), ValidationError);
    Experience esp{ExperienceKind::error_success_pair, CaseId("c"), "f", ChargeName("A"), ChargeName("B"), t2, t1, {}};
    EXPECT_NO_THROW(esp.validate());
    esp.failed.reset();
    EXPECT_THROW(esp.validate(), ValidationError);
    Experience mixed = ok;
    mixed.success.confusing = all(Finding::not_satisfied, st, ChargeRole::confusing, 2);
    EXPECT_THROW(mixed.validate(), ValidationError);
}

TEST(ConstructPairs, OnlyChangedFindings) {
    const auto st = support::four_aspects();
    std::vector<SubAnswer> before{answer("subject", Finding::satisfied), answer("mental", Finding::satisfied),
                                  answer("object", Finding::satisfied), answer("conduct", Finding::satisfied)};
    auto after = before;
    after[0].finding = Finding::not_satisfied;
    const Trajectory gf = all(Finding::satisfied, st);
    const Trajectory gs = all(Finding::satisfied, st, ChargeRole::golden, 2);
    const Trajectory cf(ChargeName("B"), ChargeRole::confusing, 1, before, st, 2);
    const Trajectory cs(ChargeName("B"), ChargeRole::confusing, 2, after, st, 2);
    Experience esp{ExperienceKind::error_success_pair, CaseId("c"), "f", ChargeName("X"), ChargeName("B"),
                   {gs, cs}, TrajectoryPair{gf, cf}, {}};
    const auto pairs = construct_pairs(esp);
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0].charge_name, ChargeName("B"));
    EXPECT_EQ(pairs[0].subtask_id, SubTaskId("subject"));
    EXPECT_EQ(pairs[0].error_answer.finding, Finding::satisfied);
    EXPECT_EQ(pairs[0].success_answer.finding, Finding::not_satisfied);
    Experience s{ExperienceKind::success, CaseId("c"), "f", ChargeName("X"), ChargeName("B"), {gf, cf}, std::nullopt, {}};
    EXPECT_THROW(construct_pairs(s), PreconditionError);
}

TEST(HasIfThen, WordsNotSubstrings) {
    EXPECT_TRUE(has_if_then("If a, then b."));
    EXPECT_TRUE(has_if_then("IF a THEN b"));
    EXPECT_FALSE(has_if_then("Iffy thence"));
    EXPECT_FALSE(has_if_then("if only"));
}

TEST(GainExperience, FlawedCorpusNeedsExactlyTheSubjectRetries) {
    World w("flawed:subject");
    const auto gained = w.trainer.gain_experience(w.config());
    ASSERT_EQ(gained.items.size(), 32u);
    ASSERT_EQ(gained.experiences.size(), 32u);
    int esp = 0;
    for (std::size_t i = 0; i < gained.items.size(); ++i) {
        const auto& item = gained.items[i];
        const auto& exp = gained.experiences[i];
        const bool needs_retry = differs_on_subject(w.rules, item.golden, item.confusing);
        EXPECT_FALSE(item.unresolved) << item.case_id;
        EXPECT_EQ(*item.resolved_at_trial, needs_retry ? 2 : 1) << item.case_id;
        EXPECT_EQ(item.evaluations, needs_retry ? 2 : 1);
        EXPECT_EQ(exp.kind, needs_retry ? ExperienceKind::error_success_pair : ExperienceKind::success);
        EXPECT_EQ(exp.success.golden.trial_index(), exp.success.confusing.trial_index());
        EXPECT_NO_THROW(exp.validate());
        if (needs_retry) {
            ++esp;
            ASSERT_EQ(exp.reflections.size(), 1u);
            EXPECT_EQ(exp.reflections[0].target_role, ChargeRole::confusing);
            EXPECT_EQ(exp.reflections[0].error_subtask_ids, std::vector<SubTaskId>{SubTaskId("subject")});
        }
    }
    EXPECT_EQ(esp, 8);
    EXPECT_EQ(w.trainer.evaluate_calls(), 40u);
}

TEST(GainExperience, SingleTrialBudgetLeavesRetriesUnresolved) {
    World w("flawed:subject");
    const auto gained = w.trainer.gain_experience(w.config(1));
    int unresolved = 0;
    for (const auto& item : gained.items) {
        EXPECT_EQ(item.evaluations, 1);
        if (item.unresolved) ++unresolved;
    }
    EXPECT_EQ(unresolved, 8);
    EXPECT_EQ(gained.experiences.size(), 24u);
    EXPECT_EQ(w.trainer.evaluate_calls(), 32u);
}

TEST(GainExperience, MisdirectedReflectorDoesNotResolve) {
    World w("flawed:subject:misdirected");
    const auto gained = w.trainer.gain_experience(w.config());
    int unresolved = 0;
    for (const auto& item : gained.items) {
        EXPECT_LE(item.evaluations, 2);
        if (item.unresolved) ++unresolved;
    }
    EXPECT_EQ(unresolved, 8);
}

TEST(Reflect, ErrorsWhenNothingIsNamed) {
    World w("perfect");
    const auto& rec = support::corpus().train[0];
    const auto& rule = w.rules.get_rule(rec.queries[0].charge_name);
    const JudgmentEngine engine(w.backend, w.templates);
    const auto t = engine.judge_charge(rec.fact, rule, w.subtasks, {}, ChargeRole::golden, 1, 2).trajectory;
    EXPECT_THROW(w.trainer.reflect(t, rule, rec.fact, true), ParseError);

    support::FakeBackend rogue([](const CompletionRequest&) { return "ERROR: harm | made up"; });
    const InsightTrainer t2(rogue, w.templates, w.rules, w.subtasks);
    EXPECT_THROW(t2.reflect(t, rule, rec.fact, true), ValidationError);
}

TEST(Retry, RespectsBudget) {
    World w("flawed:subject");
    const auto st = w.subtasks;
    const auto& rec = support::corpus().train[0];
    const auto& rule = w.rules.get_rule(rec.queries[1].charge_name);
    ReflectionReport r{{SubTaskId("subject")}, {{SubTaskId("subject"), "check it [NOTE subject]"}}, ChargeRole::confusing};
    const auto failed = all(Finding::satisfied, st, ChargeRole::confusing, 1);
    const auto fixed = w.trainer.retry_subtasks(failed, r, rule, rec.fact, 2);
    EXPECT_EQ(fixed.trial_index(), 2);
    EXPECT_EQ(fixed.answer_for(SubTaskId("subject")).finding, Finding::not_satisfied);
    EXPECT_EQ(fixed.answer_for(SubTaskId("mental")).finding, Finding::satisfied);
    EXPECT_THROW(w.trainer.retry_subtasks(fixed, r, rule, rec.fact, 2), TrialBudgetExhausted);
    EXPECT_THROW(w.trainer.retry_subtasks(failed, ReflectionReport{}, rule, rec.fact, 2), PreconditionError);
}

TEST(Filter, SubsetAndErrors) {
    World w("perfect");
    const std::vector<Insight> bucket{ins("a", "If a then b."), ins("b", "No rule here."), ins("c", "If a then b."),
                                      ins("d", "If c, then d.")};
    const auto kept = w.trainer.filter_insights(bucket);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].id, InsightId("a"));
    EXPECT_EQ(kept[1].id, InsightId("d"));
    EXPECT_TRUE(w.trainer.filter_insights({}).empty());

    support::FakeBackend unknown([](const CompletionRequest&) { return "KEEP: a, zz"; });
    EXPECT_THROW(InsightTrainer(unknown, w.templates, w.rules, w.subtasks).filter_insights(bucket), ValidationError);
    support::FakeBackend prose([](const CompletionRequest&) { return "keep them all"; });
    EXPECT_THROW(InsightTrainer(prose, w.templates, w.rules, w.subtasks).filter_insights(bucket), ParseError);
}

TEST(Filter, IdempotentOnRandomBuckets) {
    World w("perfect");
    const std::vector<std::string> bodies{"If a then b.", "If a then b.", "Plain note.", "If x, then y [NOTE conduct].",
                                          "if p then q | with bar", "Then if.", "When a, b."};
    std::mt19937 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Insight> bucket;
        const int n = std::uniform_int_distribution<int>(0, 12)(rng);
        for (int i = 0; i < n; ++i) bucket.push_back(ins("i" + std::to_string(i), bodies[rng() % bodies.size()]));
        const auto once = w.trainer.filter_insights(bucket);
        const auto twice = w.trainer.filter_insights(once);
        EXPECT_EQ(once, twice) << "trial " << trial;
    }
}

TEST(RunTraining, WritesFilteredInsights) {
    World w("flawed:subject");
    InsightKB kb;
    const auto report = w.trainer.run_training(w.config(), kb);
    EXPECT_TRUE(report.unresolved().empty());
    EXPECT_EQ(static_cast<int>(kb.size()), report.pair_insights + report.success_insights);
    // Every charge differing on subject learned the hint for that aspect.
    for (const auto& rule : w.rules.rules()) {
        if (world::find_element(rule.text, "subject")->verify) {
            const auto& list = kb.get_insights(rule.charge_name, SubTaskId("subject"));
            ASSERT_FALSE(list.empty()) << rule.charge_name;
            EXPECT_TRUE(world::has_note(list[0].text, "subject"));
        }
    }
    // No exact duplicate text survives within a bucket.
    for (const auto& [charge, buckets] : kb.buckets()) {
        for (const auto& [st, list] : buckets) {
            for (std::size_t i = 0; i < list.size(); ++i) {
                for (std::size_t j = i + 1; j < list.size(); ++j) EXPECT_NE(list[i].text, list[j].text);
            }
        }
    }
    const auto doc = report.to_document();
    EXPECT_NE(doc.find("\"resolved_at_trial\": 2"), std::string::npos);
}

TEST(RunTraining, NoFilterKeepsDuplicates) {
    World w("flawed:subject");
    auto cfg = w.config();
    cfg.enable_filtering = false;
    InsightKB kb;
    const auto report = w.trainer.run_training(cfg, kb);
    EXPECT_EQ(report.filtered_out, 0);
    bool dup = false;
    for (const auto& [charge, buckets] : kb.buckets()) {
        for (const auto& [st, list] : buckets) {
            for (std::size_t i = 0; i + 1 < list.size(); ++i) dup = dup || list[i].text == list[i + 1].text;
        }
    }
    EXPECT_TRUE(dup);
}

TEST(RunTraining, StageFlags) {
    World w("flawed:subject");
    auto no_esp = w.config();
    no_esp.enable_esp_experience = false;
    InsightKB a;
    EXPECT_EQ(w.trainer.run_training(no_esp, a).pair_insights, 0);
    auto no_success = w.config();
    no_success.enable_success_experience = false;
    InsightKB b;
    const auto r = w.trainer.run_training(no_success, b);
    EXPECT_EQ(r.success_insights, 0);
    EXPECT_GT(r.pair_insights, 0);
}

TEST(RunTraining, SecondRunAddsNoDuplicates) {
    World w("flawed:subject");
    InsightKB kb;
    w.trainer.run_training(w.config(), kb);
    const auto before = kb.size();
    const auto report = w.trainer.run_training(w.config(), kb);
    EXPECT_EQ(kb.size(), before);
    EXPECT_EQ(report.pair_insights + report.success_insights, 0);
}

TEST(DrawPair, RejectsIdenticalFindings) {
    World w("perfect");
    ErrorSuccessPair p{ChargeName("Theft"), SubTaskId("conduct"), answer("conduct", Finding::satisfied),
                       answer("conduct", Finding::satisfied)};
    EXPECT_THROW(w.trainer.draw_insight_from_pair(p, w.rules.get_rule(ChargeName("Theft")), InsightId("x")),
                 PreconditionError);
}

TEST(DirectInsights, OnePerAspect) {
    World w("perfect");
    const auto in = generate_direct_insights(w.backend, w.templates, w.rules.rules()[0], w.subtasks);
    ASSERT_EQ(in.size(), 4u);
    EXPECT_EQ(in[0].id.str(), "direct:Embezzlement/subject/1");
    EXPECT_EQ(in[0].source, InsightSource::direct);
    for (const auto& i : in) EXPECT_TRUE(has_if_then(i.text));
}

TEST(Formatting, TrajectoryLines) {
    const auto st = support::four_aspects();
    std::vector<SubAnswer> as{answer("subject", Finding::satisfied), answer("mental", Finding::uncertain),
                              answer("object", Finding::satisfied), answer("conduct", Finding::not_satisfied)};
    as[0].rationale = "line one\nline | two";
    const Trajectory t(ChargeName("X"), ChargeRole::golden, 1, as, st, 2);
    const auto lines = text::split_lines(format_trajectory(t, st));
    EXPECT_EQ(lines[0], "subject | Subject | satisfied | line one line / two");
    EXPECT_EQ(lines[3], "conduct | Conduct | not_satisfied | ");
    EXPECT_EQ(parse_keyed_lines("a | x\nnoise\n | y\nb|z"),
              (std::vector<std::pair<std::string, std::string>>{{"a", "x"}, {"b", "z"}}));
}
