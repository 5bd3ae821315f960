#include "malr/domain.hpp"
#include "malr/errors.hpp"
#include "malr/knowledge.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace malr;
using malr::support::answer;

namespace {

RuleKB two_rules() {
    return RuleKB({{ChargeName("Theft"), "take secretly", std::nullopt},
                   {ChargeName("Robbery"), "take by force", std::string("R-5")}});
}

CaseRecord pair_case() {
    return {{CaseId("c1"), "a fact"},
            {{ChargeName("Theft"), true}, {ChargeName("Robbery"), false}},
            std::string("Robbery / Theft")};
}

bool has_code(const std::vector<Violation>& vs, Violation::Code code) {
    for (const auto& v : vs) {
        if (v.code == code) return true;
    }
    return false;
}

}  // namespace

TEST(Case, ValidRecordHasNoViolations) { EXPECT_TRUE(validate_case(pair_case(), two_rules()).empty()); }

TEST(Case, EveryViolationIsCollected) {
    CaseRecord bad{{CaseId(""), "  "}, {}, std::nullopt};
    const auto vs = validate_case(bad, two_rules());
    EXPECT_TRUE(has_code(vs, Violation::Code::empty_case_id));
    EXPECT_TRUE(has_code(vs, Violation::Code::empty_fact));
    EXPECT_TRUE(has_code(vs, Violation::Code::no_queries));

    auto dup = pair_case();
    dup.queries.push_back({ChargeName("Theft"), false});
    dup.queries.push_back({ChargeName("Arson"), false});
    const auto vs2 = validate_case(dup, two_rules());
    EXPECT_TRUE(has_code(vs2, Violation::Code::duplicate_charge));
    EXPECT_TRUE(has_code(vs2, Violation::Code::unknown_charge));
    EXPECT_EQ(vs2.size(), 2u);
}

TEST(SubTaskSet, RejectsDuplicatesAndBadProbabilities) {
    EXPECT_THROW(SubTaskSet({{SubTaskId("a"), "A", "", 1.0}, {SubTaskId("a"), "A2", "", 1.0}}), ValidationError);
    EXPECT_THROW(SubTaskSet({{SubTaskId("a"), "A", "", 1.5}}), ValidationError);
    EXPECT_THROW(SubTaskSet({{SubTaskId(""), "A", "", 0.5}}), ValidationError);
    const auto s = support::four_aspects();
    EXPECT_EQ(s.size(), 4u);
    EXPECT_TRUE(s.contains(SubTaskId("mental")));
    EXPECT_EQ(s.at(SubTaskId("object")).label, "Object");
    EXPECT_THROW(s.at(SubTaskId("harm")), NotFoundError);
}

TEST(Finding, StringRoundTrip) {
    for (auto f : {Finding::satisfied, Finding::not_satisfied, Finding::uncertain}) {
        EXPECT_EQ(finding_from_string(to_string(f)), f);
    }
    EXPECT_THROW(finding_from_string("maybe"), ValidationError);
}

TEST(Trajectory, EnforcesTrialBoundsAndCoverage) {
    const auto st = support::four_aspects();
    std::vector<SubAnswer> full{answer("subject", Finding::satisfied), answer("mental", Finding::satisfied),
                                answer("object", Finding::satisfied), answer("conduct", Finding::satisfied)};
    EXPECT_NO_THROW(Trajectory(ChargeName("X"), ChargeRole::golden, 2, full, st, 2));
    EXPECT_THROW(Trajectory(ChargeName("X"), ChargeRole::golden, 3, full, st, 2), ValidationError);
    EXPECT_THROW(Trajectory(ChargeName("X"), ChargeRole::golden, 0, full, st, 2), ValidationError);

    auto missing = full;
    missing.pop_back();
    EXPECT_THROW(Trajectory(ChargeName("X"), ChargeRole::golden, 1, missing, st, 2), ValidationError);
    auto doubled = missing;
    doubled.push_back(answer("subject", Finding::uncertain));
    EXPECT_THROW(Trajectory(ChargeName("X"), ChargeRole::golden, 1, doubled, st, 2), ValidationError);
    auto unknown = missing;
    unknown.push_back(answer("harm", Finding::satisfied));
    EXPECT_THROW(Trajectory(ChargeName("X"), ChargeRole::golden, 1, unknown, st, 2), ValidationError);

    const Trajectory t(ChargeName("X"), ChargeRole::confusing, 1, full, st, 2);
    EXPECT_EQ(t.answer_for(SubTaskId("object")).finding, Finding::satisfied);
    EXPECT_THROW(t.answer_for(SubTaskId("harm")), NotFoundError);
}

TEST(CaseOutcome, ConjunctionOverQueries) {
    const auto rec = pair_case();
    // Oracle: golden accepted and confusing rejected.
    for (int g = 0; g < 2; ++g) {
        for (int c = 0; c < 2; ++c) {
            const auto out = make_case_outcome(rec, {Verdict{g == 1, "", false}, Verdict{c == 1, "", false}});
            EXPECT_EQ(out.y_correct, g == 1 && c == 0) << g << c;
            EXPECT_EQ(out.per_query_verdicts.size(), 2u);
        }
    }
}

TEST(CaseOutcome, ParseFlaggedVerdictIsWrong) {
    const auto out = make_case_outcome(pair_case(), {Verdict{true, "", true}, Verdict{false, "", false}});
    EXPECT_FALSE(out.y_correct);
}

TEST(CaseOutcome, InnocentRecord) {
    CaseRecord rec{{CaseId("i1"), "fact"}, {{ChargeName("Robbery"), false}}, std::nullopt};
    EXPECT_TRUE(make_case_outcome(rec, {Verdict{false, "", false}}).y_correct);
    EXPECT_FALSE(make_case_outcome(rec, {Verdict{true, "", false}}).y_correct);
    EXPECT_THROW(make_case_outcome(rec, {}), PreconditionError);
}

TEST(Ids, TaggedIdsCompareByValue) {
    EXPECT_EQ(ChargeName("a"), ChargeName(std::string("a")));
    EXPECT_LT(ChargeName("a"), ChargeName("b"));
    EXPECT_TRUE(SubTaskId().empty());
}
