#include "malr/cli.hpp"
#include "malr/eval.hpp"
#include "malr/knowledge.hpp"
#include "malr/rule_world.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace malr;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result malr_run(std::vector<std::string> args, const std::string& input = {}) {
    std::ostringstream out, err;
    std::istringstream in(input);
    const int code = cli::run(args, out, err, in);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new support::TempDir();
        ASSERT_EQ(malr_run({"synth", "--out", d()}).code, 0);
        ASSERT_EQ(malr_run({"plan", "--train", p("train.jsonl"), "--rules", p("rules.json"), "--out", p("st.json")}).code, 0);
        const auto t = malr_run({"--backend", "scripted:flawed:subject", "train", "--train", p("train.jsonl"), "--rules",
                                 p("rules.json"), "--subtasks", p("st.json"), "--kb", p("kb.json")});
        ASSERT_EQ(t.code, 0) << t.err;
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static std::string d() { return dir_->path().string(); }
    static std::string p(const std::string& name) { return (*dir_ / name).string(); }
    static void write(const std::string& name, const std::string& body) { std::ofstream(p(name)) << body; }

    static support::TempDir* dir_;
};

support::TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(malr_run({}).code, 1);
    EXPECT_EQ(malr_run({"frobnicate"}).code, 1);
    EXPECT_EQ(malr_run({"eval", "--cases", p("eval.jsonl"), "--rules", p("rules.json"), "--report", p("r.json"),
                        "--strategy", "tot"})
                  .code,
              1);
    EXPECT_EQ(malr_run({"eval", "--cases", p("eval.jsonl"), "--rules", p("rules.json"), "--report", p("r.json")}).code,
              1);
    EXPECT_EQ(malr_run({"--backend", "carrier-pigeon", "kb", "list", "--kb", p("kb.json")}).code, 1);
    EXPECT_EQ(malr_run({"--zeta", "1.5", "kb", "list", "--kb", p("kb.json")}).code, 1);
    EXPECT_EQ(malr_run({"--backend", "http", "plan", "--train", p("train.jsonl"), "--rules", p("rules.json"), "--out",
                        p("x.json")})
                  .code,
              1);
    EXPECT_EQ(malr_run({"--help"}).code, 0);
}

TEST_F(Cli, MissingRuleFileIsDataError) {
    const auto r = malr_run({"plan", "--train", p("train.jsonl"), "--rules", p("no-rules.json"), "--out", p("x.json")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("no-rules.json"), std::string::npos);
}

TEST_F(Cli, UnreachableBackendExitsTwo) {
    const auto r = malr_run({"--backend", "http", "--endpoint", "http://127.0.0.1:1/v1/chat/completions", "eval",
                             "--cases", p("eval.jsonl"), "--rules", p("rules.json"), "--report", p("r-http.json"),
                             "--strategy", "zs_cot"});
    EXPECT_EQ(r.code, 2) << r.err;
    EXPECT_NE(r.err.find("backend error"), std::string::npos);
}

TEST_F(Cli, CorruptKbIsDataError) {
    write("corrupt.json", R"({"charges": {"Theft": {"subject": [{"id": 7}]}}})");
    const auto r = malr_run({"kb", "list", "--kb", p("corrupt.json")});
    EXPECT_EQ(r.code, 3);
    EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, EmptyKbListsNothing) {
    InsightKB().save(p("empty.json"));
    const auto r = malr_run({"kb", "list", "--kb", p("empty.json")});
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, KbListAndExport) {
    const auto kb = InsightKB::load(p("kb.json"));
    const auto list = malr_run({"kb", "list", "--kb", p("kb.json")});
    ASSERT_EQ(list.code, 0);
    std::size_t rows = 0;
    for (const auto& [charge, buckets] : kb.buckets()) rows += buckets.size();
    EXPECT_EQ(static_cast<std::size_t>(std::count(list.out.begin(), list.out.end(), '\n')), rows);
    const auto exported = malr_run({"kb", "export", "--kb", p("kb.json")});
    EXPECT_EQ(InsightKB::from_document(exported.out), kb);
}

TEST_F(Cli, UnknownChargeIsDataError) {
    write("fact.txt", "The defendant did something.");
    const auto r = malr_run({"infer", "--fact", p("fact.txt"), "--charge", "Piracy", "--rules", p("rules.json"),
                             "--subtasks", p("st.json")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("Piracy"), std::string::npos);
}

TEST_F(Cli, UnwritableKbIsDataError) {
    const auto r = malr_run({"train", "--train", p("train.jsonl"), "--rules", p("rules.json"), "--subtasks",
                             p("st.json"), "--kb", p("missing-dir/kb.json")});
    EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, InferPrintsVerdictAndFeedback) {
    const auto& corpus = support::corpus();
    const CaseRecord* opaque = nullptr;
    for (const auto& c : corpus.eval) {
        for (const auto& [k, a] : world::parse_attributes(c.fact.text)) {
            if (a.opaque && opaque == nullptr) opaque = &c;
        }
    }
    ASSERT_NE(opaque, nullptr);
    write("opaque.txt", opaque->fact.text);
    const auto& golden = opaque->queries[0].expected_guilty ? opaque->queries[0] : opaque->queries[1];
    const auto r = malr_run({"--backend", "scripted:flawed:subject", "--knowledge", p("knowledge.json"), "infer",
                             "--fact", p("opaque.txt"), "--charge", golden.charge_name.str(), "--rules",
                             p("rules.json"), "--subtasks", p("st.json"), "--kb", p("kb.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("charge: " + golden.charge_name.str()), std::string::npos);
    EXPECT_NE(r.out.find("verdict: guilty"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("    feedback kg:"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("    insight "), std::string::npos);

    const auto bare = malr_run({"infer", "--fact", p("opaque.txt"), "--charge", golden.charge_name.str(), "--rules",
                                p("rules.json"), "--subtasks", p("st.json"), "--no-insight"});
    ASSERT_EQ(bare.code, 0) << bare.err;
    EXPECT_NE(bare.out.find("verdict: not guilty"), std::string::npos) << bare.out;
    EXPECT_EQ(bare.out.find("feedback"), std::string::npos);
}

TEST_F(Cli, NoFilterKeepsMoreInsights) {
    const auto a = malr_run({"--backend", "scripted:flawed:subject", "train", "--train", p("train.jsonl"), "--rules",
                             p("rules.json"), "--subtasks", p("st.json"), "--kb", p("kb-nf.json"), "--no-filter"});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("filtered out 0"), std::string::npos) << a.out;
    EXPECT_GT(InsightKB::load(p("kb-nf.json")).size(), InsightKB::load(p("kb.json")).size());
}

TEST_F(Cli, ConfigFileAndFlagOverride) {
    write("cfg.json", R"({"backend": {"kind": "scripted", "mode": "affirmative"}, "deterministic": true})");
    const auto a = malr_run({"--config", p("cfg.json"), "eval", "--cases", p("eval.jsonl"), "--rules",
                             p("rules.json"), "--report", p("r-cfg.json"), "--strategy", "zs_cot"});
    ASSERT_EQ(a.code, 0) << a.err;
    std::ifstream in(p("r-cfg.json"));
    const std::string doc((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(doc.find("\"joint_accuracy\": 0.0"), std::string::npos) << doc.substr(0, 400);
    EXPECT_NE(doc.find("\"dataset_id\": \"eval\""), std::string::npos);

    const auto b = malr_run({"--config", p("cfg.json"), "--backend", "scripted:perfect", "eval", "--cases",
                             p("eval.jsonl"), "--rules", p("rules.json"), "--report", p("r-cfg2.json"), "--strategy",
                             "zs_cot"});
    ASSERT_EQ(b.code, 0) << b.err;
    std::ifstream in2(p("r-cfg2.json"));
    const std::string doc2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(doc2.find("\"joint_accuracy\": 0.0,"), std::string::npos);

    write("bad-cfg.json", R"({"backend": 5})");
    EXPECT_EQ(malr_run({"--config", p("bad-cfg.json"), "kb", "list", "--kb", p("kb.json")}).code, 3);
}

TEST_F(Cli, CredentialComesFromEnvironmentOnly) {
    EXPECT_EQ(malr_run({"--api-key", "secret", "kb", "list", "--kb", p("kb.json")}).code, 1);
}

TEST_F(Cli, EvalAblationsTable) {
    const auto r = malr_run({"--backend", "scripted:flawed:subject", "--knowledge", p("knowledge.json"), "eval",
                             "--cases", p("eval.jsonl"), "--rules", p("rules.json"), "--report", p("abl.json"),
                             "--subtasks", p("st.json"), "--kb", p("kb.json"), "--ablations"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* v : {"w/o insight", "w/o ask", "directly generate", "full"}) {
        EXPECT_NE(r.out.find(v), std::string::npos) << v;
    }
    EXPECT_EQ(r.out.find("w/o E_esp"), std::string::npos);
}
