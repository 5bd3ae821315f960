#include "malr/gateway.hpp"
#include "malr/judgment.hpp"
#include "malr/knowledge.hpp"
#include "malr/scripted_backend.hpp"
#include "malr/synthetic.hpp"

#include <benchmark/benchmark.h>

using namespace malr;

namespace {

const SyntheticCorpus& corpus() {
    static const SyntheticCorpus c = make_synthetic_corpus();
    return c;
}

SubTaskSet aspects() {
    return SubTaskSet({{SubTaskId("subject"), "Subject", "Who may commit the offence.", 1.0},
                       {SubTaskId("mental"), "Mental", "Intent or negligence.", 1.0},
                       {SubTaskId("object"), "Object", "Interest the offence harms.", 1.0},
                       {SubTaskId("conduct"), "Conduct", "The act itself.", 1.0}});
}

void BM_RenderJudgeTemplate(benchmark::State& state) {
    const auto lib = TemplateLibrary::builtin();
    const auto& tpl = lib.get("subtask_judge");
    const auto& rec = corpus().train.front();
    const Bindings b{{"role", "You judge one aspect."}, {"aspect", "Subject"}, {"rule", corpus().rules.front().text}, {"fact", rec.fact.text},
                     {"insights", "(none)"}, {"feedback", "(none)"}, {"reflection", ""}};
    for (auto _ : state) benchmark::DoNotOptimize(render(tpl, b));
}
BENCHMARK(BM_RenderJudgeTemplate);

void BM_Combine(benchmark::State& state) {
    const auto st = aspects();
    std::vector<SubAnswer> answers;
    for (const auto& s : st) {
        SubAnswer a;
        a.subtask_id = s.id;
        a.finding = Finding::satisfied;
        answers.push_back(a);
    }
    for (auto _ : state) benchmark::DoNotOptimize(combine(answers, st));
}
BENCHMARK(BM_Combine);

void BM_TrigramEmbed(benchmark::State& state) {
    const TrigramEmbedder e;
    const auto& text = corpus().rules.front().text;
    for (auto _ : state) benchmark::DoNotOptimize(e.embed(text));
    state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_TrigramEmbed);

void BM_ScriptedPredictCase(benchmark::State& state) {
    const ScriptedBackend backend;
    const auto lib = TemplateLibrary::builtin();
    const RuleKB rules(corpus().rules);
    const auto st = aspects();
    const JudgmentEngine engine(backend, lib);
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& rec = corpus().eval[i++ % corpus().eval.size()];
        benchmark::DoNotOptimize(engine.predict_case(rec, rules, st, MalrFlags::bare(), nullptr));
    }
}
BENCHMARK(BM_ScriptedPredictCase);

}  // namespace
BENCHMARK_MAIN();
