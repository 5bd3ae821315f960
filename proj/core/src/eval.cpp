#include "malr/eval.hpp"

#include "malr/errors.hpp"
#include "malr/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

namespace malr {

using json = nlohmann::ordered_json;

std::string_view to_string(StrategyName s) {
    switch (s) {
        case StrategyName::zs_cot: return "zs_cot";
        case StrategyName::lrp: return "lrp";
        case StrategyName::fs_prompt: return "fs_prompt";
        case StrategyName::fs_cot: return "fs_cot";
        case StrategyName::chain_of_logic: return "chain_of_logic";
        case StrategyName::malr: return "malr";
    }
    return "malr";
}

StrategyName strategy_from_string(std::string_view s) {
    for (auto n : {StrategyName::zs_cot, StrategyName::lrp, StrategyName::fs_prompt, StrategyName::fs_cot,
                   StrategyName::chain_of_logic, StrategyName::malr}) {
        if (s == to_string(n)) return n;
    }
    throw PreconditionError("unknown strategy '" + std::string(s) + "'");
}

bool is_baseline(StrategyName s) { return s != StrategyName::malr; }

namespace {

bool is_few_shot(StrategyName s) { return s == StrategyName::fs_prompt || s == StrategyName::fs_cot; }

std::string format_exemplars(const std::vector<Exemplar>& exemplars, bool with_reasoning) {
    std::ostringstream out;
    int n = 0;
    for (const auto& e : exemplars) {
        out << "Example " << ++n << "\nRule: " << e.rule << "\nFact: " << e.fact << "\nCharge: " << e.charge << "\n";
        if (with_reasoning && !e.reasoning.empty()) out << "Reasoning: " << e.reasoning << "\n";
        out << "ANSWER: " << (e.guilty ? "YES" : "NO") << "\n\n";
    }
    return out.str();
}

std::optional<std::string> value_after(std::string_view line, std::string_view prefix) {
    auto t = text::trim(line);
    if (t.size() < prefix.size() || !text::iequals(t.substr(0, prefix.size()), prefix)) return std::nullopt;
    auto v = text::to_lower(text::trim(t.substr(prefix.size())));
    while (!v.empty() && (v.back() == '.' || v.back() == '*')) v.pop_back();
    return v;
}

std::string fixed(double v, int digits = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

[[noreturn]] void rethrow_aggregated(const std::vector<std::pair<std::string, std::exception_ptr>>& errors) {
    std::ostringstream msg;
    msg << errors.size() << " case(s) failed";
    for (const auto& [where, e] : errors) {
        try {
            std::rethrow_exception(e);
        } catch (const std::exception& ex) {
            msg << "\n  " << where << ": " << ex.what();
        }
    }
    try {
        std::rethrow_exception(errors.front().second);
    } catch (const BackendError&) {
        throw BackendError(msg.str());
    } catch (const DataError&) {
        throw DataError(msg.str());
    } catch (const PreconditionError&) {
        throw PreconditionError(msg.str());
    } catch (...) {
        throw Error(msg.str());
    }
}

}  // namespace

std::vector<Exemplar> default_exemplars() {
    return {
        Exemplar{"The defendant, a clerk at the county tax office, accepted 50,000 yuan from a contractor in exchange "
                 "for waiving an inspection.",
                 "A state functionary who uses the convenience of office to demand or accept property from others "
                 "and seeks benefits for them commits bribe acceptance.",
                 "Bribe acceptance",
                 "The clerk is a state functionary, accepted property and gave a benefit through the office. Every "
                 "element holds.",
                 true},
        Exemplar{"The defendant, a sales manager at a private firm, took 20,000 yuan from a supplier to place an "
                 "order with them.",
                 "A state functionary who uses the convenience of office to demand or accept property from others "
                 "and seeks benefits for them commits bribe acceptance.",
                 "Bribe acceptance",
                 "The manager works for a private firm and is not a state functionary, so the subject element fails.",
                 false},
    };
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path) {
    const auto raw = read_text_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("exemplar file '" + path.string() + "' is not valid JSON: " + e.what(), raw);
    }
    if (!doc.is_object() || !doc.contains("exemplars") || !doc["exemplars"].is_array()) {
        throw ParseError("exemplar file '" + path.string() + "' lacks an 'exemplars' array", raw);
    }
    std::vector<Exemplar> out;
    for (const auto& e : doc["exemplars"]) {
        try {
            out.push_back(Exemplar{e.at("fact").get<std::string>(), e.at("rule").get<std::string>(),
                                   e.at("charge").get<std::string>(), e.value("reasoning", std::string()),
                                   e.at("guilty").get<bool>()});
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError("exemplar " + std::to_string(out.size()) + ": " + ex.what(), e.dump());
        }
    }
    return out;
}

void StrategySpec::validate() const {
    if (is_few_shot(name)) {
        const auto pos = std::count_if(exemplars.begin(), exemplars.end(), [](const Exemplar& e) { return e.guilty; });
        if (exemplars.size() != 2 || pos != 1) {
            throw PreconditionError(std::string(to_string(name)) +
                                    " needs exactly one positive and one negative exemplar");
        }
    } else if (!exemplars.empty()) {
        throw PreconditionError(std::string(to_string(name)) + " takes no exemplars");
    }
    if (name == StrategyName::malr && malr_flags.use_insights && malr_flags.insight_mode == InsightMode::none) {
        throw PreconditionError("malr with insights needs an insight mode");
    }
}

StrategySpec StrategySpec::baseline(StrategyName name) {
    if (!is_baseline(name)) throw PreconditionError("malr is not a baseline strategy");
    StrategySpec s;
    s.name = name;
    s.malr_flags = MalrFlags::bare();
    if (is_few_shot(name)) s.exemplars = default_exemplars();
    return s;
}

StrategySpec StrategySpec::malr(MalrFlags flags) {
    StrategySpec s;
    s.name = StrategyName::malr;
    s.malr_flags = flags;
    return s;
}

std::vector<CaseRecord> parse_cases(std::string_view jsonl, const RuleKB& rules) {
    std::vector<CaseRecord> out;
    std::vector<std::string> problems;
    bool syntax = false;
    std::string first_bad;
    const auto lines = text::split_lines(jsonl);
    std::set<CaseId> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (text::trim(line).empty()) continue;
        const auto where = "line " + std::to_string(i + 1) + ": ";
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            problems.push_back(where + "invalid JSON (" + e.what() + ")");
            if (!syntax) first_bad = line;
            syntax = true;
            continue;
        }
        CaseRecord r;
        try {
            r.fact.case_id = CaseId(j.at("id").get<std::string>());
            r.fact.text = j.at("fact").get<std::string>();
            for (const auto& q : j.at("queries")) {
                r.queries.push_back({ChargeName(q.at("charge").get<std::string>()), q.at("expected").get<bool>()});
            }
            if (j.contains("pair_tag") && j["pair_tag"].is_string()) r.pair_tag = j["pair_tag"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            problems.push_back(where + "malformed record (" + e.what() + ")");
            continue;
        }
        for (const auto& v : validate_case(r, rules)) problems.push_back(where + v.message);
        if (!r.fact.case_id.empty() && !ids.insert(r.fact.case_id).second) {
            problems.push_back(where + "duplicate case id '" + r.fact.case_id.str() + "'");
        }
        out.push_back(std::move(r));
    }
    if (!problems.empty()) {
        const auto msg = "invalid case file:\n  " + text::join(problems, "\n  ");
        if (syntax) throw ParseError(msg, first_bad);
        throw ValidationError(msg);
    }
    return out;
}

std::vector<CaseRecord> load_cases(const std::filesystem::path& path, const RuleKB& rules) {
    try {
        return parse_cases(read_text_file(path), rules);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.raw_text());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string cases_to_jsonl(const std::vector<CaseRecord>& cases) {
    std::string out;
    for (const auto& r : cases) {
        json queries = json::array();
        for (const auto& q : r.queries) queries.push_back({{"charge", q.charge_name.str()}, {"expected", q.expected_guilty}});
        json j = {{"id", r.fact.case_id.str()}, {"fact", r.fact.text}, {"queries", queries}};
        if (r.pair_tag) j["pair_tag"] = *r.pair_tag;
        out += j.dump() + "\n";
    }
    return out;
}

Verdict BaselineJudge::baseline_judge(const StrategySpec& strategy, const FactDescription& fact,
                                      const LegalRule& rule) const {
    if (!is_baseline(strategy.name)) throw PreconditionError("baseline_judge needs a baseline strategy");
    strategy.validate();
    const auto& tpl = templates_.get("baseline_" + std::string(to_string(strategy.name)));
    const Bindings bindings = {
        {"rule", rule.text},
        {"fact", fact.text},
        {"charge", rule.charge_name.str()},
        {"examples", format_exemplars(strategy.exemplars, strategy.name == StrategyName::fs_cot)},
    };
    CompletionRequest request{render(tpl, bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);

    Verdict v;
    v.rationale = std::string(text::trim(reply.text));
    std::optional<bool> answer;
    std::vector<SubAnswer> elements;
    std::vector<SubTask> element_tasks;
    for (const auto& line : text::split_lines(reply.text)) {
        if (auto a = value_after(line, "ANSWER:")) {
            if (*a == "yes") answer = true;
            else if (*a == "no") answer = false;
        }
        if (strategy.name != StrategyName::chain_of_logic) continue;
        auto t = text::trim(line);
        if (t.size() <= 8 || !text::iequals(t.substr(0, 8), "ELEMENT ")) continue;
        const auto colon = t.find(':');
        if (colon == std::string_view::npos) continue;
        const SubTaskId id{std::string(text::trim(t.substr(8, colon - 8)))};
        if (id.empty() || std::any_of(element_tasks.begin(), element_tasks.end(),
                                      [&](const SubTask& s) { return s.id == id; })) {
            continue;
        }
        auto parsed = parse_finding("ANSWER: " + std::string(text::trim(t.substr(colon + 1))));
        element_tasks.push_back(SubTask{id, id.str(), {}, 1.0});
        SubAnswer sa;
        sa.subtask_id = id;
        sa.finding = parsed.finding;
        sa.parse_flag = parsed.parse_flag;
        elements.push_back(std::move(sa));
    }
    if (!elements.empty()) {
        const auto combined = combine(elements, SubTaskSet(element_tasks));
        v.guilty = combined.guilty;
        return v;
    }
    if (!answer) {
        v.parse_flag = true;
        v.guilty = false;
        return v;
    }
    v.guilty = *answer;
    return v;
}

bool query_matched(const QueryVerdict& qv) { return !qv.verdict.parse_flag && qv.verdict.guilty == qv.expected_guilty; }

void fill_metrics(EvalReport& report) {
    long cases = 0, correct = 0, golden = 0, accepted = 0, confusing = 0, rejected = 0, flagged = 0;
    std::map<std::string, std::pair<long, long>> pairs, charges;
    for (const auto& o : report.per_case_outcomes) {
        ++cases;
        correct += o.y_correct;
        if (o.pair_tag) {
            auto& p = pairs[*o.pair_tag];
            ++p.first;
            p.second += o.y_correct;
        }
        for (const auto& qv : o.per_query_verdicts) {
            flagged += qv.verdict.parse_flag;
            if (qv.expected_guilty) {
                ++golden;
                accepted += query_matched(qv);
                auto& c = charges[qv.charge_name.str()];
                ++c.first;
                c.second += o.y_correct;
            } else {
                ++confusing;
                rejected += query_matched(qv);
            }
        }
    }
    const auto ratio = [](long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; };
    report.joint_accuracy = ratio(correct, cases);
    report.golden_accept_rate = ratio(accepted, golden);
    report.confusing_reject_rate = ratio(rejected, confusing);
    report.parse_failures = flagged;
    report.per_pair.clear();
    for (const auto& [tag, c] : pairs) report.per_pair[tag] = ratio(c.second, c.first);
    report.per_golden_charge.clear();
    for (const auto& [name, c] : charges) report.per_golden_charge[name] = ratio(c.second, c.first);
}

namespace {

json report_json(const EvalReport& r) {
    json cases = json::array();
    for (const auto& o : r.per_case_outcomes) {
        json queries = json::array();
        for (const auto& qv : o.per_query_verdicts) {
            queries.push_back({{"charge", qv.charge_name.str()},
                               {"expected", qv.expected_guilty},
                               {"guilty", qv.verdict.guilty},
                               {"parse_flag", qv.verdict.parse_flag},
                               {"rationale", qv.verdict.rationale}});
        }
        cases.push_back({{"case_id", o.case_id.str()},
                         {"pair_tag", o.pair_tag ? json(*o.pair_tag) : json(nullptr)},
                         {"y_correct", o.y_correct},
                         {"queries", queries}});
    }
    json per_pair = json::object();
    for (const auto& [k, v] : r.per_pair) per_pair[k] = v;
    json per_charge = json::object();
    for (const auto& [k, v] : r.per_golden_charge) per_charge[k] = v;
    return {{"strategy", r.strategy},
            {"variant", r.variant},
            {"dataset_id", r.dataset_id},
            {"joint_accuracy", r.joint_accuracy},
            {"golden_accept_rate", r.golden_accept_rate},
            {"confusing_reject_rate", r.confusing_reject_rate},
            {"parse_failures", r.parse_failures},
            {"per_pair", per_pair},
            {"per_golden_charge", per_charge},
            {"cost",
             {{"total_prompt_tokens", r.cost.total_prompt_tokens},
              {"total_output_tokens", r.cost.total_output_tokens},
              {"completions", r.cost.completions},
              {"wall_time_seconds", r.cost.wall_time_seconds},
              {"per_case_mean_tokens", r.cost.per_case_mean_tokens}}},
            {"cases", cases}};
}

std::string name_of(const EvalReport& r) { return r.variant.empty() ? r.strategy : r.strategy + " (" + r.variant + ")"; }

}  // namespace

std::string EvalReport::to_document() const { return report_json(*this).dump(2) + "\n"; }

std::string EvalReport::text_table() const { return reports_text_table({*this}); }

std::string reports_to_document(const std::vector<EvalReport>& reports) {
    json all = json::array();
    for (const auto& r : reports) all.push_back(report_json(r));
    return json{{"reports", all}}.dump(2) + "\n";
}

std::string reports_text_table(const std::vector<EvalReport>& reports) {
    std::size_t width = 8;
    for (const auto& r : reports) width = std::max(width, name_of(r).size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "strategy" << "  " << std::right << std::setw(7)
        << "joint" << std::setw(9) << "golden" << std::setw(11) << "confusing" << std::setw(8) << "parse"
        << std::setw(12) << "tokens" << "\n";
    for (const auto& r : reports) {
        out << std::left << std::setw(static_cast<int>(width)) << name_of(r) << "  " << std::right << std::setw(7)
            << fixed(r.joint_accuracy) << std::setw(9) << fixed(r.golden_accept_rate) << std::setw(11)
            << fixed(r.confusing_reject_rate) << std::setw(8) << r.parse_failures << std::setw(12)
            << (r.cost.total_prompt_tokens + r.cost.total_output_tokens) << "\n";
    }
    std::set<std::string> tags;
    for (const auto& r : reports) {
        for (const auto& [tag, _] : r.per_pair) tags.insert(tag);
    }
    if (tags.empty()) return out.str();
    out << "\nper pair (joint accuracy)\n";
    std::size_t tag_width = 4;
    for (const auto& t : tags) tag_width = std::max(tag_width, t.size());
    out << std::left << std::setw(static_cast<int>(tag_width)) << "pair";
    for (std::size_t i = 0; i < reports.size(); ++i) out << std::right << std::setw(8) << ("#" + std::to_string(i + 1));
    out << "\n";
    for (const auto& t : tags) {
        out << std::left << std::setw(static_cast<int>(tag_width)) << t;
        for (const auto& r : reports) {
            auto it = r.per_pair.find(t);
            out << std::right << std::setw(8) << (it == r.per_pair.end() ? std::string("-") : fixed(it->second));
        }
        out << "\n";
    }
    return out.str();
}

InsightBuckets TrainedInsightProvider::insights_for(const LegalRule& rule, const SubTaskSet& subtasks) const {
    InsightBuckets out;
    if (kb_.has_charge(rule.charge_name)) {
        for (auto& [id, list] : kb_.bucket(rule.charge_name)) {
            if (subtasks.contains(id) && !list.empty()) out[id] = std::move(list);
        }
        return out;
    }
    if (transfer_ == nullptr) return out;
    std::lock_guard lock(mutex_);
    auto it = transferred_.find(rule.charge_name);
    if (it == transferred_.end()) {
        InsightBuckets made;
        for (auto& in : transfer_->transfer_insights(rule, kb_, rules_, subtasks).insights) {
            made[in.subtask_id].push_back(std::move(in));
        }
        it = transferred_.emplace(rule.charge_name, std::move(made)).first;
    }
    return it->second;
}

InsightBuckets DirectInsightProvider::insights_for(const LegalRule& rule, const SubTaskSet& subtasks) const {
    std::lock_guard lock(mutex_);
    auto it = generated_.find(rule.charge_name);
    if (it == generated_.end()) {
        InsightBuckets made;
        for (auto& in : generate_direct_insights(backend_, templates_, rule, subtasks, decoding_)) {
            made[in.subtask_id].push_back(std::move(in));
        }
        it = generated_.emplace(rule.charge_name, std::move(made)).first;
    }
    return it->second;
}

EvalReport evaluate(const std::vector<CaseRecord>& dataset, const StrategySpec& strategy, const EvalEnvironment& env,
                    const EvalConfig& config) {
    strategy.validate();
    if (env.backend == nullptr || env.templates == nullptr || env.rules == nullptr) {
        throw PreconditionError("evaluation needs a backend, templates and a rule KB");
    }
    const bool malr = strategy.name == StrategyName::malr;
    const auto& flags = strategy.malr_flags;
    if (malr && env.subtasks == nullptr) throw PreconditionError("malr evaluation needs a planned sub-task set");
    if (malr && flags.use_insights && flags.insight_mode == InsightMode::trained && env.insight_kb == nullptr) {
        throw PreconditionError("malr with trained insights needs an insight KB");
    }

    UsageMeter meter;
    MeteredBackend backend(*env.backend, meter);
    std::optional<FeedbackOracle> oracle;
    if (malr && flags.use_feedback && env.expert != nullptr) oracle.emplace(backend, *env.templates, *env.expert, env.decoding);
    std::optional<InsightTransfer> transfer;
    if (env.embedder != nullptr) transfer.emplace(backend, *env.templates, *env.embedder, env.decoding);
    std::unique_ptr<InsightProvider> provider;
    if (malr && flags.use_insights) {
        if (flags.insight_mode == InsightMode::trained) {
            provider = std::make_unique<TrainedInsightProvider>(*env.insight_kb, *env.rules,
                                                                transfer ? &*transfer : nullptr);
        } else if (flags.insight_mode == InsightMode::direct) {
            provider = std::make_unique<DirectInsightProvider>(backend, *env.templates, env.decoding);
        }
    }
    const JudgmentEngine engine(backend, *env.templates, oracle ? &*oracle : nullptr, env.decoding);
    const BaselineJudge baseline(backend, *env.templates, env.decoding);

    std::vector<std::optional<CaseOutcome>> outcomes(dataset.size());
    std::vector<std::exception_ptr> failures(dataset.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i; (i = next++) < dataset.size();) {
            const auto& record = dataset[i];
            try {
                if (malr) {
                    outcomes[i] = engine.predict_case(record, *env.rules, *env.subtasks, flags, provider.get());
                } else {
                    std::vector<Verdict> verdicts;
                    for (const auto& q : record.queries) {
                        verdicts.push_back(baseline.baseline_judge(strategy, record.fact, env.rules->get_rule(q.charge_name)));
                    }
                    outcomes[i] = make_case_outcome(record, std::move(verdicts));
                }
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const auto started = std::chrono::steady_clock::now();
    const std::size_t pool = std::max<std::size_t>(1, std::min(config.workers, dataset.size()));
    if (pool == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    std::vector<std::pair<std::string, std::exception_ptr>> errors;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (failures[i]) errors.emplace_back("case '" + dataset[i].fact.case_id.str() + "'", failures[i]);
    }
    if (!errors.empty()) rethrow_aggregated(errors);

    EvalReport report;
    report.strategy = std::string(to_string(strategy.name));
    report.variant = config.variant;
    report.dataset_id = config.dataset_id;
    for (auto& o : outcomes) report.per_case_outcomes.push_back(std::move(*o));
    std::stable_sort(report.per_case_outcomes.begin(), report.per_case_outcomes.end(),
                     [](const CaseOutcome& a, const CaseOutcome& b) { return a.case_id < b.case_id; });
    fill_metrics(report);
    const auto totals = meter.totals();
    report.cost.total_prompt_tokens = totals.prompt_tokens;
    report.cost.total_output_tokens = totals.output_tokens;
    report.cost.completions = totals.completions;
    report.cost.wall_time_seconds = config.deterministic ? 0.0 : elapsed;
    report.cost.per_case_mean_tokens =
        dataset.empty() ? 0.0 : static_cast<double>(totals.prompt_tokens + totals.output_tokens) / dataset.size();
    return report;
}

std::vector<EvalReport> compare_ablations(const std::vector<CaseRecord>& dataset, const EvalEnvironment& env,
                                          const EvalConfig& config, const AblationTraining* training) {
    struct Variant {
        std::string label;
        MalrFlags flags;
    };
    const std::vector<Variant> variants = {
        {"w/o insight", MalrFlags::bare()},
        {"w/o ask", {true, false, InsightMode::trained}},
        {"directly generate", {true, false, InsightMode::direct}},
        {"full", {true, true, InsightMode::trained}},
    };
    std::vector<EvalReport> out;
    for (const auto& v : variants) {
        auto cfg = config;
        cfg.variant = v.label;
        out.push_back(evaluate(dataset, StrategySpec::malr(v.flags), env, cfg));
    }
    if (training == nullptr) return out;
    if (env.subtasks == nullptr) throw PreconditionError("trainer ablations need a planned sub-task set");
    struct TrainerVariant {
        std::string label;
        bool TrainerConfig::*flag;
    };
    const std::vector<TrainerVariant> trainer_variants = {
        {"w/o E_success", &TrainerConfig::enable_success_experience},
        {"w/o E_esp", &TrainerConfig::enable_esp_experience},
        {"w/o M_filtering", &TrainerConfig::enable_filtering},
    };
    for (const auto& tv : trainer_variants) {
        auto tcfg = training->base;
        tcfg.*tv.flag = false;
        InsightKB kb;
        InsightTrainer trainer(*env.backend, *env.templates, *env.rules, *env.subtasks, env.decoding);
        trainer.run_training(tcfg, kb);
        auto local = env;
        local.insight_kb = &kb;
        auto cfg = config;
        cfg.variant = tv.label;
        out.push_back(evaluate(dataset, StrategySpec::malr({true, true, InsightMode::trained}), local, cfg));
    }
    return out;
}

}  // namespace malr
