#include "malr/cli.hpp"

#include "malr/errors.hpp"
#include "malr/eval.hpp"
#include "malr/http_backend.hpp"
#include "malr/judgment.hpp"
#include "malr/knowledge.hpp"
#include "malr/planner.hpp"
#include "malr/scripted_backend.hpp"
#include "malr/synthetic.hpp"
#include "malr/text.hpp"
#include "malr/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <memory>

namespace malr::cli {

namespace {

// Bad combination of options that the parser itself cannot catch.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string env_or_empty(const std::string& name) {
    const char* v = name.empty() ? nullptr : std::getenv(name.c_str());
    return v ? std::string(v) : std::string();
}

HttpEndpoint endpoint_for(const std::string& url, const std::string& model, const std::string& credential_env,
                          long timeout_ms, const char* what) {
    if (url.empty()) throw UsageError(std::string(what) + " needs an endpoint URL");
    return HttpEndpoint{url, model, env_or_empty(credential_env), std::chrono::milliseconds(timeout_ms)};
}

struct Runtime {
    std::unique_ptr<CompletionBackend> backend;
    TemplateLibrary templates;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<CompletionBackend> oracle_backend;
    std::unique_ptr<ExpertAdapter> expert;

    Runtime(const CliConfig& cfg, std::istream& in, std::ostream& out) {
        if (cfg.backend.kind == "scripted") {
            backend = std::make_unique<ScriptedBackend>(ScriptedConfig::parse(cfg.backend.scripted_mode));
        } else if (cfg.backend.kind == "http") {
            backend = std::make_unique<HttpChatBackend>(endpoint_for(cfg.backend.endpoint, cfg.backend.model,
                                                                     cfg.backend.credential_env, cfg.backend.timeout_ms,
                                                                     "the http backend"));
        } else {
            throw UsageError("unknown backend kind '" + cfg.backend.kind + "'");
        }
        templates = cfg.templates_dir ? TemplateLibrary::from_directory(*cfg.templates_dir) : TemplateLibrary::builtin();

        if (cfg.embedder.kind == "trigram") {
            embedder = std::make_unique<TrigramEmbedder>(cfg.embedder.dim);
        } else if (cfg.embedder.kind == "http") {
            embedder = std::make_unique<HttpEmbedder>(endpoint_for(cfg.embedder.endpoint, cfg.embedder.model,
                                                                   cfg.embedder.credential_env, 60000, "the http embedder"));
        } else {
            throw UsageError("unknown embedder kind '" + cfg.embedder.kind + "'");
        }

        switch (cfg.oracle.kind) {
            case OracleKind::scripted: {
                world::Knowledge knowledge;
                if (!cfg.oracle.knowledge_table.empty()) knowledge = load_knowledge(cfg.oracle.knowledge_table);
                expert = std::make_unique<ScriptedExpert>(ScriptedExpert::from_knowledge(std::move(knowledge)));
                break;
            }
            case OracleKind::console:
                expert = std::make_unique<ConsoleExpert>(in, out);
                break;
            case OracleKind::http_model:
                oracle_backend = std::make_unique<HttpChatBackend>(endpoint_for(
                    cfg.oracle.endpoint, cfg.oracle.model, cfg.oracle.credential_env, 60000, "the http_model oracle"));
                expert = std::make_unique<ModelExpert>(*oracle_backend, templates);
                break;
        }
    }
};

void apply_backend_flag(BackendConfig& b, const std::string& flag) {
    if (flag == "http") {
        b.kind = "http";
    } else if (flag.rfind("scripted", 0) == 0) {
        b.kind = "scripted";
        b.scripted_mode = flag.size() > 9 ? flag.substr(9) : "perfect";
    } else {
        throw UsageError("--backend expects 'http' or 'scripted[:mode]', got '" + flag + "'");
    }
}

struct GlobalOptions {
    std::string config_path;
    std::string backend;
    std::string endpoint;
    std::string model;
    std::string templates;
    std::string oracle;
    std::string knowledge;
    std::string oracle_endpoint;
    std::string oracle_model;
    std::string embedder;
    std::string embedder_endpoint;
    std::string embedder_model;
    double zeta = 0.8;
    int max_trials = 2;
    std::size_t workers = 1;
    bool deterministic = false;
    bool nondeterministic = false;
};

struct Options {
    std::string train, rules, out, subtasks, kb, report, fact, charge, cases, strategy = "malr", exemplars,
        dataset_id, kb_action;
    bool no_filter = false, no_success = false, no_esp = false;
    bool no_insight = false, no_ask = false, direct = false, ablations = false;
};

CliConfig resolve_config(const CLI::App& app, const GlobalOptions& g) {
    CliConfig cfg = g.config_path.empty() ? CliConfig{} : CliConfig::load(g.config_path);
    const auto set = [&app](const char* name) { return app.get_option(name)->count() > 0; };
    if (set("--backend")) apply_backend_flag(cfg.backend, g.backend);
    if (set("--endpoint")) cfg.backend.endpoint = g.endpoint;
    if (set("--model")) cfg.backend.model = g.model;
    if (set("--templates")) cfg.templates_dir = g.templates;
    if (set("--oracle")) cfg.oracle.kind = oracle_kind_from_string(g.oracle);
    if (set("--knowledge")) cfg.oracle.knowledge_table = g.knowledge;
    if (set("--oracle-endpoint")) cfg.oracle.endpoint = g.oracle_endpoint;
    if (set("--oracle-model")) cfg.oracle.model = g.oracle_model;
    if (set("--embedder")) cfg.embedder.kind = g.embedder;
    if (set("--embedder-endpoint")) cfg.embedder.endpoint = g.embedder_endpoint;
    if (set("--embedder-model")) cfg.embedder.model = g.embedder_model;
    if (set("--zeta")) cfg.zeta = g.zeta;
    if (set("--max-trials")) cfg.max_trials = g.max_trials;
    if (set("--workers")) cfg.workers = g.workers;
    if (g.deterministic) cfg.deterministic = true;
    if (g.nondeterministic) cfg.deterministic = false;
    if (cfg.deterministic.value_or(false) && cfg.backend.kind != "scripted") {
        throw UsageError("--deterministic applies to scripted backends only");
    }
    return cfg;
}

std::string require(const std::string& value, const char* flag, const char* command) {
    if (value.empty()) throw UsageError(std::string(command) + " needs " + flag);
    return value;
}

int cmd_plan(const CliConfig& cfg, Runtime& rt, const Options& o, std::ostream& out) {
    const auto rules = RuleKB::load(o.rules);
    const auto cases = load_cases(o.train, rules);
    PlannerConfig pc;
    pc.zeta = cfg.zeta;
    pc.samples = golden_samples(cases);
    const auto result = AutoPlanner(*rt.backend, rt.templates).plan(pc, cases, rules);
    write_text_file(o.out, plan_to_document(result));
    const auto row = [&](const char* what, const LabelFrequency& f) {
        out << std::left << std::setw(8) << what << std::setw(24) << f.label << std::right << std::fixed
            << std::setprecision(3) << f.probability << "  (" << f.samples << "/" << result.sample_count << ")\n";
    };
    for (const auto& f : result.kept) row("kept", f);
    for (const auto& f : result.dropped) row("dropped", f);
    out << "wrote " << result.subtasks.size() << " sub-tasks to " << o.out << "\n";
    return ok;
}

int cmd_train(const CliConfig& cfg, Runtime& rt, const Options& o, std::ostream& out) {
    const auto rules = RuleKB::load(o.rules);
    const auto cases = load_cases(o.train, rules);
    const auto subtasks = load_subtasks(o.subtasks);
    TrainerConfig tc;
    tc.max_trials = cfg.max_trials;
    tc.pairs = TrainerConfig::pairs_from_cases(cases);
    tc.enable_filtering = !o.no_filter;
    tc.enable_success_experience = !o.no_success;
    tc.enable_esp_experience = !o.no_esp;
    InsightKB kb;
    const InsightTrainer trainer(*rt.backend, rt.templates, rules, subtasks);
    const auto report = trainer.run_training(tc, kb);
    kb.save(o.kb);
    if (!o.report.empty()) write_text_file(o.report, report.to_document());
    for (const auto& item : report.items) {
        out << item.case_id << "  " << item.golden << " vs " << item.confusing << ": ";
        if (item.unresolved) {
            out << "unresolved (" << item.reason << ")\n";
        } else {
            out << to_string(*item.kind) << " at trial " << *item.resolved_at_trial << "\n";
        }
    }
    out << "insights written: " << kb.size() << " (pair " << report.pair_insights << ", success "
        << report.success_insights << ", filtered out " << report.filtered_out << ")\n";
    out << "unresolved: " << report.unresolved().size() << "\n";
    return ok;
}

MalrFlags flags_from(const Options& o, bool have_kb) {
    MalrFlags flags;
    flags.use_feedback = !o.no_ask;
    if (o.no_insight) {
        flags.use_insights = false;
        flags.insight_mode = InsightMode::none;
    } else if (o.direct) {
        flags.insight_mode = InsightMode::direct;
    } else if (have_kb) {
        flags.insight_mode = InsightMode::trained;
    } else {
        flags.use_insights = false;
        flags.insight_mode = InsightMode::none;
    }
    return flags;
}

int cmd_infer(const CliConfig&, Runtime& rt, const Options& o, std::ostream& out) {
    const auto rules = RuleKB::load(o.rules);
    const auto subtasks = load_subtasks(o.subtasks);
    const FactDescription fact{CaseId("infer"), std::string(text::trim(read_text_file(o.fact)))};
    const auto& rule = rules.get_rule(ChargeName(o.charge));
    std::optional<InsightKB> kb;
    if (!o.kb.empty()) kb = InsightKB::load(o.kb);
    const auto flags = flags_from(o, kb.has_value());

    std::optional<FeedbackOracle> oracle;
    if (flags.use_feedback) oracle.emplace(*rt.backend, rt.templates, *rt.expert);
    const InsightTransfer transfer(*rt.backend, rt.templates, *rt.embedder);
    std::unique_ptr<InsightProvider> provider;
    if (flags.insight_mode == InsightMode::trained) {
        provider = std::make_unique<TrainedInsightProvider>(*kb, rules, &transfer);
    } else if (flags.insight_mode == InsightMode::direct) {
        provider = std::make_unique<DirectInsightProvider>(*rt.backend, rt.templates);
    }
    const JudgmentEngine engine(*rt.backend, rt.templates, oracle ? &*oracle : nullptr);
    const auto ctx = engine.context_for(rule, subtasks, flags, provider.get());
    const auto judged = engine.judge_charge(fact, rule, subtasks, ctx);

    out << "charge: " << rule.charge_name << "\n";
    out << "verdict: " << (judged.verdict.guilty ? "guilty" : "not guilty") << "\n";
    out << "reason: " << judged.verdict.rationale << "\n";
    for (const auto& st : subtasks) {
        const auto& a = judged.trajectory.answer_for(st.id);
        out << "  " << st.label << " (" << st.id << "): " << to_string(a.finding) << (a.parse_flag ? " [unparsed]" : "")
            << "\n";
        for (const auto& id : a.used_insight_ids) out << "    insight " << id << "\n";
        if (auto it = judged.feedback.find(st.id); it != judged.feedback.end()) {
            for (const auto& f : it->second) out << "    feedback " << f.id << ": " << f.question << " -> " << f.answer << "\n";
        }
    }
    return ok;
}

int cmd_eval(const CliConfig& cfg, Runtime& rt, const Options& o, std::ostream& out) {
    const auto rules = RuleKB::load(o.rules);
    const auto cases = load_cases(o.cases, rules);
    const auto name = strategy_from_string(o.strategy);
    const bool malr = name == StrategyName::malr;
    if (o.ablations && !malr) throw UsageError("--ablations needs --strategy malr");

    std::optional<SubTaskSet> subtasks;
    std::optional<InsightKB> kb;
    if (malr) {
        subtasks = load_subtasks(require(o.subtasks, "--subtasks", "eval with malr"));
        if (!o.kb.empty()) kb = InsightKB::load(o.kb);
        if (o.ablations && !kb) throw UsageError("--ablations needs --kb");
    }

    EvalEnvironment env;
    env.backend = rt.backend.get();
    env.templates = &rt.templates;
    env.rules = &rules;
    env.subtasks = subtasks ? &*subtasks : nullptr;
    env.insight_kb = kb ? &*kb : nullptr;
    env.embedder = rt.embedder.get();
    env.expert = rt.expert.get();

    EvalConfig ec;
    ec.workers = cfg.workers;
    ec.deterministic = cfg.deterministic.value_or(cfg.backend.kind == "scripted");
    ec.dataset_id = o.dataset_id.empty() ? std::filesystem::path(o.cases).stem().string() : o.dataset_id;

    std::vector<EvalReport> reports;
    if (o.ablations) {
        std::optional<AblationTraining> training;
        if (!o.train.empty()) {
            training.emplace();
            training->base.max_trials = cfg.max_trials;
            training->base.pairs = TrainerConfig::pairs_from_cases(load_cases(o.train, rules));
        }
        reports = compare_ablations(cases, env, ec, training ? &*training : nullptr);
        write_text_file(o.report, reports_to_document(reports));
    } else {
        StrategySpec spec = malr ? StrategySpec::malr(flags_from(o, kb.has_value())) : StrategySpec::baseline(name);
        if (!o.exemplars.empty()) {
            if (!(name == StrategyName::fs_prompt || name == StrategyName::fs_cot)) {
                throw UsageError("--exemplars applies to fs_prompt and fs_cot only");
            }
            spec.exemplars = load_exemplars(o.exemplars);
        }
        reports.push_back(evaluate(cases, spec, env, ec));
        write_text_file(o.report, reports.front().to_document());
    }
    out << reports_text_table(reports);
    return ok;
}

int cmd_kb(const Options& o, std::ostream& out) {
    const auto raw = read_text_file(o.kb);
    const auto kb = InsightKB::from_document(raw);
    if (o.kb_action == "export") {
        out << raw;
        return ok;
    }
    for (const auto& [charge, buckets] : kb.buckets()) {
        for (const auto& [subtask, list] : buckets) out << charge << " | " << subtask << " | " << list.size() << "\n";
    }
    return ok;
}

int cmd_synth(const Options& o, std::ostream& out) {
    const auto corpus = make_synthetic_corpus();
    write_synthetic_corpus(corpus, o.out);
    out << "wrote " << corpus.rules.size() << " rules, " << corpus.train.size() << " training and "
        << corpus.eval.size() << " evaluation cases to " << o.out << "\n";
    return ok;
}

}  // namespace

CliConfig CliConfig::from_document(const std::string& doc) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(doc);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what(), doc);
    }
    if (!j.is_object()) throw ParseError("config must be a JSON object", doc);
    CliConfig cfg;
    try {
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            cfg.backend.kind = b.value("kind", cfg.backend.kind);
            cfg.backend.scripted_mode = b.value("mode", cfg.backend.scripted_mode);
            cfg.backend.endpoint = b.value("endpoint", cfg.backend.endpoint);
            cfg.backend.model = b.value("model", cfg.backend.model);
            cfg.backend.credential_env = b.value("credential_env", cfg.backend.credential_env);
            cfg.backend.timeout_ms = b.value("timeout_ms", cfg.backend.timeout_ms);
        }
        if (j.contains("oracle")) {
            const auto& x = j["oracle"];
            if (x.contains("kind")) cfg.oracle.kind = oracle_kind_from_string(x["kind"].get<std::string>());
            cfg.oracle.endpoint = x.value("endpoint", cfg.oracle.endpoint);
            cfg.oracle.model = x.value("model", cfg.oracle.model);
            cfg.oracle.credential_env = x.value("credential_env", cfg.oracle.credential_env);
            cfg.oracle.knowledge_table = x.value("knowledge_table", cfg.oracle.knowledge_table);
        }
        if (j.contains("embedder")) {
            const auto& e = j["embedder"];
            cfg.embedder.kind = e.value("kind", cfg.embedder.kind);
            cfg.embedder.dim = e.value("dim", cfg.embedder.dim);
            cfg.embedder.endpoint = e.value("endpoint", cfg.embedder.endpoint);
            cfg.embedder.model = e.value("model", cfg.embedder.model);
            cfg.embedder.credential_env = e.value("credential_env", cfg.embedder.credential_env);
        }
        if (j.contains("templates_dir")) cfg.templates_dir = j["templates_dir"].get<std::string>();
        cfg.zeta = j.value("zeta", cfg.zeta);
        cfg.max_trials = j.value("max_trials", cfg.max_trials);
        cfg.workers = j.value("workers", cfg.workers);
        if (j.contains("deterministic")) cfg.deterministic = j["deterministic"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config has a field of the wrong type: ") + e.what(), doc);
    }
    return cfg;
}

CliConfig CliConfig::load(const std::filesystem::path& path) { return from_document(read_text_file(path)); }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in) {
    CLI::App app{"Multi-agent legal rule reasoning: plan, train, infer and evaluate."};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config file; flags override it");
    app.add_option("--backend", g.backend, "http, or scripted[:perfect|:affirmative|:flawed:<element>[:misdirected]]");
    app.add_option("--endpoint", g.endpoint, "Chat-completions URL for the http backend");
    app.add_option("--model", g.model, "Model name for the http backend");
    app.add_option("--templates", g.templates, "Directory of <name>.txt template overrides");
    app.add_option("--oracle", g.oracle, "Expert adapter")->check(CLI::IsMember({"scripted", "console", "http_model"}));
    app.add_option("--knowledge", g.knowledge, "Knowledge table for the scripted expert");
    app.add_option("--oracle-endpoint", g.oracle_endpoint, "Chat-completions URL for the http_model expert");
    app.add_option("--oracle-model", g.oracle_model, "Model name for the http_model expert");
    app.add_option("--embedder", g.embedder, "Rule embedder")->check(CLI::IsMember({"trigram", "http"}));
    app.add_option("--embedder-endpoint", g.embedder_endpoint, "Embeddings URL for the http embedder");
    app.add_option("--embedder-model", g.embedder_model, "Model name for the http embedder");
    app.add_option("--zeta", g.zeta, "Planner frequency threshold")->check(CLI::Range(0.0, 1.0));
    app.add_option("--max-trials", g.max_trials, "Trial budget per training pair")->check(CLI::PositiveNumber);
    app.add_option("--workers", g.workers, "Evaluation worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic", g.deterministic, "Zero wall time in reports (scripted backends)");
    app.add_flag("--no-deterministic", g.nondeterministic, "Record wall time even for scripted backends");

    Options o;
    auto* plan = app.add_subcommand("plan", "Derive the sub-task set from training cases");
    plan->add_option("--train", o.train, "Training cases (JSONL)")->required();
    plan->add_option("--rules", o.rules, "Rule KB")->required();
    plan->add_option("--out", o.out, "Sub-task set output")->required();

    auto* train = app.add_subcommand("train", "Gain experience and draw insights into a KB");
    train->add_option("--train", o.train, "Training cases (JSONL)")->required();
    train->add_option("--rules", o.rules, "Rule KB")->required();
    train->add_option("--subtasks", o.subtasks, "Sub-task set from plan")->required();
    train->add_option("--kb", o.kb, "Insight KB output")->required();
    train->add_option("--report", o.report, "Training report output");
    train->add_flag("--no-filter", o.no_filter, "Skip insight filtering");
    train->add_flag("--no-success", o.no_success, "Ignore first-trial successes");
    train->add_flag("--no-esp", o.no_esp, "Ignore error-success pairs");

    auto* infer = app.add_subcommand("infer", "Judge one fact against one charge");
    infer->add_option("--fact", o.fact, "File holding the fact description")->required();
    infer->add_option("--charge", o.charge, "Charge name")->required();
    infer->add_option("--rules", o.rules, "Rule KB")->required();
    infer->add_option("--subtasks", o.subtasks, "Sub-task set from plan")->required();
    infer->add_option("--kb", o.kb, "Insight KB");
    infer->add_flag("--no-insight", o.no_insight, "Judge without insights");
    infer->add_flag("--no-ask", o.no_ask, "Judge without expert feedback");
    infer->add_flag("--direct", o.direct, "Generate insights from the rule instead of the KB");

    auto* eval = app.add_subcommand("eval", "Evaluate a strategy on a case file");
    eval->add_option("--cases", o.cases, "Evaluation cases (JSONL)")->required();
    eval->add_option("--rules", o.rules, "Rule KB")->required();
    eval->add_option("--report", o.report, "Report output")->required();
    eval->add_option("--strategy", o.strategy, "Strategy")
        ->check(CLI::IsMember({"zs_cot", "lrp", "fs_prompt", "fs_cot", "chain_of_logic", "malr"}));
    eval->add_option("--subtasks", o.subtasks, "Sub-task set (malr)");
    eval->add_option("--kb", o.kb, "Insight KB (malr)");
    eval->add_option("--exemplars", o.exemplars, "Few-shot exemplar file");
    eval->add_option("--train", o.train, "Training cases, enables the trainer ablations");
    eval->add_option("--dataset-id", o.dataset_id, "Dataset label in the report");
    eval->add_flag("--no-insight", o.no_insight, "malr without insights");
    eval->add_flag("--no-ask", o.no_ask, "malr without expert feedback");
    eval->add_flag("--direct", o.direct, "malr with directly generated insights");
    eval->add_flag("--ablations", o.ablations, "Run every malr ablation");

    auto* kb = app.add_subcommand("kb", "Inspect an insight KB");
    kb->add_option("action", o.kb_action, "list or export")->required()->check(CLI::IsMember({"list", "export"}));
    kb->add_option("--kb", o.kb, "Insight KB")->required();

    auto* synth = app.add_subcommand("synth", "Write the synthetic rule-world corpus");
    synth->add_option("--out", o.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return usage;
    }

    try {
        const auto cfg = resolve_config(app, g);
        if (kb->parsed()) return cmd_kb(o, out);
        if (synth->parsed()) return cmd_synth(o, out);
        Runtime rt(cfg, in, out);
        if (plan->parsed()) return cmd_plan(cfg, rt, o, out);
        if (train->parsed()) return cmd_train(cfg, rt, o, out);
        if (infer->parsed()) return cmd_infer(cfg, rt, o, out);
        if (eval->parsed()) return cmd_eval(cfg, rt, o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return usage;
    } catch (const BackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return backend_failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return data_error;
    }
    return usage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
    std::vector<const char*> argv{"malr"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err, in);
}

}  // namespace malr::cli
