#include "malr/judgment.hpp"

#include "malr/text.hpp"

#include <set>
#include <sstream>

namespace malr {

AgentSpec AgentSpec::for_subtask(const SubTask& subtask) {
    AgentSpec spec;
    spec.subtask_id = subtask.id;
    spec.role_preamble = "You are the agent responsible for the " + subtask.label + " aspect of the rule. " +
                         subtask.description;
    return spec;
}

std::string_view to_string(InsightMode m) {
    switch (m) {
        case InsightMode::trained: return "trained";
        case InsightMode::direct: return "direct";
        case InsightMode::none: return "none";
    }
    return "none";
}

InsightMode insight_mode_from_string(std::string_view s) {
    if (s == "trained") return InsightMode::trained;
    if (s == "direct") return InsightMode::direct;
    if (s == "none") return InsightMode::none;
    throw ValidationError("unknown insight mode '" + std::string(s) + "'");
}

void JudgmentContext::validate() const {
    if (insight_mode == InsightMode::none && use_insights) {
        throw PreconditionError("insights are enabled but the insight mode is none");
    }
    if (!use_insights) {
        for (const auto& [id, list] : insights) {
            if (!list.empty()) throw PreconditionError("insights supplied while the insight channel is off");
        }
    }
    if (!use_feedback) {
        for (const auto& [id, list] : feedback) {
            if (!list.empty()) throw PreconditionError("feedback supplied while the feedback channel is off");
        }
    }
}

namespace {

std::optional<Finding> answer_line(std::string_view line) {
    auto t = text::trim(line);
    if (t.size() < 7 || !text::iequals(t.substr(0, 7), "ANSWER:")) return std::nullopt;
    auto value = text::to_lower(text::trim(t.substr(7)));
    while (!value.empty() && (value.back() == '.' || value.back() == '*')) value.pop_back();
    if (value == "yes") return Finding::satisfied;
    if (value == "no") return Finding::not_satisfied;
    if (value == "uncertain") return Finding::uncertain;
    return std::nullopt;
}

std::string last_sentence(std::string_view raw) {
    std::string current, last;
    for (char c : raw) {
        if (c == '.' || c == '!' || c == '?' || c == '\n') {
            if (!text::trim(current).empty()) last = std::string(text::trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!text::trim(current).empty()) last = std::string(text::trim(current));
    return last;
}

bool has_word(const std::vector<std::string>& ws, std::initializer_list<std::string_view> targets) {
    for (const auto& w : ws) {
        for (auto t : targets) {
            if (w == t) return true;
        }
    }
    return false;
}

const std::vector<Insight>& bucket_of(const InsightBuckets& b, const SubTaskId& id) {
    static const std::vector<Insight> empty;
    auto it = b.find(id);
    return it == b.end() ? empty : it->second;
}

const std::vector<KnowledgeFeedback>& bucket_of(const FeedbackBuckets& b, const SubTaskId& id) {
    static const std::vector<KnowledgeFeedback> empty;
    auto it = b.find(id);
    return it == b.end() ? empty : it->second;
}

}  // namespace

ParsedFinding parse_finding(std::string_view raw) {
    ParsedFinding out;
    const auto lines = text::split_lines(raw);
    for (std::size_t i = lines.size(); i-- > 0;) {
        if (auto f = answer_line(lines[i])) {
            std::vector<std::string> rest(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(i));
            out.finding = *f;
            out.rationale = std::string(text::trim(text::join(rest, "\n")));
            return out;
        }
    }
    out.rationale = std::string(text::trim(raw));
    const auto ws = text::words(last_sentence(raw));
    if (has_word(ws, {"uncertain", "unclear", "undetermined"})) {
        out.finding = Finding::uncertain;
    } else if (has_word(ws, {"not", "no"})) {
        out.finding = Finding::not_satisfied;
    } else if (has_word(ws, {"yes", "satisfied", "satisfies", "meets"})) {
        out.finding = Finding::satisfied;
    } else {
        out.finding = Finding::uncertain;
        out.parse_flag = true;
    }
    return out;
}

Verdict combine(const std::vector<SubAnswer>& answers, const SubTaskSet& subtasks) {
    if (answers.size() != subtasks.size()) {
        throw ValidationError("combine needs " + std::to_string(subtasks.size()) + " answers, got " +
                              std::to_string(answers.size()));
    }
    std::set<SubTaskId> seen;
    for (const auto& a : answers) {
        if (!subtasks.contains(a.subtask_id)) throw ValidationError("answer for unknown sub-task '" + a.subtask_id.str() + "'");
        if (!seen.insert(a.subtask_id).second) throw ValidationError("two answers for sub-task '" + a.subtask_id.str() + "'");
    }
    for (const auto& st : subtasks) {
        for (const auto& a : answers) {
            if (a.subtask_id != st.id || a.finding == Finding::satisfied) continue;
            return Verdict{false, "not guilty: the " + st.label + " aspect is " + std::string(to_string(a.finding)), false};
        }
    }
    return Verdict{true, "guilty: every aspect is satisfied", false};
}

std::string format_insights(const std::vector<Insight>& insights) {
    std::ostringstream out;
    for (const auto& in : insights) out << "- " << in.text << "\n";
    return out.str();
}

std::string format_feedback(const std::vector<KnowledgeFeedback>& feedback) {
    std::ostringstream out;
    for (const auto& f : feedback) out << "Q: " << f.question << "\nA: " << f.answer << "\n";
    return out.str();
}

std::string format_aspect(const SubTask& subtask) { return subtask.label + ": " + subtask.description; }

SubAnswer JudgmentEngine::answer_subtask(const AgentSpec& agent, const SubTask& subtask, const LegalRule& rule,
                                         const FactDescription& fact, const JudgmentContext& ctx,
                                         std::string_view reflection) const {
    ctx.validate();
    if (agent.subtask_id != subtask.id) {
        throw PreconditionError("agent for '" + agent.subtask_id.str() + "' asked about '" + subtask.id.str() + "'");
    }
    const auto& insights = ctx.use_insights ? bucket_of(ctx.insights, subtask.id) : bucket_of(InsightBuckets{}, subtask.id);
    const auto& feedback = ctx.use_feedback ? bucket_of(ctx.feedback, subtask.id) : bucket_of(FeedbackBuckets{}, subtask.id);
    const Bindings bindings = {
        {"role", agent.role_preamble},
        {"aspect", format_aspect(subtask)},
        {"rule", rule.text},
        {"fact", fact.text},
        {"insights", format_insights(insights)},
        {"feedback", format_feedback(feedback)},
        {"reflection", std::string(reflection)},
    };
    CompletionRequest request{render(templates_.get(agent.template_name), bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    auto parsed = parse_finding(reply.text);
    SubAnswer out;
    out.subtask_id = subtask.id;
    out.finding = parsed.finding;
    out.rationale = std::move(parsed.rationale);
    out.parse_flag = parsed.parse_flag;
    for (const auto& in : insights) out.used_insight_ids.push_back(in.id);
    for (const auto& f : feedback) out.used_feedback_ids.push_back(f.id);
    return out;
}

ChargeJudgment JudgmentEngine::judge_charge(const FactDescription& fact, const LegalRule& rule,
                                            const SubTaskSet& subtasks, const JudgmentContext& ctx, ChargeRole role,
                                            int trial_index, int max_trials) const {
    ctx.validate();
    if (subtasks.empty()) throw PreconditionError("judging needs at least one sub-task");
    JudgmentContext local = ctx;
    FeedbackBuckets gathered;
    if (ctx.use_feedback && oracle_ != nullptr && ctx.use_insights) {
        const auto selected = oracle_->select_fact_check_subtasks(ctx.insights, subtasks);
        for (const auto& id : selected) {
            std::string question;
            try {
                question = oracle_->generate_question(subtasks.at(id), fact, bucket_of(ctx.insights, id), selected);
            } catch (const ParseError&) {
                continue;  // no question could be phrased for this aspect
            }
            gathered[id].push_back(oracle_->ask(question, id));
        }
        for (auto& [id, list] : gathered) {
            auto& dst = local.feedback[id];
            dst.insert(dst.end(), list.begin(), list.end());
        }
    }
    std::vector<SubAnswer> answers;
    answers.reserve(subtasks.size());
    for (const auto& st : subtasks) {
        try {
            answers.push_back(answer_subtask(AgentSpec::for_subtask(st), st, rule, fact, local));
        } catch (const BackendError& e) {
            throw ChargeJudgmentError("judging '" + rule.charge_name.str() + "' failed at sub-task '" + st.id.str() +
                                          "': " + e.what(),
                                      std::move(answers));
        }
    }
    auto verdict = combine(answers, subtasks);
    return ChargeJudgment{std::move(verdict),
                          Trajectory(rule.charge_name, role, trial_index, std::move(answers), subtasks, max_trials),
                          std::move(local.feedback)};
}

JudgmentContext JudgmentEngine::context_for(const LegalRule& rule, const SubTaskSet& subtasks, const MalrFlags& flags,
                                            const InsightProvider* provider) const {
    JudgmentContext ctx;
    ctx.use_insights = flags.use_insights && flags.insight_mode != InsightMode::none;
    ctx.insight_mode = ctx.use_insights ? flags.insight_mode : InsightMode::none;
    ctx.use_feedback = flags.use_feedback;
    if (ctx.use_insights) {
        if (provider == nullptr) throw PreconditionError("insights are enabled but no insight provider is attached");
        ctx.insights = provider->insights_for(rule, subtasks);
    }
    return ctx;
}

CaseOutcome JudgmentEngine::predict_case(const CaseRecord& record, const RuleKB& rules, const SubTaskSet& subtasks,
                                         const MalrFlags& flags, const InsightProvider* provider) const {
    std::vector<Verdict> verdicts;
    for (const auto& q : record.queries) {
        const auto& rule = rules.get_rule(q.charge_name);
        const auto ctx = context_for(rule, subtasks, flags, provider);
        auto judged = judge_charge(record.fact, rule, subtasks, ctx,
                                   q.expected_guilty ? ChargeRole::golden : ChargeRole::confusing);
        verdicts.push_back(std::move(judged.verdict));
    }
    return make_case_outcome(record, std::move(verdicts));
}

}  // namespace malr
