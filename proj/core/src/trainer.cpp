#include "malr/trainer.hpp"

#include "malr/errors.hpp"
#include "malr/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace malr {

using json = nlohmann::json;

namespace {

std::string one_line(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '\n' || c == '\r') {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            out.push_back(c == '|' ? '/' : c);
        }
    }
    return std::string(text::trim(out));
}

std::string describe_answer(const SubAnswer& a) {
    return "finding: " + std::string(to_string(a.finding)) + "\nrationale: " + one_line(a.rationale);
}

Trajectory restamp(const Trajectory& t, int trial_index, const SubTaskSet& subtasks, int max_trials) {
    return Trajectory(t.charge_name(), t.role(), trial_index, t.answers(), subtasks, max_trials);
}

template <class Fn>
auto attributed(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const MalformedResponseError& e) {
        throw MalformedResponseError(where + e.what(), e.raw_payload());
    } catch (const BackendError& e) {
        throw BackendError(where + e.what());
    }
}

}  // namespace

void TrainerConfig::validate() const {
    if (max_trials < 1) throw PreconditionError("max_trials must be at least 1");
    if (pairs.empty()) throw PreconditionError("training needs at least one golden/confusing pair");
}

std::vector<TrainingPair> TrainerConfig::pairs_from_cases(const std::vector<CaseRecord>& cases) {
    std::vector<TrainingPair> out;
    for (const auto& r : cases) {
        const ChargeQuery* golden = nullptr;
        const ChargeQuery* confusing = nullptr;
        for (const auto& q : r.queries) (q.expected_guilty ? golden : confusing) = &q;
        if (r.queries.size() != 2 || golden == nullptr || confusing == nullptr) {
            throw ValidationError("training case '" + r.fact.case_id.str() +
                                  "' must hold exactly one golden and one confusing charge");
        }
        out.push_back({r.fact, golden->charge_name, confusing->charge_name});
    }
    return out;
}

std::string_view to_string(ExperienceKind k) {
    return k == ExperienceKind::success ? "success" : "error_success_pair";
}

void Experience::validate() const {
    const int gi = success.golden.trial_index();
    const int ci = success.confusing.trial_index();
    if (gi != ci) throw ValidationError("experience '" + case_id.str() + "' mixes trial indices");
    if (kind == ExperienceKind::success) {
        if (gi != 1 || failed) throw ValidationError("success experience '" + case_id.str() + "' must succeed at trial 1");
    } else {
        if (!failed || gi <= 1) {
            throw ValidationError("error-success experience '" + case_id.str() + "' needs a failed trial and a later success");
        }
    }
}

TrialEvaluation evaluate_trial(const Trajectory& golden, const Trajectory& confusing, const SubTaskSet& subtasks) {
    const auto g = combine(golden.answers(), subtasks);
    const auto c = combine(confusing.answers(), subtasks);
    TrialEvaluation out;
    out.golden_wrong = !g.guilty;
    out.confusing_wrong = c.guilty;
    out.success = !out.golden_wrong && !out.confusing_wrong;
    return out;
}

std::vector<ErrorSuccessPair> construct_pairs(const Experience& exp) {
    if (exp.kind != ExperienceKind::error_success_pair || !exp.failed) {
        throw PreconditionError("pairs come only from error-success experiences");
    }
    std::vector<ErrorSuccessPair> out;
    const auto diff = [&out](const Trajectory& failed, const Trajectory& fixed) {
        for (const auto& a : failed.answers()) {
            const auto& b = fixed.answer_for(a.subtask_id);
            if (a.finding != b.finding) out.push_back({failed.charge_name(), a.subtask_id, a, b});
        }
    };
    diff(exp.failed->golden, exp.success.golden);
    diff(exp.failed->confusing, exp.success.confusing);
    return out;
}

bool has_if_then(std::string_view s) {
    const auto ws = text::words(s);
    return std::find(ws.begin(), ws.end(), "if") != ws.end() && std::find(ws.begin(), ws.end(), "then") != ws.end();
}

std::vector<CaseId> TrainingReport::unresolved() const {
    std::vector<CaseId> out;
    for (const auto& item : items) {
        if (item.unresolved) out.push_back(item.case_id);
    }
    return out;
}

std::string TrainingReport::to_document() const {
    json jitems = json::array();
    for (const auto& item : items) {
        json j = {{"case_id", item.case_id.str()},
                  {"golden", item.golden.str()},
                  {"confusing", item.confusing.str()},
                  {"evaluations", item.evaluations},
                  {"resolved_at_trial", item.resolved_at_trial ? json(*item.resolved_at_trial) : json(nullptr)},
                  {"experience_kind", item.kind ? json(std::string(to_string(*item.kind))) : json(nullptr)},
                  {"unresolved", item.unresolved}};
        if (!item.reason.empty()) j["reason"] = item.reason;
        jitems.push_back(std::move(j));
    }
    json jcharges = json::object();
    for (const auto& [charge, r] : charges) {
        jcharges[charge.str()] = {{"insights_drawn", r.insights_drawn}, {"insights_written", r.insights_written}};
    }
    return json{{"items", jitems},
                {"charges", jcharges},
                {"pair_insights", pair_insights},
                {"success_insights", success_insights},
                {"filtered_out", filtered_out},
                {"unresolved", static_cast<int>(unresolved().size())}}
               .dump(2) +
           "\n";
}

InsightId InsightIdAllocator::next(const ChargeName& charge, const SubTaskId& subtask) {
    int& n = next_[{charge, subtask}];
    for (;;) {
        InsightId id(prefix_ + charge.str() + "/" + subtask.str() + "/" + std::to_string(++n));
        if (!kb_.has_id(id)) return id;
    }
}

InsightTrainer::InsightTrainer(const CompletionBackend& backend, const TemplateLibrary& templates, const RuleKB& rules,
                               const SubTaskSet& subtasks, DecodingParams decoding)
    : backend_(backend),
      templates_(templates),
      rules_(rules),
      subtasks_(subtasks),
      decoding_(decoding),
      engine_(backend, templates, nullptr, decoding) {}

TrialEvaluation InsightTrainer::evaluate(const Trajectory& golden, const Trajectory& confusing) const {
    ++evaluate_calls_;
    return evaluate_trial(golden, confusing, subtasks_);
}

ReflectionReport InsightTrainer::reflect(const Trajectory& failed, const LegalRule& rule, const FactDescription& fact,
                                         bool expected_guilty) const {
    const Bindings bindings = {
        {"charge", rule.charge_name.str()},
        {"expected", expected_guilty ? "guilty" : "not guilty"},
        {"rule", rule.text},
        {"fact", fact.text},
        {"trajectory", format_trajectory(failed, subtasks_)},
    };
    CompletionRequest request{render(templates_.get("reflect"), bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    ReflectionReport report;
    report.target_role = failed.role();
    for (const auto& line : text::split_lines(reply.text)) {
        auto t = text::trim(line);
        if (t.size() < 6 || !text::iequals(t.substr(0, 6), "ERROR:")) continue;
        t = text::trim(t.substr(6));
        const auto bar = t.find('|');
        const SubTaskId id(std::string(text::trim(t.substr(0, bar))));
        const std::string reason(bar == std::string_view::npos ? "" : text::trim(t.substr(bar + 1)));
        if (id.empty()) continue;
        if (!subtasks_.contains(id)) throw ValidationError("reflection names unknown sub-task '" + id.str() + "'");
        if (!report.reasons.count(id)) report.error_subtask_ids.push_back(id);
        auto& r = report.reasons[id];
        r += (r.empty() ? "" : " ") + reason;
    }
    if (report.error_subtask_ids.empty()) throw ParseError("reflection names no erroneous sub-task", reply.text);
    return report;
}

Trajectory InsightTrainer::retry_subtasks(const Trajectory& failed, const ReflectionReport& report,
                                          const LegalRule& rule, const FactDescription& fact, int max_trials) const {
    if (failed.trial_index() >= max_trials) {
        throw TrialBudgetExhausted("trial " + std::to_string(failed.trial_index()) + " already reached the budget of " +
                                   std::to_string(max_trials));
    }
    if (report.error_subtask_ids.empty()) throw PreconditionError("reflection report names no sub-task");
    const JudgmentContext bare;
    std::vector<SubAnswer> answers;
    for (const auto& a : failed.answers()) {
        auto it = report.reasons.find(a.subtask_id);
        if (it == report.reasons.end()) {
            answers.push_back(a);
            continue;
        }
        const auto& st = subtasks_.at(a.subtask_id);
        answers.push_back(engine_.answer_subtask(AgentSpec::for_subtask(st), st, rule, fact, bare, it->second));
    }
    return Trajectory(failed.charge_name(), failed.role(), failed.trial_index() + 1, std::move(answers), subtasks_,
                      max_trials);
}

GainResult InsightTrainer::gain_experience(const TrainerConfig& config) const {
    config.validate();
    GainResult out;
    const int L = config.max_trials;
    const JudgmentContext bare;
    for (const auto& pair : config.pairs) {
        TrainingItemReport item{pair.fact.case_id, pair.golden, pair.confusing, 0, std::nullopt, std::nullopt, false, {}};
        const auto where = "pair '" + pair.fact.case_id.str() + "' (" + pair.golden.str() + " vs " +
                           pair.confusing.str() + "): ";
        const auto& gr = rules_.get_rule(pair.golden);
        const auto& cr = rules_.get_rule(pair.confusing);
        auto current = attributed(where, [&] {
            return TrajectoryPair{
                engine_.judge_charge(pair.fact, gr, subtasks_, bare, ChargeRole::golden, 1, L).trajectory,
                engine_.judge_charge(pair.fact, cr, subtasks_, bare, ChargeRole::confusing, 1, L).trajectory};
        });
        const TrajectoryPair first = current;
        std::vector<ReflectionReport> reflections;
        for (int l = 1; l <= L; ++l) {
            const auto verdict = evaluate(current.golden, current.confusing);
            ++item.evaluations;
            if (verdict.success) {
                item.resolved_at_trial = l;
                item.kind = l == 1 ? ExperienceKind::success : ExperienceKind::error_success_pair;
                Experience exp{*item.kind, pair.fact.case_id, pair.fact.text, pair.golden, pair.confusing, current,
                               l == 1 ? std::nullopt : std::optional<TrajectoryPair>(first), reflections};
                exp.validate();
                out.experiences.push_back(std::move(exp));
                break;
            }
            if (l == L) {
                item.unresolved = true;
                item.reason = "no success within " + std::to_string(L) + " trials";
                break;
            }
            try {
                auto next = attributed(where, [&] {
                    TrajectoryPair n{restamp(current.golden, l + 1, subtasks_, L),
                                     restamp(current.confusing, l + 1, subtasks_, L)};
                    if (verdict.golden_wrong) {
                        auto report = reflect(current.golden, gr, pair.fact, true);
                        n.golden = retry_subtasks(current.golden, report, gr, pair.fact, L);
                        reflections.push_back(std::move(report));
                    }
                    if (verdict.confusing_wrong) {
                        auto report = reflect(current.confusing, cr, pair.fact, false);
                        n.confusing = retry_subtasks(current.confusing, report, cr, pair.fact, L);
                        reflections.push_back(std::move(report));
                    }
                    return n;
                });
                current = std::move(next);
            } catch (const DataError& e) {
                item.unresolved = true;
                item.reason = std::string("reflection failed: ") + e.what();
                break;
            }
        }
        out.items.push_back(std::move(item));
    }
    return out;
}

Insight InsightTrainer::draw_insight_from_pair(const ErrorSuccessPair& pair, const LegalRule& rule, InsightId id) const {
    if (pair.error_answer.subtask_id != pair.subtask_id || pair.success_answer.subtask_id != pair.subtask_id) {
        throw PreconditionError("error-success pair mixes sub-tasks");
    }
    if (pair.error_answer.finding == pair.success_answer.finding) {
        throw PreconditionError("error-success pair for '" + pair.subtask_id.str() + "' has identical findings");
    }
    const Bindings bindings = {
        {"charge", rule.charge_name.str()},
        {"rule", rule.text},
        {"aspect", format_aspect(subtasks_.at(pair.subtask_id))},
        {"error_answer", describe_answer(pair.error_answer)},
        {"success_answer", describe_answer(pair.success_answer)},
    };
    CompletionRequest request{render(templates_.get("draw_pair"), bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    const std::string body(text::trim(reply.text));
    if (!has_if_then(body)) throw ParseError("drawn insight is not an if-then statement", reply.text);
    Insight out;
    out.id = std::move(id);
    out.charge_name = pair.charge_name;
    out.subtask_id = pair.subtask_id;
    out.text = body;
    out.source = InsightSource::error_success_pair;
    return out;
}

std::vector<Insight> InsightTrainer::draw_insight_from_success(const Experience& exp, InsightIdAllocator& ids) const {
    if (exp.kind != ExperienceKind::success) throw PreconditionError("success drawing needs a success experience");
    const auto& gr = rules_.get_rule(exp.charge_name);
    const auto& cr = rules_.get_rule(exp.confusing_charge);
    const Bindings bindings = {
        {"fact", exp.fact_text},
        {"golden_charge", gr.charge_name.str()},
        {"golden_rule", gr.text},
        {"golden_trajectory", format_trajectory(exp.success.golden, subtasks_)},
        {"confusing_charge", cr.charge_name.str()},
        {"confusing_rule", cr.text},
        {"confusing_trajectory", format_trajectory(exp.success.confusing, subtasks_)},
    };
    CompletionRequest request{render(templates_.get("draw_success"), bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    std::vector<Insight> out;
    for (const auto& line : text::split_lines(reply.text)) {
        const auto f = text::split(line, '|');
        if (f.size() < 3) continue;
        const ChargeName charge{std::string(text::trim(f[0]))};
        const SubTaskId subtask{std::string(text::trim(f[1]))};
        std::vector<std::string> rest(f.begin() + 2, f.end());
        const std::string body(text::trim(text::join(rest, "|")));
        if (charge != exp.charge_name && charge != exp.confusing_charge) {
            throw ValidationError("success insight names charge '" + charge.str() + "' outside the experience");
        }
        if (!subtasks_.contains(subtask)) {
            throw ValidationError("success insight names unknown sub-task '" + subtask.str() + "'");
        }
        if (!has_if_then(body)) continue;
        out.push_back(Insight{ids.next(charge, subtask), charge, subtask, body, InsightSource::success, std::nullopt});
    }
    if (out.empty()) throw ParseError("success drawing produced no if-then insight", reply.text);
    return out;
}

std::vector<Insight> InsightTrainer::filter_insights(const std::vector<Insight>& bucket) const {
    if (bucket.empty()) return {};
    std::ostringstream lines;
    std::set<std::string> known;
    for (const auto& in : bucket) {
        lines << in.id << " | " << one_line(in.text) << "\n";
        known.insert(in.id.str());
    }
    CompletionRequest request{
        render(templates_.get("filter"), {{"charge", bucket.front().charge_name.str()}, {"insights", lines.str()}}),
        std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    std::optional<std::string> listed;
    for (const auto& line : text::split_lines(reply.text)) {
        auto t = text::trim(line);
        if (t.size() >= 5 && text::iequals(t.substr(0, 5), "KEEP:")) listed = std::string(text::trim(t.substr(5)));
    }
    if (!listed) throw ParseError("filter reply lacks a KEEP line", reply.text);
    std::set<std::string> keep;
    if (!text::iequals(*listed, "none")) {
        for (const auto& part : text::split(*listed, ',')) {
            const std::string id(text::trim(part));
            if (id.empty()) continue;
            if (!known.count(id)) throw ValidationError("filter keeps unknown insight '" + id + "'");
            keep.insert(id);
        }
    }
    std::vector<Insight> out;
    for (const auto& in : bucket) {
        if (keep.count(in.id.str())) out.push_back(in);
    }
    return out;
}

TrainingReport InsightTrainer::run_training(const TrainerConfig& config, InsightKB& kb) const {
    auto gained = gain_experience(config);
    TrainingReport report;
    report.items = std::move(gained.items);

    InsightIdAllocator ids(kb);
    std::map<ChargeName, std::vector<Insight>> drawn;
    for (const auto& exp : gained.experiences) {
        const auto where = "case '" + exp.case_id.str() + "' (" + exp.charge_name.str() + "): ";
        if (exp.kind == ExperienceKind::error_success_pair && config.enable_esp_experience) {
            for (const auto& pair : construct_pairs(exp)) {
                auto in = attributed(where, [&] {
                    return draw_insight_from_pair(pair, rules_.get_rule(pair.charge_name),
                                                  ids.next(pair.charge_name, pair.subtask_id));
                });
                drawn[in.charge_name].push_back(std::move(in));
            }
        } else if (exp.kind == ExperienceKind::success && config.enable_success_experience) {
            for (auto& in : attributed(where, [&] { return draw_insight_from_success(exp, ids); })) {
                drawn[in.charge_name].push_back(std::move(in));
            }
        }
    }

    for (auto& [charge, fresh] : drawn) {
        auto& counts = report.charges[charge];
        counts.insights_drawn = static_cast<int>(fresh.size());
        std::vector<Insight> survivors = fresh;
        if (config.enable_filtering) {
            std::vector<Insight> all;
            for (const auto& [_, list] : kb.bucket(charge)) all.insert(all.end(), list.begin(), list.end());
            all.insert(all.end(), fresh.begin(), fresh.end());
            std::set<InsightId> fresh_ids;
            for (const auto& in : fresh) fresh_ids.insert(in.id);
            survivors.clear();
            for (auto& in : attributed("charge '" + charge.str() + "': ", [&] { return filter_insights(all); })) {
                if (fresh_ids.count(in.id)) survivors.push_back(std::move(in));
            }
        }
        report.filtered_out += counts.insights_drawn - static_cast<int>(survivors.size());
        for (auto& in : survivors) {
            if (in.source == InsightSource::error_success_pair) ++report.pair_insights;
            if (in.source == InsightSource::success) ++report.success_insights;
            ++counts.insights_written;
            kb.put_insight(std::move(in));
        }
    }
    return report;
}

std::vector<Insight> generate_direct_insights(const CompletionBackend& backend, const TemplateLibrary& templates,
                                              const LegalRule& rule, const SubTaskSet& subtasks,
                                              DecodingParams decoding) {
    std::ostringstream aspects;
    for (const auto& st : subtasks) aspects << st.id << " | " << format_aspect(st) << "\n";
    const Bindings bindings = {{"charge", rule.charge_name.str()}, {"rule", rule.text}, {"aspects", aspects.str()}};
    CompletionRequest request{render(templates.get("direct_insight"), bindings), std::nullopt, decoding};
    const auto reply = complete(request, backend);
    std::vector<Insight> out;
    std::map<SubTaskId, int> counters;
    for (const auto& [id, body] : parse_keyed_lines(reply.text)) {
        const SubTaskId subtask(id);
        if (!subtasks.contains(subtask)) throw ValidationError("direct insight names unknown sub-task '" + id + "'");
        out.push_back(Insight{
            InsightId("direct:" + rule.charge_name.str() + "/" + id + "/" + std::to_string(++counters[subtask])),
            rule.charge_name, subtask, body, InsightSource::direct, std::nullopt});
    }
    if (out.empty()) throw ParseError("direct insight generation produced nothing", reply.text);
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_keyed_lines(std::string_view raw) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& line : text::split_lines(raw)) {
        const auto bar = line.find('|');
        if (bar == std::string::npos) continue;
        std::string id(text::trim(std::string_view(line).substr(0, bar)));
        std::string body(text::trim(std::string_view(line).substr(bar + 1)));
        if (id.empty() || body.empty()) continue;
        out.emplace_back(std::move(id), std::move(body));
    }
    return out;
}

std::string format_trajectory(const Trajectory& trajectory, const SubTaskSet& subtasks) {
    std::ostringstream out;
    for (const auto& st : subtasks) {
        const auto& a = trajectory.answer_for(st.id);
        out << st.id << " | " << st.label << " | " << to_string(a.finding) << " | " << one_line(a.rationale) << "\n";
    }
    return out.str();
}

}  // namespace malr
