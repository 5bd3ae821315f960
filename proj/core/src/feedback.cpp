#include "malr/feedback.hpp"

#include "malr/errors.hpp"
#include "malr/judgment.hpp"
#include "malr/text.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace malr {

std::string_view to_string(OracleKind k) {
    switch (k) {
        case OracleKind::http_model: return "http_model";
        case OracleKind::scripted: return "scripted";
        case OracleKind::console: return "console";
    }
    return "scripted";
}

OracleKind oracle_kind_from_string(std::string_view s) {
    if (s == "http_model") return OracleKind::http_model;
    if (s == "scripted") return OracleKind::scripted;
    if (s == "console") return OracleKind::console;
    throw ValidationError("unknown oracle kind '" + std::string(s) + "'");
}

ScriptedExpert::ScriptedExpert(std::map<std::string, std::string> answers)
    : responder_([answers = std::move(answers)](const std::string& q) -> std::optional<std::string> {
          auto it = answers.find(q);
          if (it == answers.end()) return std::nullopt;
          return it->second;
      }) {}

ScriptedExpert ScriptedExpert::from_knowledge(world::Knowledge knowledge) {
    return ScriptedExpert(Responder([knowledge = std::move(knowledge)](const std::string& q) {
        return world::expert_answer(knowledge, q);
    }));
}

std::string ScriptedExpert::answer(const std::string& question) {
    auto a = responder_(question);
    return a ? *a : std::string("Unknown.");
}

std::string ModelExpert::answer(const std::string& question) {
    CompletionRequest request{render(templates_.get("expert"), {{"question", question}}), std::nullopt, {}};
    auto reply = complete(request, backend_);
    auto answer = std::string(text::trim(reply.text));
    if (answer.empty()) throw MalformedResponseError("expert model returned an empty answer", reply.text);
    return answer;
}

std::string ConsoleExpert::answer(const std::string& question) {
    std::lock_guard lock(mutex_);
    out_ << "Expert question: " << question << "\n> " << std::flush;
    std::string line;
    if (!std::getline(in_, line)) throw BackendError("console expert reached end of input");
    return std::string(text::trim(line));
}

std::vector<SubTaskId> FeedbackOracle::select_fact_check_subtasks(const InsightBuckets& insights,
                                                                  const SubTaskSet& subtasks) const {
    std::ostringstream insight_lines, aspect_lines;
    bool any = false;
    for (const auto& [subtask, list] : insights) {
        for (const auto& in : list) {
            insight_lines << subtask << " | " << in.text << "\n";
            any = true;
        }
    }
    if (!any) return {};
    for (const auto& st : subtasks) aspect_lines << st.id << " | " << format_aspect(st) << "\n";
    CompletionRequest request{
        render(templates_.get("select_fact_check"), {{"aspects", aspect_lines.str()}, {"insights", insight_lines.str()}}),
        std::nullopt, decoding_};
    const auto reply = complete(request, backend_);

    std::optional<std::string> listed;
    for (const auto& line : text::split_lines(reply.text)) {
        auto t = text::trim(line);
        if (t.size() >= 6 && text::iequals(t.substr(0, 6), "CHECK:")) listed = std::string(text::trim(t.substr(6)));
    }
    if (!listed) throw ParseError("fact-check selection lacks a CHECK line", reply.text);
    std::vector<SubTaskId> out;
    if (text::iequals(*listed, "none") || listed->empty()) return out;
    for (const auto& part : text::split(*listed, ',')) {
        const SubTaskId id{std::string(text::trim(part))};
        if (id.empty()) continue;
        if (!subtasks.contains(id)) {
            throw ValidationError("fact-check selection names unknown sub-task '" + id.str() + "'");
        }
        if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    }
    return out;
}

std::string FeedbackOracle::generate_question(const SubTask& subtask, const FactDescription& fact,
                                              const std::vector<Insight>& insights,
                                              const std::vector<SubTaskId>& selected) const {
    if (std::find(selected.begin(), selected.end(), subtask.id) == selected.end()) {
        throw PreconditionError("sub-task '" + subtask.id.str() + "' was not selected for fact-checking");
    }
    const Bindings bindings = {
        {"aspect", format_aspect(subtask)}, {"fact", fact.text}, {"insights", format_insights(insights)}};
    CompletionRequest request{render(templates_.get("key_question"), bindings), std::nullopt, decoding_};
    const auto reply = complete(request, backend_);
    for (const auto& line : text::split_lines(reply.text)) {
        auto t = text::trim(line);
        if (!t.empty()) return std::string(t);
    }
    throw ParseError("key question generation returned nothing", reply.text);
}

KnowledgeFeedback FeedbackOracle::ask(const std::string& question, const SubTaskId& subtask) {
    if (text::trim(question).empty()) throw PreconditionError("empty key question");
    std::shared_future<std::string> answer;
    std::promise<std::string> promise;
    bool owner = false;
    {
        std::lock_guard lock(cache_mutex_);
        auto it = cache_.find(question);
        if (it == cache_.end()) {
            answer = promise.get_future().share();
            cache_.emplace(question, answer);
            owner = true;
        } else {
            answer = it->second;
        }
    }
    if (owner) {
        try {
            ++adapter_calls_;
            auto a = std::string(text::trim(adapter_.answer(question)));
            if (a.empty()) throw BackendError("expert '" + adapter_.id() + "' returned an empty answer");
            promise.set_value(std::move(a));
        } catch (...) {
            {
                std::lock_guard lock(cache_mutex_);
                cache_.erase(question);
            }
            promise.set_exception(std::current_exception());
        }
    }
    // Rethrows the adapter's failure, if any.
    std::string text = answer.get();
    return KnowledgeFeedback{feedback_id_for(subtask, question), subtask, question, std::move(text), adapter_.id()};
}

FeedbackId feedback_id_for(const SubTaskId& subtask, const std::string& question) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : question) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return FeedbackId("kg:" + subtask.str() + ":" + hex);
}

}  // namespace malr
