#pragma once

#include "malr/domain.hpp"
#include "malr/gateway.hpp"
#include "malr/knowledge.hpp"
#include "malr/rule_world.hpp"

#include <atomic>
#include <cstddef>
#include <functional>
#include <future>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace malr {

struct KnowledgeFeedback {
    FeedbackId id;
    SubTaskId subtask_id;
    std::string question;
    std::string answer;
    std::string source;
};

using FeedbackBuckets = std::map<SubTaskId, std::vector<KnowledgeFeedback>>;

enum class OracleKind { http_model, scripted, console };

std::string_view to_string(OracleKind k);
OracleKind oracle_kind_from_string(std::string_view s);

struct OracleAdapterSpec {
    OracleKind kind = OracleKind::scripted;
    std::string endpoint;                        // http_model
    std::string model;                           // http_model
    std::string credential_env = "MALR_API_KEY"; // http_model
    std::string knowledge_table;                 // scripted: JSON {position: category}
};

// Whoever answers key questions: a legal model, a scripted table, or a person.
class ExpertAdapter {
public:
    virtual ~ExpertAdapter() = default;
    virtual std::string answer(const std::string& question) = 0;
    virtual std::string id() const = 0;
};

class ScriptedExpert final : public ExpertAdapter {
public:
    using Responder = std::function<std::optional<std::string>(const std::string&)>;

    explicit ScriptedExpert(std::map<std::string, std::string> answers);
    explicit ScriptedExpert(Responder responder) : responder_(std::move(responder)) {}
    static ScriptedExpert from_knowledge(world::Knowledge knowledge);

    // Unknown questions get "Unknown."
    std::string answer(const std::string& question) override;
    std::string id() const override { return "scripted"; }

private:
    Responder responder_;
};

// Domain model behind the chat-completion protocol, prompted with the "expert" template.
class ModelExpert final : public ExpertAdapter {
public:
    ModelExpert(const CompletionBackend& backend, const TemplateLibrary& templates)
        : backend_(backend), templates_(templates) {}
    std::string answer(const std::string& question) override;
    std::string id() const override { return "http_model:" + backend_.id(); }

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
};

// Human expert: prints the question, reads one line. Single consumer.
class ConsoleExpert final : public ExpertAdapter {
public:
    ConsoleExpert(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    std::string answer(const std::string& question) override;
    std::string id() const override { return "console"; }

private:
    std::mutex mutex_;
    std::istream& in_;
    std::ostream& out_;
};

// Decides which aspects need fact-checking, phrases key questions and asks the expert.
// Answers are cached by exact question text; concurrent askers of the same question share a
// single adapter call.
class FeedbackOracle {
public:
    FeedbackOracle(const CompletionBackend& backend, const TemplateLibrary& templates,
                   ExpertAdapter& adapter, DecodingParams decoding = {})
        : backend_(backend), templates_(templates), adapter_(adapter), decoding_(decoding) {}

    // Subset of `subtasks` ids. No model call when every bucket is empty. Throws
    // ValidationError when the model names an id outside the set.
    std::vector<SubTaskId> select_fact_check_subtasks(const InsightBuckets& insights,
                                                      const SubTaskSet& subtasks) const;

    // Throws PreconditionError when `subtask` is not among `selected`, ParseError on an
    // empty completion.
    std::string generate_question(const SubTask& subtask, const FactDescription& fact,
                                  const std::vector<Insight>& insights,
                                  const std::vector<SubTaskId>& selected) const;

    KnowledgeFeedback ask(const std::string& question, const SubTaskId& subtask);

    std::size_t adapter_calls() const noexcept { return adapter_calls_.load(); }
    const ExpertAdapter& adapter() const noexcept { return adapter_; }

private:
    const CompletionBackend& backend_;
    const TemplateLibrary& templates_;
    ExpertAdapter& adapter_;
    DecodingParams decoding_;

    std::mutex cache_mutex_;
    std::map<std::string, std::shared_future<std::string>> cache_;
    std::atomic<std::size_t> adapter_calls_{0};
};

// Stable id for a question: "kg:<subtask>:<16 hex digits>".
FeedbackId feedback_id_for(const SubTaskId& subtask, const std::string& question);

}  // namespace malr
