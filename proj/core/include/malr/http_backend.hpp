#pragma once

#include "malr/gateway.hpp"

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace malr {

struct HttpEndpoint {
    // Full URL of the chat-completions (or embeddings) resource,
    // e.g. https://api.example.com/v1/chat/completions
    std::string url;
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    // Each delay is base * 2^(attempt-1) scaled by a factor drawn from [1-jitter, 1+jitter].
    double jitter = 0.25;
};

struct ParsedUrl {
    std::string scheme_host_port;  // "http://localhost:8080"
    std::string path;              // "/v1/chat/completions"
};

ParsedUrl parse_url(std::string_view url);

// Wire format: {"model", "messages":[{role, content}], "temperature", "max_tokens"}.
nlohmann::json chat_request_body(const CompletionRequest& request, const std::string& model);

// Reads choices[0].message.content and usage.{prompt,completion}_tokens. Throws
// MalformedResponseError carrying the raw body when the payload does not fit.
CompletionResult parse_chat_response(std::string_view body, const std::string& backend_id);

// Result of one HTTP exchange, independent of the client library.
struct HttpReply {
    int status = 0;  // 0 when the connection itself failed
    std::string body;
    std::string error;
};

// POSTs JSON, retrying connection failures, 429 and 5xx with jittered exponential backoff.
// Throws BackendError once attempts run out or on a non-retryable status.
std::string post_json_with_retry(const HttpEndpoint& endpoint, const RetryPolicy& policy,
                                 const nlohmann::json& body);

class HttpChatBackend final : public CompletionBackend {
public:
    HttpChatBackend(HttpEndpoint endpoint, RetryPolicy policy = {});
    CompletionResult complete(const CompletionRequest& request) const override;
    std::string id() const override;

private:
    HttpEndpoint endpoint_;
    RetryPolicy policy_;
};

// Embeddings endpoint: {"model","input"} -> data[0].embedding.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(HttpEndpoint endpoint, RetryPolicy policy = {});
    EmbeddingVector embed(std::string_view text) const override;
    std::string id() const override;

private:
    HttpEndpoint endpoint_;
    RetryPolicy policy_;
};

}  // namespace malr
