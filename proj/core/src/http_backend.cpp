#include "malr/http_backend.hpp"

#include "malr/errors.hpp"
#include "malr/text.hpp"

#include <httplib.h>

#include <cmath>
#include <random>
#include <thread>

namespace malr {

using nlohmann::json;

ParsedUrl parse_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw PreconditionError("endpoint URL lacks a scheme: " + std::string(url));
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw PreconditionError("unsupported URL scheme '" + std::string(scheme) + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string_view::npos) {
        out.scheme_host_port = std::string(url);
        out.path = "/";
    } else {
        out.scheme_host_port = std::string(url.substr(0, path_start));
        out.path = std::string(url.substr(path_start));
    }
    if (out.scheme_host_port.size() <= scheme_end + 3) throw PreconditionError("endpoint URL lacks a host");
    return out;
}

json chat_request_body(const CompletionRequest& request, const std::string& model) {
    json messages = json::array();
    if (request.role_preamble && !request.role_preamble->empty()) {
        messages.push_back({{"role", "system"}, {"content", *request.role_preamble}});
    }
    messages.push_back({{"role", "user"}, {"content", request.rendered_prompt}});
    json body = {{"messages", std::move(messages)},
                 {"temperature", request.decoding.temperature},
                 {"max_tokens", request.decoding.max_output_tokens}};
    if (!model.empty()) body["model"] = model;
    return body;
}

CompletionResult parse_chat_response(std::string_view body, const std::string& backend_id) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw MalformedResponseError("chat response is not a JSON object", std::string(body));
    }
    try {
        CompletionResult out;
        const auto& choice = doc.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        out.text = content.is_null() ? std::string() : content.get<std::string>();
        if (doc.contains("usage") && doc["usage"].is_object()) {
            out.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
            out.output_tokens = doc["usage"].value("completion_tokens", 0L);
        }
        out.backend_id = backend_id;
        return out;
    } catch (const json::exception& e) {
        throw MalformedResponseError(std::string("chat response lacks expected fields: ") + e.what(), std::string(body));
    }
}

namespace {

HttpReply post_once(const HttpEndpoint& endpoint, const ParsedUrl& url, const std::string& payload) {
    httplib::Client client(url.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    auto res = client.Post(url.path, headers, payload, "application/json");
    HttpReply reply;
    if (!res) {
        reply.error = httplib::to_string(res.error());
        return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
    return reply;
}

bool retryable(const HttpReply& r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

std::chrono::milliseconds backoff(const RetryPolicy& policy, int attempt) {
    thread_local std::mt19937 rng{std::random_device{}()};
    std::uniform_real_distribution<double> jitter(1.0 - policy.jitter, 1.0 + policy.jitter);
    const double base = static_cast<double>(policy.base_delay.count()) * std::pow(2.0, attempt - 1);
    return std::chrono::milliseconds(static_cast<long long>(base * jitter(rng)));
}

}  // namespace

std::string post_json_with_retry(const HttpEndpoint& endpoint, const RetryPolicy& policy, const json& body) {
    const auto url = parse_url(endpoint.url);
    const std::string payload = body.dump();
    const int attempts = std::max(1, policy.max_attempts);
    HttpReply last;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        last = post_once(endpoint, url, payload);
        if (last.status >= 200 && last.status < 300) return last.body;
        if (!retryable(last)) {
            throw BackendError("endpoint " + endpoint.url + " answered HTTP " + std::to_string(last.status) + ": " +
                               last.body.substr(0, 300));
        }
        if (attempt < attempts) std::this_thread::sleep_for(backoff(policy, attempt));
    }
    if (last.status == 0) {
        throw BackendError("endpoint " + endpoint.url + " unreachable after " + std::to_string(attempts) +
                           " attempts: " + last.error);
    }
    throw BackendError("endpoint " + endpoint.url + " failed after " + std::to_string(attempts) + " attempts (HTTP " +
                       std::to_string(last.status) + ")");
}

HttpChatBackend::HttpChatBackend(HttpEndpoint endpoint, RetryPolicy policy)
    : endpoint_(std::move(endpoint)), policy_(policy) {
    parse_url(endpoint_.url);
}

std::string HttpChatBackend::id() const {
    return "http:" + (endpoint_.model.empty() ? endpoint_.url : endpoint_.model);
}

CompletionResult HttpChatBackend::complete(const CompletionRequest& request) const {
    const auto body = post_json_with_retry(endpoint_, policy_, chat_request_body(request, endpoint_.model));
    return parse_chat_response(body, id());
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint, RetryPolicy policy)
    : endpoint_(std::move(endpoint)), policy_(policy) {
    parse_url(endpoint_.url);
}

std::string HttpEmbedder::id() const { return "http-embed:" + (endpoint_.model.empty() ? endpoint_.url : endpoint_.model); }

EmbeddingVector HttpEmbedder::embed(std::string_view text) const {
    if (text::trim(text).empty()) throw PreconditionError("cannot embed empty text");
    json body = {{"input", std::string(text)}};
    if (!endpoint_.model.empty()) body["model"] = endpoint_.model;
    const auto raw = post_json_with_retry(endpoint_, policy_, body);
    json doc = json::parse(raw, nullptr, false);
    if (doc.is_discarded()) throw MalformedResponseError("embedding response is not JSON", raw);
    try {
        EmbeddingVector v;
        v.values = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
        if (v.values.empty()) throw MalformedResponseError("provider returned an empty embedding", raw);
        return v;
    } catch (const json::exception& e) {
        throw MalformedResponseError(std::string("embedding response lacks data[0].embedding: ") + e.what(), raw);
    }
}

}  // namespace malr
