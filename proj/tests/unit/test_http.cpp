#include "malr/errors.hpp"
#include "malr/http_backend.hpp"

#include <httplib.h>
#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace malr;
using nlohmann::json;

namespace {

class LocalServer {
public:
    LocalServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

RetryPolicy quick(int attempts = 3) { return {attempts, std::chrono::milliseconds(1), 0.0}; }

HttpEndpoint endpoint(const std::string& url) { return {url, "m1", "", std::chrono::milliseconds(2000)}; }

std::string chat_reply(const std::string& text) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}}
        .dump();
}

}  // namespace

TEST(Url, SplitsHostAndPath) {
    const auto u = parse_url("http://localhost:8080/v1/chat/completions");
    EXPECT_EQ(u.scheme_host_port, "http://localhost:8080");
    EXPECT_EQ(u.path, "/v1/chat/completions");
    EXPECT_EQ(parse_url("http://h").path, "/");
    EXPECT_THROW(parse_url("localhost:8080/x"), PreconditionError);
    EXPECT_THROW(parse_url("ftp://h/x"), PreconditionError);
    EXPECT_THROW(parse_url("http:///x"), PreconditionError);
}

TEST(Wire, RequestBody) {
    CompletionRequest r{"hello", std::string("be terse"), {}};
    r.decoding.temperature = 0.5;
    r.decoding.max_output_tokens = 64;
    const auto body = chat_request_body(r, "m1");
    EXPECT_EQ(body["model"], "m1");
    ASSERT_EQ(body["messages"].size(), 2u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["content"], "hello");
    EXPECT_EQ(body["temperature"], 0.5);
    EXPECT_EQ(body["max_tokens"], 64);
    EXPECT_FALSE(chat_request_body({"x", std::nullopt, {}}, "").contains("model"));
}

TEST(Wire, ResponseParsing) {
    const auto r = parse_chat_response(chat_reply("ANSWER: YES"), "http:m1");
    EXPECT_EQ(r.text, "ANSWER: YES");
    EXPECT_EQ(r.prompt_tokens, 7);
    EXPECT_EQ(r.output_tokens, 3);
    try {
        parse_chat_response(R"({"choices":[]})", "x");
        FAIL();
    } catch (const MalformedResponseError& e) {
        EXPECT_EQ(e.raw_payload(), R"({"choices":[]})");
    }
    EXPECT_THROW(parse_chat_response("not json", "x"), MalformedResponseError);
}

TEST(HttpChat, RoundTripSendsModelAndKey) {
    LocalServer s;
    std::string seen_auth, seen_body;
    s.server().Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(chat_reply("ok"), "application/json");
    });
    auto ep = endpoint(s.url("/v1/chat"));
    ep.api_key = "k-123";
    const HttpChatBackend backend(ep, quick());
    const auto r = backend.complete({"prompt", std::nullopt, {}});
    EXPECT_EQ(r.text, "ok");
    EXPECT_EQ(r.backend_id, "http:m1");
    EXPECT_EQ(seen_auth, "Bearer k-123");
    EXPECT_EQ(json::parse(seen_body)["messages"][0]["content"], "prompt");
}

TEST(HttpChat, RetriesServerErrorsThenSucceeds) {
    LocalServer s;
    std::atomic<int> hits{0};
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 503;
            return;
        }
        res.set_content(chat_reply("late"), "application/json");
    });
    const HttpChatBackend backend(endpoint(s.url("/c")), quick(3));
    EXPECT_EQ(backend.complete({"p", std::nullopt, {}}).text, "late");
    EXPECT_EQ(hits.load(), 3);
}

TEST(HttpChat, GivesUpAfterAttempts) {
    LocalServer s;
    std::atomic<int> hits{0};
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    const HttpChatBackend backend(endpoint(s.url("/c")), quick(2));
    EXPECT_THROW(backend.complete({"p", std::nullopt, {}}), BackendError);
    EXPECT_EQ(hits.load(), 2);
}

TEST(HttpChat, ClientErrorIsNotRetried) {
    LocalServer s;
    std::atomic<int> hits{0};
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    const HttpChatBackend backend(endpoint(s.url("/c")), quick(3));
    try {
        backend.complete({"p", std::nullopt, {}});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("HTTP 401"), std::string::npos);
    }
    EXPECT_EQ(hits.load(), 1);
}

TEST(HttpChat, MalformedPayload) {
    LocalServer s;
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"result":"??"})", "application/json");
    });
    const HttpChatBackend backend(endpoint(s.url("/c")), quick());
    try {
        backend.complete({"p", std::nullopt, {}});
        FAIL();
    } catch (const MalformedResponseError& e) {
        EXPECT_EQ(e.raw_payload(), R"({"result":"??"})");
    }
}

TEST(HttpChat, UnreachableEndpoint) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    auto ep = endpoint("http://127.0.0.1:" + std::to_string(port) + "/c");
    ep.timeout = std::chrono::milliseconds(300);
    const HttpChatBackend backend(ep, quick(2));
    try {
        backend.complete({"p", std::nullopt, {}});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("unreachable after 2"), std::string::npos) << e.what();
    }
}

TEST(HttpEmbedder, ReadsFirstVector) {
    LocalServer s;
    s.server().Post("/e", [&](const httplib::Request& req, httplib::Response& res) {
        const auto in = json::parse(req.body);
        if (in["input"] == "bad") {
            res.set_content(R"({"data":[{"embedding":[]}]})", "application/json");
            return;
        }
        res.set_content(R"({"data":[{"embedding":[0.5,1.5]}]})", "application/json");
    });
    const HttpEmbedder e(endpoint(s.url("/e")), quick());
    EXPECT_EQ(e.embed("x").values, (std::vector<double>{0.5, 1.5}));
    EXPECT_THROW(e.embed("bad"), MalformedResponseError);
    EXPECT_THROW(e.embed("  "), PreconditionError);
}
