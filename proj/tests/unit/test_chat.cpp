// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "test_support.hpp"

#include <kgq/chat.hpp>
#include <kgq/error.hpp>

#include <httplib.h>

#include <atomic>
#include <thread>

using namespace kgq;
using namespace kgq::testing;
using json = nlohmann::json;

TEST_CASE("request body in the chat-completions format")
{
    ChatRequest req;
    req.messages.push_back({ Role::System, "sys", {}, {}, {} });
    req.messages.push_back({ Role::User, "question", {}, {}, {} });
    req.messages.push_back({ Role::Model, "", { ToolCall { "c1", "search_entity", json { { "kg", "dblp" }, { "query", "ICLR" } } } }, {}, {} });
    req.messages.push_back({ Role::Function, "1. ICLR (conf:iclr)", {}, "c1", "search_entity" });
    req.tools = json::array({ json { { "type", "function" } } });
    auto const body = chat_request_body("m", req);
    CHECK(body.at("model") == "m");
    const auto& msgs = body.at("messages");
    REQUIRE(msgs.size() == 4);
    CHECK(msgs[1] == json { { "role", "user" }, { "content", "question" } });
    CHECK(msgs[2].at("role") == "assistant");
    CHECK(msgs[2].at("content").is_null());
    CHECK(msgs[2].at("tool_calls")[0].at("function").at("arguments") == R"({"kg":"dblp","query":"ICLR"})");
    CHECK(msgs[3] == json { { "role", "tool" }, { "tool_call_id", "c1" }, { "content", "1. ICLR (conf:iclr)" } });
    CHECK(body.at("tools").size() == 1);
}

TEST_CASE("response parsing")
{
    auto const reply = parse_chat_response(R"({"choices":[{"message":{"role":"assistant","content":"thinking",
        "tool_calls":[{"id":"a","type":"function","function":{"name":"execute","arguments":"{\"kg\":\"dblp\",\"sparql\":\"ASK {}\"}"}},
                      {"id":"b","type":"function","function":{"name":"cancel","arguments":"not json"}}]}}]})");
    CHECK(reply.content == "thinking");
    REQUIRE(reply.calls.size() == 2);
    CHECK(reply.calls[0].arguments.at("sparql") == "ASK {}");
    CHECK(reply.calls[1].arguments == "not json");
    CHECK_THROWS_AS((void)parse_chat_response("{}"), Error);
}

TEST_CASE("scripted model replays turns and feedback")
{
    ScriptedChatModel model(json::parse(R"({
        "sessions": {"q1": {"turns": [{"content": "a", "calls": [{"name": "execute", "arguments": {"kg": "g"}}]}],
                            "feedback": [{"status": "refine", "feedback": "fix it"}]}},
        "default": {"turns": [{"content": "default turn"}]}
    })"));
    ChatRequest req;
    req.session_key = "q1";
    auto const first = model.complete(req);
    CHECK(first.content == "a");
    REQUIRE(first.calls.size() == 1);
    CHECK(first.calls[0].id == "call-0-0");
    req.turn = 1;
    CHECK(model.complete(req).content == "I need to think about this further.");

    req.purpose = ChatPurpose::Feedback;
    req.feedback_round = 0;
    CHECK(json::parse(model.complete(req).content).at("status") == "refine");
    req.feedback_round = 1;
    CHECK(json::parse(model.complete(req).content).at("status") == "done");

    ChatRequest other;
    other.session_key = "unknown";
    CHECK(model.complete(other).content == "default turn");

    CHECK_THROWS_AS(ScriptedChatModel(json::parse(R"({"bogus": 1})")), Error);
    CHECK_THROWS_AS((void)ScriptedChatModel::load(fixture("missing.json")), Error);
}

TEST_CASE("model configuration")
{
    ::unsetenv("KGQ_CHAT_URL");
    ::unsetenv("KGQ_CHAT_MODEL");
    try
    {
        (void)make_chat_model(std::nullopt);
        FAIL("expected a configuration error");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::Config);
    }
    auto const m = make_chat_model(ChatConfig { "http://127.0.0.1:1/v1/chat/completions", "some-model", "" });
    CHECK(m->id() == "some-model");
}

TEST_CASE("HTTP model retries server errors and gives up with a transport error")
{
    httplib::Server server;
    std::atomic<int> calls { 0 };
    std::string auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        auto const n = ++calls;
        if (req.body.find("always-fail") != std::string::npos || n == 1)
        {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"hello"}}]})", "application/json");
    });
    auto const port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    auto const url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";

    HttpChatModel model(url, "m", "secret", 3, std::chrono::seconds(5), std::chrono::milliseconds(1));
    ChatRequest req;
    req.messages.push_back({ Role::User, "hi", {}, {}, {} });
    CHECK(model.complete(req).content == "hello");
    CHECK(calls == 2);
    CHECK(auth == "Bearer secret");

    calls = 0;
    req.messages[0].content = "always-fail";
    try
    {
        (void)model.complete(req);
        FAIL("expected a transport error");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::Transport);
    }
    CHECK(calls == 3);
    server.stop();
    worker.join();
}
