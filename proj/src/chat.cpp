// SPDX-License-Identifier: Apache-2.0
#include <kgq/chat.hpp>
#include <kgq/error.hpp>
#include <kgq/http.hpp>

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <thread>

namespace kgq
{

using json = nlohmann::json;

std::string_view to_string(Role role)
{
    switch (role)
    {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Model: return "model";
        case Role::Function: return "function";
    }
    return "?";
}

json chat_request_body(const std::string& model, const ChatRequest& request)
{
    json messages = json::array();
    for (const auto& m: request.messages)
    {
        switch (m.role)
        {
            case Role::System: messages.push_back({ { "role", "system" }, { "content", m.content } }); break;
            case Role::User: messages.push_back({ { "role", "user" }, { "content", m.content } }); break;
            case Role::Model:
            {
                json msg { { "role", "assistant" }, { "content", m.content.empty() ? json(nullptr) : json(m.content) } };
                if (!m.calls.empty())
                {
                    json calls = json::array();
                    for (const auto& c: m.calls)
                        calls.push_back({ { "id", c.id },
                                          { "type", "function" },
                                          { "function", { { "name", c.name }, { "arguments", c.arguments.is_string() ? c.arguments.get<std::string>() : c.arguments.dump() } } } });
                    msg["tool_calls"] = std::move(calls);
                }
                messages.push_back(std::move(msg));
                break;
            }
            case Role::Function: messages.push_back({ { "role", "tool" }, { "tool_call_id", m.call_id }, { "content", m.content } }); break;
        }
    }
    json body { { "model", model }, { "messages", std::move(messages) } };
    if (!request.tools.empty())
        body["tools"] = request.tools;
    return body;
}

ChatReply parse_chat_response(std::string_view body)
{
    try
    {
        auto doc = json::parse(body);
        const auto& message = doc.at("choices").at(0).at("message");
        ChatReply reply;
        if (message.contains("content") && message["content"].is_string())
            reply.content = message["content"].get<std::string>();
        if (message.contains("tool_calls") && message["tool_calls"].is_array())
        {
            for (const auto& c: message["tool_calls"])
            {
                ToolCall call;
                call.id = c.value("id", "");
                call.name = c.at("function").at("name").get<std::string>();
                const auto& raw = c.at("function").value("arguments", json("{}"));
                if (raw.is_string())
                {
                    auto parsed = json::parse(raw.get<std::string>(), nullptr, false);
                    call.arguments = parsed.is_discarded() ? raw : parsed;
                }
                else
                    call.arguments = raw;
                reply.calls.push_back(std::move(call));
            }
        }
        return reply;
    }
    catch (const json::exception& e)
    {
        fail(ErrorKind::Transport, std::string("malformed chat response: ") + e.what());
    }
}

HttpChatModel::HttpChatModel(std::string url,
                             std::string model,
                             std::string api_key,
                             int max_attempts,
                             std::chrono::milliseconds timeout,
                             std::chrono::milliseconds backoff):
    _url(std::move(url)),
    _model(std::move(model)),
    _api_key(std::move(api_key)),
    _max_attempts(std::max(1, max_attempts)),
    _timeout(timeout),
    _backoff(backoff)
{
}

ChatReply HttpChatModel::complete(const ChatRequest& request)
{
    HttpRequest http;
    http.url = _url;
    http.body = chat_request_body(_model, request).dump();
    http.content_type = "application/json";
    http.timeout = _timeout;
    if (!_api_key.empty())
        http.headers.emplace_back("Authorization", "Bearer " + _api_key);

    std::string last_error;
    for (int attempt = 0; attempt < _max_attempts; ++attempt)
    {
        if (attempt > 0)
            std::this_thread::sleep_for(_backoff * (1 << (attempt - 1)));
        HttpResponse res;
        try
        {
            res = http_post(http);
        }
        catch (const TimeoutError& e)
        {
            last_error = e.message;
            continue;
        }
        catch (const Error& e)
        {
            last_error = e.what();
            continue;
        }
        if (res.status == 429 || res.status >= 500)
        {
            last_error = "HTTP " + std::to_string(res.status);
            spdlog::warn("chat endpoint returned {}, attempt {}/{}", res.status, attempt + 1, _max_attempts);
            continue;
        }
        if (res.status >= 400)
            fail(ErrorKind::Transport, "chat endpoint returned HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 500));
        return parse_chat_response(res.body);
    }
    fail(ErrorKind::Transport, "chat endpoint failed after " + std::to_string(_max_attempts) + " attempts: " + last_error);
}

ScriptedChatModel::ScriptedChatModel(json script): _script(std::move(script))
{
    if (!_script.is_object())
        fail(ErrorKind::Input, "model script must be a JSON object");
    for (const auto& [key, value]: _script.items())
        if (key != "sessions" && key != "default")
            fail(ErrorKind::Input, "model script: unknown key '" + key + "'");
}

ScriptedChatModel ScriptedChatModel::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::Input, "cannot read model script '" + path.string() + "'");
    try
    {
        return ScriptedChatModel(json::parse(in));
    }
    catch (const json::exception& e)
    {
        fail(ErrorKind::Input, "model script '" + path.string() + "': " + e.what());
    }
}

const json* ScriptedChatModel::script_for(const std::string& key) const
{
    if (auto it = _script.find("sessions"); it != _script.end() && it->contains(key))
        return &(*it)[key];
    if (auto it = _script.find("default"); it != _script.end())
        return &*it;
    return nullptr;
}

ChatReply ScriptedChatModel::complete(const ChatRequest& request)
{
    const auto* script = script_for(request.session_key);
    if (request.purpose == ChatPurpose::Feedback)
    {
        const json* entries = script != nullptr && script->contains("feedback") ? &(*script)["feedback"] : nullptr;
        if (entries == nullptr || request.feedback_round >= entries->size())
            return ChatReply { R"({"status": "done", "feedback": ""})", {} };
        const auto& entry = (*entries)[request.feedback_round];
        return ChatReply { entry.is_string() ? entry.get<std::string>() : entry.dump(), {} };
    }

    const json* turns = script != nullptr && script->contains("turns") ? &(*script)["turns"] : nullptr;
    if (turns == nullptr || request.turn >= turns->size())
        return ChatReply { "I need to think about this further.", {} };
    const auto& turn = (*turns)[request.turn];
    ChatReply reply;
    reply.content = turn.value("content", "");
    if (turn.contains("calls"))
    {
        std::size_t i = 0;
        for (const auto& c: turn["calls"])
        {
            ToolCall call;
            call.id = "call-" + std::to_string(request.turn) + "-" + std::to_string(i++);
            call.name = c.at("name").get<std::string>();
            call.arguments = c.value("arguments", json::object());
            reply.calls.push_back(std::move(call));
        }
    }
    return reply;
}

std::unique_ptr<ChatModel> make_chat_model(const std::optional<ChatConfig>& config)
{
    auto const env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v == nullptr ? std::string() : std::string(v);
    };
    std::string url = config ? config->url : std::string();
    std::string model = config ? config->model : std::string();
    if (auto v = env("KGQ_CHAT_URL"); !v.empty())
        url = v;
    if (auto v = env("KGQ_CHAT_MODEL"); !v.empty())
        model = v;
    if (url.empty() || model.empty())
        fail(ErrorKind::Config, "no chat model configured (set chat.url and chat.model or KGQ_CHAT_URL and KGQ_CHAT_MODEL)");
    std::string key;
    if (config && !config->api_key_env.empty())
        key = env(config->api_key_env.c_str());
    return std::make_unique<HttpChatModel>(url, model, key);
}

} // namespace kgq
