// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/catalog.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kgq
{

struct ToolCall
{
    std::string id;
    std::string name;
    nlohmann::json arguments; // object, or the raw string if it was not valid JSON
};

enum class Role : std::uint8_t
{
    System,
    User,
    Model,
    Function,
};

std::string_view to_string(Role role);

struct ChatMessage
{
    Role role = Role::User;
    std::string content;
    std::vector<ToolCall> calls; // model messages only
    std::string call_id;         // function messages only
    std::string name;            // function messages only
};

enum class ChatPurpose : std::uint8_t
{
    Generate,
    Feedback,
};

struct ChatRequest
{
    std::vector<ChatMessage> messages;
    nlohmann::json tools = nlohmann::json::array();
    ChatPurpose purpose = ChatPurpose::Generate;
    std::string session_key;       // sample id or question
    std::size_t turn = 0;          // model turns already taken in this session
    std::size_t feedback_round = 0; // feedback exchanges already held
};

struct ChatReply
{
    std::string content;
    std::vector<ToolCall> calls;
};

class ChatModel
{
  public:
    virtual ~ChatModel() = default;

    /// Throws Error{Transport} when the endpoint stays unavailable.
    virtual ChatReply complete(const ChatRequest& request) = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

/// Chat-completions endpoint with tool calling. Retries transport failures,
/// 429 and 5xx with exponential backoff.
class HttpChatModel final: public ChatModel
{
  public:
    HttpChatModel(std::string url,
                  std::string model,
                  std::string api_key,
                  int max_attempts = 3,
                  std::chrono::milliseconds timeout = std::chrono::minutes(5),
                  std::chrono::milliseconds backoff = std::chrono::seconds(1));

    ChatReply complete(const ChatRequest& request) override;
    [[nodiscard]] std::string id() const override { return _model; }

  private:
    std::string _url;
    std::string _model;
    std::string _api_key;
    int _max_attempts;
    std::chrono::milliseconds _timeout;
    std::chrono::milliseconds _backoff;
};

/// Wire format of one request body, exposed for tests.
nlohmann::json chat_request_body(const std::string& model, const ChatRequest& request);

/// Parses `choices[0].message` of a response body. Throws Error{Transport}.
ChatReply parse_chat_response(std::string_view body);

/// Deterministic model replaying a script. Replies depend only on the
/// request (session key, turn, feedback round), so one instance can serve
/// parallel sessions and repeated runs.
///
/// Script document:
///   {"sessions": {"<key>": {"turns": [...], "feedback": [...]}},
///    "default": {"turns": [...], "feedback": [...]}}
/// A turn is {"content"?: str, "calls"?: [{"name", "arguments"}]}; a feedback
/// entry is {"status", "feedback"?} or a raw string reply. Exhausted turn
/// lists yield plain reasoning text, exhausted feedback lists yield done.
class ScriptedChatModel final: public ChatModel
{
  public:
    explicit ScriptedChatModel(nlohmann::json script);
    static ScriptedChatModel load(const std::filesystem::path& path);

    ChatReply complete(const ChatRequest& request) override;
    [[nodiscard]] std::string id() const override { return "scripted"; }

  private:
    const nlohmann::json* script_for(const std::string& key) const;
    nlohmann::json _script;
};

/// Builds the configured HTTP model: the URL and model from the catalog,
/// overridable with KGQ_CHAT_URL / KGQ_CHAT_MODEL, key from the named env var.
std::unique_ptr<ChatModel> make_chat_model(const std::optional<ChatConfig>& config);

} // namespace kgq
