// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/catalog.hpp>
#include <kgq/chat.hpp>
#include <kgq/functions.hpp>
#include <kgq/toolbox.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace kgq
{

/// Rules shipped with the instruction.
const std::vector<std::string>& default_rules();

inline constexpr std::size_t default_max_llm_turns = 30;
inline constexpr std::size_t max_feedback_loops_cap = 2;

struct SessionConfig
{
    FunctionSetId function_set = FunctionSetId::Search;
    FewShotMode few_shot = FewShotMode::None;
    std::size_t shots = example_result_limit;
    std::size_t max_llm_turns = default_max_llm_turns;
    std::size_t max_feedback_loops = max_feedback_loops_cap;
    bool feedback = false;
    bool strict_iri_guard = false;
    std::uint64_t seed = 0;
    std::optional<std::string> kg; // graph for few-shot retrieval; first graph if unset
    std::vector<std::string> rules = default_rules();

    /// Throws Error{InvalidArgument} on out-of-range values.
    void validate() const;
};

/// The generation instruction: graph names and endpoints, the step-by-step
/// method, and the rule list. Deterministic in its inputs.
std::string build_instruction(const Catalog& catalog, const std::vector<std::string>& rules);

enum class OutcomeKind : std::uint8_t
{
    Answered,
    Cancelled,
    Exhausted, // turn budget spent; carries the last successfully executed query
    Aborted,   // chat endpoint unavailable
};

std::string_view to_string(OutcomeKind kind);

struct Outcome
{
    OutcomeKind kind = OutcomeKind::Exhausted;
    std::optional<std::string> kg;
    std::optional<std::string> sparql; // final query, best attempt, or last executed query
    std::string answer;                // Answered only
    std::string explanation;           // Cancelled, Aborted
};

struct FeedbackVerdict
{
    enum class Status : std::uint8_t
    {
        Done,
        Refine,
        Retry,
    };
    Status status = Status::Done;
    std::string message;
};

std::string_view to_string(FeedbackVerdict::Status status);

/// Parses a verdict reply (a JSON object, possibly surrounded by text).
/// Returns nullopt when unparsable or when a non-done verdict has no message.
std::optional<FeedbackVerdict> parse_feedback_verdict(std::string_view reply);

/// One exchange with the feedback model.
struct FeedbackExchange
{
    std::vector<ChatMessage> request;
    std::string reply;
    FeedbackVerdict verdict;
    bool parsed = true;
};

/// Single-exchange review of an answer or cancel call. The conversation holds
/// only the rules and the call's arguments.
FeedbackExchange feedback_round(const std::string& function_name,
                                const nlohmann::json& arguments,
                                const std::vector<std::string>& rules,
                                ChatModel& model,
                                const std::string& session_key,
                                std::size_t round);

struct FunctionEvent
{
    std::string call_id;
    std::string name;
    nlohmann::json arguments;
    FunctionResult result;
    bool injected = false; // few-shot block added by the controller
    bool guarded = false;  // rejected by the strict IRI guard
};

struct SessionTrace
{
    std::string key;
    std::string question;
    std::vector<ChatMessage> messages; // main conversation, in order
    std::vector<FunctionEvent> functions;
    std::vector<FeedbackExchange> feedback;
    Outcome outcome;
    std::size_t turns = 0;
    std::size_t function_calls = 0;
    std::size_t feedback_loops = 0;
    std::set<std::string> seen_iris;
    std::map<std::string, std::size_t> call_counts; // by mnemonic
    std::set<FunctionId> offered;
    std::vector<nlohmann::json> events; // trace records in the order they happened
};

/// Rejects a query that uses IRIs outside `seen_iris` and the rdf, rdfs,
/// xsd and owl vocabularies; otherwise runs it through the toolbox.
FunctionResult guard_execute(const std::set<std::string>& seen_iris,
                             const Toolbox& toolbox,
                             const std::string& kg,
                             const std::string& sparql);

/// Runs one generation from instruction and question to an outcome. Chat
/// failures end in Aborted; configuration problems (missing indices) throw.
SessionTrace run_session(const std::string& question,
                         const SessionConfig& config,
                         const Toolbox& toolbox,
                         ChatModel& model,
                         const std::string& session_key = {});

/// Line-delimited trace: one JSON object per event, no timestamps.
std::string trace_to_jsonl(const SessionTrace& trace);
void write_trace(const SessionTrace& trace, const std::filesystem::path& path);

} // namespace kgq
