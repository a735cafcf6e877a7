// SPDX-License-Identifier: Apache-2.0
#include <kgq/agent.hpp>
#include <kgq/error.hpp>
#include <kgq/text.hpp>

#include <spdlog/spdlog.h>

#include <fstream>
#include <random>
#include <sstream>

namespace kgq
{

using json = nlohmann::json;

const std::vector<std::string>& default_rules()
{
    static const std::vector<std::string> rules {
        "Always find the IRIs of entities and properties with the available functions before using them in a query; never guess IRIs.",
        "Verify every query by executing it before giving it as the final answer.",
        "Prefer SELECT DISTINCT to avoid duplicate rows.",
        "Answer on the knowledge graph the question is about and pass its name as kg.",
    };
    return rules;
}

void SessionConfig::validate() const
{
    if (max_llm_turns < 1)
        fail(ErrorKind::InvalidArgument, "max_llm_turns must be at least 1");
    if (max_feedback_loops > max_feedback_loops_cap)
        fail(ErrorKind::InvalidArgument, "max_feedback_loops must be at most " + std::to_string(max_feedback_loops_cap));
    if (shots < 1)
        fail(ErrorKind::InvalidArgument, "shots must be at least 1");
}

std::string build_instruction(const Catalog& catalog, const std::vector<std::string>& rules)
{
    std::ostringstream out;
    out << "You answer questions by writing SPARQL queries over RDF knowledge graphs. You can search and query the "
           "knowledge graphs with the functions provided to you.\n\n";
    out << "Available knowledge graphs:\n";
    for (const auto& g: catalog.graphs())
        out << "- " << g.name << " at " << g.endpoint << "\n";
    out << "\nApproach:\n"
           "Work step by step. Think before and after each step: before a step, reason about what you know and what you "
           "want to find out next; after a step, reason about what its result means for the question.\n"
           "1. Identify the entities, properties and literals the question refers to and find their IRIs.\n"
           "2. Explore the knowledge graph around them to learn how the relevant facts are modeled.\n"
           "3. Build the SPARQL query incrementally and execute it to check intermediate results.\n"
           "4. When the results answer the question, call answer with the knowledge graph, the query and a short "
           "human-readable answer. If no satisfactory query can be found, call cancel with an explanation and your best "
           "attempt.\n";
    if (!rules.empty())
    {
        out << "\nRules:\n";
        for (std::size_t i = 0; i < rules.size(); ++i)
            out << i + 1 << ". " << rules[i] << "\n";
    }
    return out.str();
}

std::string_view to_string(OutcomeKind kind)
{
    switch (kind)
    {
        case OutcomeKind::Answered: return "answered";
        case OutcomeKind::Cancelled: return "cancelled";
        case OutcomeKind::Exhausted: return "exhausted";
        case OutcomeKind::Aborted: return "aborted";
    }
    return "?";
}

std::string_view to_string(FeedbackVerdict::Status status)
{
    switch (status)
    {
        case FeedbackVerdict::Status::Done: return "done";
        case FeedbackVerdict::Status::Refine: return "refine";
        case FeedbackVerdict::Status::Retry: return "retry";
    }
    return "?";
}

std::optional<FeedbackVerdict> parse_feedback_verdict(std::string_view reply)
{
    auto const open = reply.find('{');
    auto const close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
        return std::nullopt;
    auto doc = json::parse(reply.substr(open, close - open + 1), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("status") || !doc["status"].is_string())
        return std::nullopt;
    FeedbackVerdict v;
    auto const status = doc["status"].get<std::string>();
    if (status == "done")
        v.status = FeedbackVerdict::Status::Done;
    else if (status == "refine")
        v.status = FeedbackVerdict::Status::Refine;
    else if (status == "retry")
        v.status = FeedbackVerdict::Status::Retry;
    else
        return std::nullopt;
    if (doc.contains("feedback") && doc["feedback"].is_string())
        v.message = doc["feedback"].get<std::string>();
    if (v.status != FeedbackVerdict::Status::Done && trim(v.message).empty())
        return std::nullopt;
    return v;
}

namespace
{

std::string feedback_instruction(const std::vector<std::string>& rules)
{
    std::ostringstream out;
    out << "You review the final output of a system that answers questions by writing SPARQL queries over knowledge "
           "graphs. You see its last function call: either answer, with a knowledge graph, a SPARQL query and a "
           "human-readable answer, or cancel, with an explanation and an optional best attempt.\n";
    if (!rules.empty())
    {
        out << "\nThe system must follow these rules:\n";
        for (std::size_t i = 0; i < rules.size(); ++i)
            out << i + 1 << ". " << rules[i] << "\n";
    }
    out << "\nReply with a JSON object {\"status\": \"done\" | \"refine\" | \"retry\", \"feedback\": \"...\"}. Use done "
           "if the output is acceptable, refine if it is mostly right but should be improved, and retry if the approach "
           "is wrong. For refine and retry, feedback says what to change.";
    return out.str();
}

json calls_json(const std::vector<ToolCall>& calls)
{
    json out = json::array();
    for (const auto& c: calls)
        out.push_back({ { "id", c.id }, { "name", c.name }, { "arguments", c.arguments } });
    return out;
}

json messages_json(const std::vector<ChatMessage>& messages)
{
    json out = json::array();
    for (const auto& m: messages)
    {
        json entry { { "role", to_string(m.role) }, { "content", m.content } };
        if (!m.calls.empty())
            entry["calls"] = calls_json(m.calls);
        if (!m.call_id.empty())
            entry["call_id"] = m.call_id;
        out.push_back(std::move(entry));
    }
    return out;
}

std::optional<std::string> string_field(const json& args, const char* name)
{
    if (!args.is_object())
        return std::nullopt;
    auto it = args.find(name);
    if (it == args.end() || !it->is_string() || trim(it->get_ref<const std::string&>()).empty())
        return std::nullopt;
    return it->get<std::string>();
}

class SessionRunner
{
  public:
    SessionRunner(const std::string& question, const SessionConfig& config, const Toolbox& toolbox, ChatModel& model, const std::string& key):
        _config(config), _toolbox(toolbox), _model(model), _rng(config.seed)
    {
        _trace.key = key.empty() ? question : key;
        _trace.question = question;
        _trace.offered = function_set_members(config.function_set, config.few_shot);
        _tools = tool_schemas(_trace.offered);
    }

    SessionTrace run()
    {
        std::vector<std::string> offered_names;
        for (auto id: _trace.offered)
            offered_names.push_back(function_spec(id).name);
        _trace.events.push_back({ { "event", "session" },
                                  { "key", _trace.key },
                                  { "question", _trace.question },
                                  { "function_set", to_string(_config.function_set) },
                                  { "few_shot", to_string(_config.few_shot) },
                                  { "feedback", _config.feedback },
                                  { "strict_iri_guard", _config.strict_iri_guard },
                                  { "seed", _config.seed },
                                  { "max_llm_turns", _config.max_llm_turns },
                                  { "offered", offered_names } });

        auto const instruction = build_instruction(_toolbox.catalog(), _config.rules);
        for (const auto& g: _toolbox.catalog().graphs())
            if (looks_like_absolute_iri(g.endpoint))
                _trace.seen_iris.insert(g.endpoint);
        append({ Role::System, instruction, {}, {}, {} });
        append({ Role::User, _trace.question, {}, {}, {} });
        inject_few_shot();

        while (_trace.turns < _config.max_llm_turns)
        {
            ChatRequest request { _trace.messages, _tools, ChatPurpose::Generate, _trace.key, _trace.turns, _trace.feedback.size() };
            ChatReply reply;
            try
            {
                reply = _model.complete(request);
            }
            catch (const Error& e)
            {
                if (e.kind() != ErrorKind::Transport)
                    throw;
                return finish(Outcome { OutcomeKind::Aborted, std::nullopt, std::nullopt, {}, e.what() });
            }
            ++_trace.turns;
            for (std::size_t i = 0; i < reply.calls.size(); ++i)
                if (reply.calls[i].id.empty())
                    reply.calls[i].id = "call-" + std::to_string(_trace.turns - 1) + "-" + std::to_string(i);
            append({ Role::Model, reply.content, reply.calls, {}, {} });

            if (handle_calls(reply.calls))
                return std::move(_trace);
        }
        Outcome exhausted { OutcomeKind::Exhausted, std::nullopt, std::nullopt, {}, "model turn budget of " + std::to_string(_config.max_llm_turns) + " exhausted" };
        if (_last_executed)
        {
            exhausted.kg = _last_executed->first;
            exhausted.sparql = _last_executed->second;
        }
        return finish(std::move(exhausted));
    }

  private:
    void append(ChatMessage message)
    {
        json event { { "event", "message" }, { "role", to_string(message.role) }, { "content", message.content } };
        if (message.role == Role::Model)
        {
            event["turn"] = _trace.turns;
            if (!message.calls.empty())
                event["calls"] = calls_json(message.calls);
        }
        if (message.role != Role::Function)
            _trace.events.push_back(std::move(event));
        _trace.messages.push_back(std::move(message));
    }

    void record_function(const ToolCall& call, FunctionResult result, bool injected, bool guarded)
    {
        auto const id = function_by_name(call.name);
        _trace.seen_iris.insert(result.mentioned_iris.begin(), result.mentioned_iris.end());
        if (!injected)
            ++_trace.function_calls;
        if (id)
            ++_trace.call_counts[function_spec(*id).mnemonic];
        _trace.events.push_back({ { "event", "function" },
                                  { "call_id", call.id },
                                  { "name", call.name },
                                  { "arguments", call.arguments },
                                  { "result", result.rendered },
                                  { "is_error", result.is_error },
                                  { "mentioned_iris", result.mentioned_iris },
                                  { "injected", injected },
                                  { "guarded", guarded } });
        append({ Role::Function, result.rendered, {}, call.id, call.name });
        _trace.functions.push_back(FunctionEvent { call.id, call.name, call.arguments, std::move(result), injected, guarded });
    }

    void inject_few_shot()
    {
        if (_config.few_shot == FewShotMode::None)
            return;
        const auto& graphs = _toolbox.catalog().graphs();
        auto const kg = _config.kg.value_or(graphs.empty() ? std::string() : graphs.front().name);
        auto const* res = _toolbox.resources(kg);
        if (res == nullptr || !res->examples || res->examples->size() == 0)
        {
            spdlog::warn("few-shot mode '{}' requested but graph '{}' has no examples", to_string(_config.few_shot), kg);
            return;
        }
        ToolCall call;
        call.id = "few-shot";
        FunctionResult result;
        if (_config.few_shot == FewShotMode::Similar)
        {
            call.name = function_spec(FunctionId::FindSimilarExamples).name;
            call.arguments = json { { "kg", kg }, { "question", _trace.question } };
            result = _toolbox.find_similar_examples(kg, _trace.question, _config.shots);
        }
        else
        {
            call.name = function_spec(FunctionId::FindExamples).name;
            call.arguments = json { { "kg", kg } };
            result = _toolbox.find_examples(kg, _rng, _config.shots);
        }
        append({ Role::Model, {}, { call }, {}, {} });
        record_function(call, std::move(result), true, false);
    }

    // Returns true once the session has reached its final outcome.
    bool handle_calls(const std::vector<ToolCall>& calls)
    {
        bool finished = false;
        bool resumed = false;
        for (const auto& call: calls)
        {
            if (finished || resumed)
            {
                record_function(call, FunctionResult::error("Error: not executed because " + std::string(finished ? "the session ended" : "feedback was given") + " before this call"), false, false);
                continue;
            }
            auto const id = function_by_name(call.name);
            if (!id || !_trace.offered.contains(*id))
            {
                std::vector<std::string> names;
                for (auto f: _trace.offered)
                    names.push_back(function_spec(f).name);
                record_function(call, FunctionResult::error("Error: function '" + call.name + "' is not available; available functions: " + join(names, ", ")), false, false);
                continue;
            }
            if (!call.arguments.is_object())
            {
                record_function(call, FunctionResult::error("Error: arguments of " + call.name + " are not a valid JSON object"), false, false);
                continue;
            }
            if (*id == FunctionId::Answer || *id == FunctionId::Cancel)
            {
                auto outcome = terminal_outcome(*id, call);
                if (!outcome)
                    continue;
                if (_config.feedback && _trace.feedback_loops < _config.max_feedback_loops)
                {
                    auto exchange = feedback_round(call.name, call.arguments, _config.rules, _model, _trace.key, _trace.feedback.size());
                    auto const verdict = exchange.verdict;
                    _trace.events.push_back({ { "event", "feedback" },
                                              { "round", _trace.feedback.size() + 1 },
                                              { "request", messages_json(exchange.request) },
                                              { "reply", exchange.reply },
                                              { "parsed", exchange.parsed },
                                              { "status", to_string(verdict.status) },
                                              { "message", verdict.message } });
                    _trace.feedback.push_back(std::move(exchange));
                    if (verdict.status != FeedbackVerdict::Status::Done)
                    {
                        ++_trace.feedback_loops;
                        FunctionResult fb;
                        fb.rendered = "Feedback (" + std::string(to_string(verdict.status)) + "): " + verdict.message +
                                      "\nContinue working on the question and call answer or cancel again when done.";
                        record_function(call, std::move(fb), false, false);
                        resumed = true;
                        continue;
                    }
                }
                FunctionResult done;
                done.rendered = "Done.";
                record_function(call, std::move(done), false, false);
                finish(std::move(*outcome));
                finished = true;
                continue;
            }

            FunctionResult result;
            bool guarded = false;
            if (*id == FunctionId::Execute && _config.strict_iri_guard)
            {
                auto const kg = string_field(call.arguments, "kg");
                auto const sparql = string_field(call.arguments, "sparql");
                if (kg && sparql)
                {
                    result = guard_execute(_trace.seen_iris, _toolbox, *kg, *sparql);
                    guarded = result.structured.is_object() && result.structured.value("guard_rejected", false);
                }
                else
                    result = _toolbox.invoke(*id, call.arguments, _rng);
            }
            else
                result = _toolbox.invoke(*id, call.arguments, _rng);

            if (*id == FunctionId::Execute && !result.is_error)
                _last_executed = { *string_field(call.arguments, "kg"), *string_field(call.arguments, "sparql") };
            record_function(call, std::move(result), false, guarded);
        }
        return finished;
    }

    // Validates an answer or cancel call; invalid calls get an error reply.
    std::optional<Outcome> terminal_outcome(FunctionId id, const ToolCall& call)
    {
        auto const reject = [&](std::string message) {
            record_function(call, FunctionResult::error("Error: " + message), false, false);
            return std::nullopt;
        };
        if (id == FunctionId::Answer)
        {
            auto kg = string_field(call.arguments, "kg");
            auto sparql = string_field(call.arguments, "sparql");
            auto answer = string_field(call.arguments, "answer");
            if (!kg || !sparql || !answer)
                return reject("answer requires the arguments kg, sparql and answer");
            if (_toolbox.catalog().find(*kg) == nullptr)
                return reject("unknown knowledge graph '" + *kg + "'");
            return Outcome { OutcomeKind::Answered, kg, sparql, *answer, {} };
        }
        auto expl = string_field(call.arguments, "expl");
        if (!expl)
            return reject("cancel requires the argument expl");
        Outcome outcome { OutcomeKind::Cancelled, std::nullopt, std::nullopt, {}, *expl };
        if (auto it = call.arguments.find("best_attempt"); it != call.arguments.end() && it->is_object())
        {
            outcome.sparql = string_field(*it, "sparql");
            outcome.kg = string_field(*it, "kg");
            if (outcome.sparql && !outcome.kg && !_toolbox.catalog().graphs().empty())
                outcome.kg = _toolbox.catalog().graphs().front().name;
        }
        return outcome;
    }

    SessionTrace finish(Outcome outcome)
    {
        _trace.outcome = std::move(outcome);
        json event { { "event", "outcome" },
                     { "kind", to_string(_trace.outcome.kind) },
                     { "turns", _trace.turns },
                     { "function_calls", _trace.function_calls },
                     { "feedback_loops", _trace.feedback_loops },
                     { "call_counts", _trace.call_counts } };
        if (_trace.outcome.kg)
            event["kg"] = *_trace.outcome.kg;
        if (_trace.outcome.sparql)
            event["sparql"] = *_trace.outcome.sparql;
        if (!_trace.outcome.answer.empty())
            event["answer"] = _trace.outcome.answer;
        if (!_trace.outcome.explanation.empty())
            event["explanation"] = _trace.outcome.explanation;
        _trace.events.push_back(std::move(event));
        return _trace;
    }

    const SessionConfig& _config;
    const Toolbox& _toolbox;
    ChatModel& _model;
    std::mt19937_64 _rng;
    json _tools;
    SessionTrace _trace;
    std::optional<std::pair<std::string, std::string>> _last_executed;
};

} // namespace

FeedbackExchange feedback_round(const std::string& function_name,
                                const json& arguments,
                                const std::vector<std::string>& rules,
                                ChatModel& model,
                                const std::string& session_key,
                                std::size_t round)
{
    FeedbackExchange exchange;
    exchange.request.push_back({ Role::System, feedback_instruction(rules), {}, {}, {} });
    exchange.request.push_back({ Role::User, "Function call: " + function_name + "\nArguments:\n" + arguments.dump(2), {}, {}, {} });
    ChatRequest request { exchange.request, json::array(), ChatPurpose::Feedback, session_key, 0, round };
    auto reply = model.complete(request);
    exchange.reply = reply.content;
    if (auto verdict = parse_feedback_verdict(reply.content))
        exchange.verdict = std::move(*verdict);
    else
    {
        spdlog::warn("unparsable feedback verdict treated as done: {}", reply.content.substr(0, 200));
        exchange.parsed = false;
    }
    return exchange;
}

FunctionResult guard_execute(const std::set<std::string>& seen_iris, const Toolbox& toolbox, const std::string& kg, const std::string& sparql)
{
    auto const* g = toolbox.catalog().find(kg);
    if (g == nullptr)
        return toolbox.execute(kg, sparql);
    std::vector<std::string> offending;
    for (const auto& iri: extract_query_iris(sparql, g->prefixes))
        if (!seen_iris.contains(iri) && !is_well_known_vocabulary(iri))
            offending.push_back(g->prefixes.shorten(iri));
    if (offending.empty())
        return toolbox.execute(kg, sparql);
    auto r = FunctionResult::error("Error: the query uses IRIs that did not appear in any previous function result: " + join(offending, ", ") +
                                   ". Find them with the available functions first.");
    r.structured = json { { "guard_rejected", true }, { "iris", offending } };
    return r;
}

SessionTrace run_session(const std::string& question, const SessionConfig& config, const Toolbox& toolbox, ChatModel& model, const std::string& session_key)
{
    if (trim(question).empty())
        fail(ErrorKind::InvalidArgument, "question must not be empty");
    config.validate();
    return SessionRunner(question, config, toolbox, model, session_key).run();
}

std::string trace_to_jsonl(const SessionTrace& trace)
{
    std::string out;
    for (const auto& e: trace.events)
        out += e.dump() + "\n";
    return out;
}

void write_trace(const SessionTrace& trace, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorKind::Input, "cannot write trace '" + path.string() + "'");
    out << trace_to_jsonl(trace);
}

} // namespace kgq
