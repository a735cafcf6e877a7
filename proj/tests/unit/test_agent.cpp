// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "scenarios.hpp"
#include "test_support.hpp"

#include <kgq/agent.hpp>
#include <kgq/error.hpp>

#include <random>

using namespace kgq;
using namespace kgq::testing;
using json = nlohmann::json;

namespace
{

SessionTrace run_script(const std::string& script, const std::string& question, const SessionConfig& config, const Toolbox& box)
{
    auto model = ScriptedChatModel::load(fixture("dblp/scripts/" + script));
    return run_session(question, config, box, model);
}

json one_turn(json calls)
{
    return json { { "default", { { "turns", json::array({ json { { "content", "" }, { "calls", std::move(calls) } } }) } } } };
}

class FailingModel final: public ChatModel
{
  public:
    ChatReply complete(const ChatRequest&) override { fail(ErrorKind::Transport, "chat endpoint unreachable"); }
    [[nodiscard]] std::string id() const override { return "failing"; }
};

/// Random calls each turn, with random feedback verdicts.
class ChaosModel final: public ChatModel
{
  public:
    explicit ChaosModel(std::uint64_t seed): _rng(seed) {}

    ChatReply complete(const ChatRequest& request) override
    {
        std::uniform_int_distribution<int> pick(0, 9);
        if (request.purpose == ChatPurpose::Feedback)
        {
            static const char* verdicts[] = { R"({"status":"done"})", R"({"status":"refine","feedback":"again"})",
                                              R"({"status":"retry","feedback":"start over"})", "garbage" };
            return ChatReply { verdicts[pick(_rng) % 4], {} };
        }
        ChatReply reply;
        std::uniform_int_distribution<int> n_calls(0, 3);
        for (int i = n_calls(_rng); i > 0; --i)
        {
            ToolCall c;
            switch (pick(_rng))
            {
                case 0: c = { "", "answer", json { { "kg", "dblp" }, { "sparql", iclr_distinct_count }, { "answer", "a" } } }; break;
                case 1: c = { "", "cancel", json { { "expl", "no" } } }; break;
                case 2: c = { "", "answer", json { { "kg", "nowhere" }, { "sparql", "x" }, { "answer", "a" } } }; break;
                case 3: c = { "", "execute", json { { "kg", "dblp" }, { "sparql", iclr_distinct_count } } }; break;
                case 4: c = { "", "execute", json { { "kg", "dblp" }, { "sparql", "SELECT * WHERE { ?s ?p ?o }" } } }; break;
                case 5: c = { "", "search_entity", json { { "kg", "dblp" }, { "query", "ICLR" } } }; break;
                case 6: c = { "", "does_not_exist", json::object() }; break;
                case 7: c = { "", "search_property", json { { "kg", "dblp" }, { "query", "published" } } }; break;
                case 8: c = { "", "search_entity", json("not an object") }; break;
                default: c = { "", "cancel", json { { "expl", "maybe" }, { "best_attempt", { { "sparql", iclr_distinct_count } } } } }; break;
            }
            reply.calls.push_back(std::move(c));
        }
        return reply;
    }
    [[nodiscard]] std::string id() const override { return "chaos"; }

  private:
    std::mt19937_64 _rng;
};

} // namespace

TEST_CASE("instruction lists graphs, approach and rules")
{
    auto const box = fixture_toolbox();
    auto const text = build_instruction(box.catalog(), default_rules());
    CHECK(text.find("- dblp at file://") != std::string::npos);
    CHECK(text.find("Think before and after each step") != std::string::npos);
    CHECK(text.find("Rules:\n1. ") != std::string::npos);
    CHECK(build_instruction(box.catalog(), {}).find("Rules:") == std::string::npos);
}

TEST_CASE("feedback verdict parsing")
{
    auto const refine = parse_feedback_verdict("Sure.\n```json\n{\"status\": \"refine\", \"feedback\": \"use DISTINCT\"}\n```");
    REQUIRE(refine.has_value());
    CHECK(refine->status == FeedbackVerdict::Status::Refine);
    CHECK(refine->message == "use DISTINCT");
    CHECK(parse_feedback_verdict(R"({"status":"done"})")->status == FeedbackVerdict::Status::Done);
    CHECK_FALSE(parse_feedback_verdict(R"({"status":"retry"})").has_value());
    CHECK_FALSE(parse_feedback_verdict(R"({"status":"maybe","feedback":"x"})").has_value());
    CHECK_FALSE(parse_feedback_verdict("no json here").has_value());
}

TEST_CASE("feedback sees only the final call and the rules")
{
    ScriptedChatModel model(json::object());
    auto const ex = feedback_round("answer", json { { "kg", "dblp" }, { "sparql", "ASK {}" }, { "answer", "yes" } }, default_rules(), model, "k", 0);
    REQUIRE(ex.request.size() == 2);
    CHECK(ex.request[0].role == Role::System);
    CHECK(ex.request[0].content.find(default_rules()[0]) != std::string::npos);
    CHECK(ex.request[1].content.starts_with("Function call: answer\nArguments:\n"));
    CHECK(ex.request[1].content.find("ASK {}") != std::string::npos);
    CHECK(ex.verdict.status == FeedbackVerdict::Status::Done);
}

TEST_CASE("scripted scenarios reach the expected outcome")
{
    auto const box = fixture_toolbox();
    for (const auto& s: dblp_scenarios())
    {
        CAPTURE(s.name);
        auto const trace = run_script(s.script, s.question, s.config, box);
        CHECK(trace.outcome.kind == s.expected_kind);
        CHECK(trace.outcome.sparql == s.expected_sparql);
        CHECK(trace.turns == s.expected_turns);
        CHECK(trace.turns <= s.config.max_llm_turns);
        CHECK(trace.feedback_loops == s.expected_feedback_loops);
        CHECK(trace.feedback_loops <= max_feedback_loops_cap);
        std::size_t guarded = 0;
        for (const auto& f: trace.functions)
            guarded += f.guarded ? 1 : 0;
        CHECK(guarded == s.expected_guarded);
    }
}

TEST_CASE("the top-5 conference session in detail")
{
    auto const box = fixture_toolbox();
    auto const s = dblp_scenarios().front();
    auto const trace = run_script(s.script, s.question, s.config, box);
    CHECK(trace.outcome.kg == "dblp");
    CHECK(trace.outcome.answer.find("Sergey Levine") != std::string::npos);
    CHECK(trace.function_calls == 9);
    CHECK(trace.call_counts == std::map<std::string, std::size_t> { { "SEN", 5 }, { "SPR", 1 }, { "EXE", 2 }, { "ANS", 1 } });
    CHECK(trace.seen_iris.count("https://dblp.org/streams/conf/iclr") == 1);
    // The probe query found Sergey Levine first.
    const auto& probe = trace.functions[7];
    CHECK(probe.name == "execute");
    CHECK(probe.result.rendered.find("Sergey Levine") != std::string::npos);
    CHECK(trace.functions.back().result.rendered == "Done.");
    CHECK(trace.messages.front().role == Role::System);
    CHECK(trace.messages[1].content == s.question);
}

TEST_CASE("feedback messages reach the model")
{
    auto const box = fixture_toolbox();
    auto const s = dblp_scenarios()[2];
    auto const trace = run_script(s.script, s.question, s.config, box);
    REQUIRE(trace.feedback.size() == 2);
    auto const it = std::find_if(trace.functions.begin(), trace.functions.end(), [](const FunctionEvent& f) { return f.name == "answer"; });
    REQUIRE(it != trace.functions.end());
    CHECK(it->result.rendered ==
          "Feedback (refine): Count distinct papers; a paper can appear several times.\n"
          "Continue working on the question and call answer or cancel again when done.");
}

TEST_CASE("guard rejects unseen IRIs and names them")
{
    auto const box = fixture_toolbox();
    auto const s = dblp_scenarios()[4];
    auto const trace = run_script(s.script, s.question, s.config, box);
    const auto& first = trace.functions.front();
    CHECK(first.guarded);
    CHECK(first.result.rendered.find("conf:neurips2099") != std::string::npos);
    CHECK(first.result.rendered.find("dblp:publishedInStream") != std::string::npos);

    std::set<std::string> seen;
    auto const vocab = guard_execute(seen, box, "dblp",
                                     "SELECT ?l WHERE { ?x <http://www.w3.org/2000/01/rdf-schema#label> ?l ; a <http://www.w3.org/2002/07/owl#Thing> }");
    bool const rejected = vocab.structured.is_object() && vocab.structured.value("guard_rejected", false);
    CHECK_FALSE(rejected);
    auto const unseen = guard_execute(seen, box, "dblp", "SELECT ?p WHERE { ?p <https://dblp.org/rdf/schema#title> ?t }");
    CHECK(unseen.is_error);
    CHECK(unseen.structured.at("iris") == nlohmann::json::array({ "dblp:title" }));
}

TEST_CASE("without the guard the same query is executed")
{
    auto const box = fixture_toolbox();
    auto s = dblp_scenarios()[4];
    s.config.strict_iri_guard = false;
    auto const trace = run_script(s.script, s.question, s.config, box);
    CHECK_FALSE(trace.functions.front().guarded);
    CHECK(trace.outcome.kind == OutcomeKind::Answered);
}

TEST_CASE("functions outside the offered set are refused")
{
    auto const box = fixture_toolbox();
    SessionConfig config;
    config.function_set = FunctionSetId::Base;
    config.max_llm_turns = 2;
    ScriptedChatModel model(one_turn(json::array({ json { { "name", "search_entity" }, { "arguments", { { "kg", "dblp" }, { "query", "ICLR" } } } } })));
    auto const trace = run_session("q", config, box, model);
    REQUIRE(!trace.functions.empty());
    CHECK(trace.functions[0].result.rendered == "Error: function 'search_entity' is not available; available functions: answer, cancel, execute");
    CHECK(trace.outcome.kind == OutcomeKind::Exhausted);
}

TEST_CASE("calls after a final answer are not executed")
{
    auto const box = fixture_toolbox();
    ScriptedChatModel model(one_turn(json::array({
        json { { "name", "cancel" }, { "arguments", { { "expl", "cannot" } } } },
        json { { "name", "search_entity" }, { "arguments", { { "kg", "dblp" }, { "query", "ICLR" } } } },
    })));
    auto const trace = run_session("q", SessionConfig {}, box, model);
    CHECK(trace.outcome.kind == OutcomeKind::Cancelled);
    CHECK(trace.outcome.explanation == "cannot");
    REQUIRE(trace.functions.size() == 2);
    CHECK(trace.functions[1].result.rendered == "Error: not executed because the session ended before this call");
}

TEST_CASE("invalid answers are returned to the model")
{
    auto const box = fixture_toolbox();
    SessionConfig config;
    config.max_llm_turns = 1;
    ScriptedChatModel model(one_turn(json::array({
        json { { "name", "answer" }, { "arguments", { { "kg", "dblp" } } } },
        json { { "name", "answer" }, { "arguments", { { "kg", "nowhere" }, { "sparql", "ASK {}" }, { "answer", "x" } } } },
    })));
    auto const trace = run_session("q", config, box, model);
    REQUIRE(trace.functions.size() == 2);
    CHECK(trace.functions[0].result.rendered == "Error: answer requires the arguments kg, sparql and answer");
    CHECK(trace.functions[1].result.rendered == "Error: unknown knowledge graph 'nowhere'");
    CHECK(trace.outcome.kind == OutcomeKind::Exhausted);
}

TEST_CASE("best attempt of a cancel is kept")
{
    auto const box = fixture_toolbox();
    ScriptedChatModel model(one_turn(json::array({ json { { "name", "cancel" }, { "arguments", { { "expl", "unsure" }, { "best_attempt", { { "sparql", "ASK {}" } } } } } } })));
    auto const trace = run_session("q", SessionConfig {}, box, model);
    CHECK(trace.outcome.kind == OutcomeKind::Cancelled);
    CHECK(trace.outcome.sparql == "ASK {}");
    CHECK(trace.outcome.kg == "dblp");
}

TEST_CASE("unreachable chat model aborts the session")
{
    auto const box = fixture_toolbox();
    FailingModel model;
    auto const trace = run_session("q", SessionConfig {}, box, model);
    CHECK(trace.outcome.kind == OutcomeKind::Aborted);
    CHECK(trace.turns == 0);
}

TEST_CASE("few-shot examples are injected before the first turn")
{
    auto const box = fixture_toolbox();
    for (auto mode: { FewShotMode::Similar, FewShotMode::Random })
    {
        SessionConfig config;
        config.few_shot = mode;
        config.shots = 2;
        config.max_llm_turns = 1;
        ScriptedChatModel model(json::object());
        auto const trace = run_session("How many papers were published at ICML?", config, box, model);
        REQUIRE(!trace.functions.empty());
        const auto& injected = trace.functions.front();
        CHECK(injected.injected);
        CHECK(injected.call_id == "few-shot");
        CHECK(injected.name == (mode == FewShotMode::Similar ? "find_similar_examples" : "find_examples"));
        CHECK(injected.result.rendered.starts_with("Example 1:"));
        CHECK(injected.result.rendered.find("Example 3:") == std::string::npos);
        CHECK(trace.function_calls == 0);
        CHECK(trace.offered.contains(FunctionId::FindSimilarExamples) == (mode == FewShotMode::Similar));
        CHECK(trace.offered.contains(FunctionId::FindExamples) == (mode == FewShotMode::Random));
    }
}

TEST_CASE("session configuration is validated")
{
    auto const box = fixture_toolbox();
    ScriptedChatModel model(json::object());
    SessionConfig config;
    config.max_feedback_loops = 3;
    CHECK_THROWS_AS((void)run_session("q", config, box, model), Error);
    config = {};
    config.max_llm_turns = 0;
    CHECK_THROWS_AS((void)run_session("q", config, box, model), Error);
    CHECK_THROWS_AS((void)run_session("  ", SessionConfig {}, box, model), Error);
}

TEST_CASE("trace records every step as one JSON object per line")
{
    auto const box = fixture_toolbox();
    auto const s = dblp_scenarios()[2];
    auto const trace = run_script(s.script, s.question, s.config, box);
    auto const text = trace_to_jsonl(trace);
    std::vector<json> events;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        events.push_back(json::parse(line));
    REQUIRE(events.size() == trace.events.size());
    CHECK(events.front().at("event") == "session");
    CHECK(events.front().at("feedback") == true);
    CHECK(events.back().at("event") == "outcome");
    CHECK(events.back().at("kind") == "answered");
    CHECK(events.back().at("sparql") == iclr_distinct_count);
    auto const count = [&](const std::string& kind) {
        return std::count_if(events.begin(), events.end(), [&](const json& e) { return e.at("event") == kind; });
    };
    CHECK(count("feedback") == 2);
    CHECK(count("function") == static_cast<long>(trace.functions.size()));

    TempDir dir;
    write_trace(trace, dir / "nested/trace.jsonl");
    CHECK(read_text(dir / "nested/trace.jsonl") == text);
}

TEST_CASE("session invariants under random model behaviour")
{
    auto const box = fixture_toolbox();
    for (std::uint64_t seed = 0; seed < 60; ++seed)
    {
        CAPTURE(seed);
        SessionConfig config;
        config.feedback = seed % 2 == 0;
        config.strict_iri_guard = seed % 3 == 0;
        config.max_llm_turns = 1 + seed % 7;
        config.max_feedback_loops = seed % 3;
        config.seed = seed;
        ChaosModel model(seed);
        auto const trace = run_session("How many papers were published at ICLR?", config, box, model);

        CHECK(trace.turns <= config.max_llm_turns);
        CHECK(trace.feedback_loops <= config.max_feedback_loops);
        CHECK(trace.feedback.size() <= config.max_feedback_loops + 1);
        std::size_t non_injected = 0;
        for (const auto& f: trace.functions)
            non_injected += f.injected ? 0 : 1;
        CHECK(trace.function_calls == non_injected);
        switch (trace.outcome.kind)
        {
            case OutcomeKind::Answered:
                CHECK(trace.outcome.kg == "dblp");
                CHECK(trace.outcome.sparql.has_value());
                CHECK((trace.functions.back().result.rendered.find("Error: not executed") != std::string::npos ||
                       trace.functions.back().result.rendered == "Done."));
                break;
            case OutcomeKind::Cancelled: CHECK_FALSE(trace.outcome.explanation.empty()); break;
            case OutcomeKind::Exhausted: CHECK(trace.turns == config.max_llm_turns); break;
            case OutcomeKind::Aborted: FAIL("unexpected abort"); break;
        }
        // Every IRI in a guarded-through execute was seen before.
        if (config.strict_iri_guard)
            for (const auto& f: trace.functions)
                if (f.name == "execute" && f.guarded)
                    CHECK(f.result.is_error);
    }
}
