// SPDX-License-Identifier: Apache-2.0
#include <kgq/agent.hpp>
#include <kgq/catalog.hpp>
#include <kgq/chat.hpp>
#include <kgq/error.hpp>
#include <kgq/eval.hpp>
#include <kgq/kgq.h>
#include <kgq/keyword_index.hpp>
#include <kgq/sparql.hpp>
#include <kgq/toolbox.hpp>
#include <kgq/vector_index.hpp>

#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>

using json = nlohmann::json;

struct kgq_catalog
{
    kgq::Catalog catalog;
};

struct kgq_keyword_index
{
    kgq::KeywordIndex index;
};

struct kgq_engine
{
    kgq::Toolbox toolbox;
    std::unique_ptr<kgq::ChatModel> model;
};

namespace
{

thread_local std::string last_error;

void ensure_logger()
{
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("kgq");
        logger->set_pattern("%^%l%$: %v");
        const char* env = std::getenv("KGQ_LOG_LEVEL");
        logger->set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::warn);
        spdlog::set_default_logger(std::move(logger));
    });
}

kgq_status status_of(kgq::ErrorKind kind)
{
    switch (kind)
    {
        case kgq::ErrorKind::InvalidArgument: return KGQ_ERR_INVALID_ARGUMENT;
        case kgq::ErrorKind::Input: return KGQ_ERR_INPUT;
        case kgq::ErrorKind::Config: return KGQ_ERR_CONFIG;
        case kgq::ErrorKind::Transport: return KGQ_ERR_TRANSPORT;
        case kgq::ErrorKind::Internal: return KGQ_ERR_INTERNAL;
    }
    return KGQ_ERR_INTERNAL;
}

kgq_status set_error(kgq_status status, std::string message)
{
    last_error = std::move(message);
    return status;
}

template<typename F>
kgq_status guarded(F&& body)
{
    try
    {
        last_error.clear();
        ensure_logger();
        body();
        return KGQ_OK;
    }
    catch (const kgq::Error& e)
    {
        return set_error(status_of(e.kind()), e.what());
    }
    catch (const kgq::QueryError& e)
    {
        return set_error(KGQ_ERR_INPUT, e.message);
    }
    catch (const json::exception& e)
    {
        return set_error(KGQ_ERR_INVALID_ARGUMENT, std::string("invalid JSON: ") + e.what());
    }
    catch (const std::exception& e)
    {
        return set_error(KGQ_ERR_INTERNAL, e.what());
    }
    catch (...)
    {
        return set_error(KGQ_ERR_INTERNAL, "unknown error");
    }
}

char* dup_string(const std::string& s)
{
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr)
        throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(const void* p, const char* name)
{
    if (p == nullptr)
        kgq::fail(kgq::ErrorKind::InvalidArgument, std::string(name) + " must not be NULL");
}

json parse_options(const char* text)
{
    if (text == nullptr || *text == '\0')
        return json::object();
    auto doc = json::parse(text);
    if (!doc.is_object())
        kgq::fail(kgq::ErrorKind::InvalidArgument, "options must be a JSON object");
    return doc;
}

const std::set<std::string> session_keys { "fn_set", "feedback", "few_shot", "shots", "seed", "strict_iri_guard", "max_turns", "kg" };

kgq::SessionConfig session_from(const json& o)
{
    kgq::SessionConfig c;
    if (o.contains("fn_set"))
    {
        auto id = kgq::parse_function_set(o["fn_set"].get<std::string>());
        if (!id)
            kgq::fail(kgq::ErrorKind::InvalidArgument, "unknown function set '" + o["fn_set"].get<std::string>() + "' (expected b, s, se, sa or sc)");
        c.function_set = *id;
    }
    if (o.contains("few_shot"))
    {
        auto mode = kgq::parse_few_shot_mode(o["few_shot"].get<std::string>());
        if (!mode)
            kgq::fail(kgq::ErrorKind::InvalidArgument, "unknown few-shot mode '" + o["few_shot"].get<std::string>() + "' (expected similar or random)");
        c.few_shot = *mode;
    }
    c.feedback = o.value("feedback", c.feedback);
    c.shots = o.value("shots", c.shots);
    c.seed = o.value("seed", c.seed);
    c.strict_iri_guard = o.value("strict_iri_guard", c.strict_iri_guard);
    c.max_llm_turns = o.value("max_turns", c.max_llm_turns);
    if (o.contains("kg"))
        c.kg = o["kg"].get<std::string>();
    c.validate();
    return c;
}

void reject_unknown(const json& o, const std::set<std::string>& allowed)
{
    for (const auto& [key, value]: o.items())
        if (!allowed.contains(key))
            kgq::fail(kgq::ErrorKind::InvalidArgument, "unknown option '" + key + "'");
}

json score_to_json(const kgq::EvalScore& s)
{
    return json { { "precision", s.precision }, { "recall", s.recall }, { "f1", s.f1 }, { "path", kgq::to_string(s.path) }, { "notes", s.notes } };
}

} // namespace

extern "C" {

const char* kgq_version(void)
{
    return "0.1.0";
}

const char* kgq_last_error(void)
{
    return last_error.c_str();
}

kgq_status kgq_set_log_level(const char* level)
{
    return guarded([&] {
        require(level, "level");
        auto const parsed = spdlog::level::from_str(level);
        if (parsed == spdlog::level::off && std::string_view(level) != "off")
            kgq::fail(kgq::ErrorKind::InvalidArgument, std::string("unknown log level '") + level + "'");
        spdlog::set_level(parsed);
    });
}

void kgq_string_free(char* s)
{
    std::free(s);
}

kgq_status kgq_catalog_load(const char* path, kgq_catalog** out)
{
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        auto handle = std::make_unique<kgq_catalog>();
        handle->catalog = kgq::load_catalog(path);
        *out = handle.release();
    });
}

void kgq_catalog_free(kgq_catalog* catalog)
{
    delete catalog;
}

size_t kgq_catalog_graph_count(const kgq_catalog* catalog)
{
    return catalog == nullptr ? 0 : catalog->catalog.size();
}

const char* kgq_catalog_graph_name(const kgq_catalog* catalog, size_t index)
{
    if (catalog == nullptr || index >= catalog->catalog.size())
        return nullptr;
    return catalog->catalog.graphs()[index].name.c_str();
}

const char* kgq_catalog_graph_endpoint(const kgq_catalog* catalog, size_t index)
{
    if (catalog == nullptr || index >= catalog->catalog.size())
        return nullptr;
    return catalog->catalog.graphs()[index].endpoint.c_str();
}

kgq_status kgq_index_build(const kgq_catalog* catalog, const char* kg, const char* kind, const char* source_path, const char* out_path, size_t* item_count)
{
    return guarded([&] {
        require(catalog, "catalog");
        require(kg, "kg");
        require(kind, "kind");
        require(source_path, "source_path");
        require(out_path, "out_path");
        auto const* graph = catalog->catalog.find(kg);
        if (graph == nullptr)
            kgq::fail(kgq::ErrorKind::Config, std::string("unknown knowledge graph '") + kg + "'");
        auto const item_kind = kgq::parse_item_kind(kind);
        if (!item_kind)
            kgq::fail(kgq::ErrorKind::InvalidArgument, std::string("unknown index kind '") + kind + "' (expected entity or property)");

        std::size_t count = 0;
        if (*item_kind == kgq::ItemKind::Entity)
        {
            auto records = kgq::load_item_records(source_path, *item_kind, graph->prefixes);
            auto index = kgq::KeywordIndex::build(records);
            index.save(out_path);
            count = index.size();
        }
        else
        {
            auto provider = kgq::make_embedding_provider(catalog->catalog.embedding);
            if (!provider)
                kgq::fail(kgq::ErrorKind::Config, "building a property index needs an embedding provider (catalog key \"embedding\")");
            auto records = kgq::load_item_records(source_path, *item_kind, graph->prefixes);
            auto index = kgq::build_vector_index(records, *provider);
            index.save(out_path);
            count = index.items().size();
        }
        if (item_count != nullptr)
            *item_count = count;
    });
}

kgq_status kgq_keyword_index_open(const char* path, kgq_keyword_index** out)
{
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new kgq_keyword_index { kgq::KeywordIndex::open(path, kgq::KeywordIndex::Storage::Mapped) };
    });
}

void kgq_keyword_index_free(kgq_keyword_index* index)
{
    delete index;
}

kgq_status kgq_keyword_index_search(const kgq_keyword_index* index, const char* query, size_t k, char** json_out)
{
    return guarded([&] {
        require(index, "index");
        require(query, "query");
        require(json_out, "json_out");
        auto result = index->index.search(query, k);
        json hits = json::array();
        for (const auto& h: result.hits)
            hits.push_back({ { "iri", h.item.iri }, { "label", h.item.label }, { "score", h.item.score }, { "match", h.match_score }, { "rank", h.rank } });
        *json_out = dup_string(hits.dump());
    });
}

kgq_status kgq_engine_open(const kgq_catalog* catalog, const char* options_json, kgq_engine** out)
{
    return guarded([&] {
        require(catalog, "catalog");
        require(out, "out");
        *out = nullptr;
        auto options = parse_options(options_json);
        reject_unknown(options, { "model_script", "sparql_timeout_s" });

        auto client_options = kgq::SparqlClientOptions::from_env();
        if (options.contains("sparql_timeout_s"))
        {
            auto const seconds = options["sparql_timeout_s"].get<double>();
            if (seconds <= 0)
                kgq::fail(kgq::ErrorKind::InvalidArgument, "sparql_timeout_s must be positive");
            client_options.timeout = std::chrono::milliseconds(static_cast<long long>(seconds * 1000));
        }
        std::unique_ptr<kgq::ChatModel> model;
        if (options.contains("model_script"))
            model = std::make_unique<kgq::ScriptedChatModel>(kgq::ScriptedChatModel::load(options["model_script"].get<std::string>()));
        else
            model = kgq::make_chat_model(catalog->catalog.chat);

        std::shared_ptr<kgq::EmbeddingProvider> provider = kgq::make_embedding_provider(catalog->catalog.embedding);
        kgq::SparqlClient client(std::make_shared<kgq::RoutingTransport>(), client_options);
        *out = new kgq_engine { kgq::Toolbox::open(catalog->catalog, std::move(client), std::move(provider)), std::move(model) };
    });
}

void kgq_engine_free(kgq_engine* engine)
{
    delete engine;
}

kgq_status kgq_engine_ask(kgq_engine* engine, const char* question, const char* session_json, char** result_json, kgq_outcome* outcome)
{
    return guarded([&] {
        require(engine, "engine");
        require(question, "question");
        require(result_json, "result_json");
        *result_json = nullptr;
        auto options = parse_options(session_json);
        auto allowed = session_keys;
        allowed.insert("trace");
        reject_unknown(options, allowed);
        auto config = session_from(options);

        auto trace = kgq::run_session(question, config, engine->toolbox, *engine->model);
        if (options.contains("trace"))
            kgq::write_trace(trace, options["trace"].get<std::string>());

        const auto& o = trace.outcome;
        json result { { "outcome", kgq::to_string(o.kind) },
                      { "turns", trace.turns },
                      { "function_calls", trace.function_calls },
                      { "feedback_loops", trace.feedback_loops },
                      { "call_counts", trace.call_counts } };
        json offered = json::array();
        for (auto id: trace.offered)
            offered.push_back(kgq::function_spec(id).mnemonic);
        result["offered"] = offered;
        if (o.kg)
            result["kg"] = *o.kg;
        if (o.sparql)
            result["sparql"] = *o.sparql;
        if (!o.answer.empty())
            result["answer"] = o.answer;
        if (!o.explanation.empty())
            result["explanation"] = o.explanation;
        if (o.sparql && o.kg)
        {
            auto executed = engine->toolbox.execute(*o.kg, *o.sparql);
            result["result"] = executed.rendered;
            result["result_error"] = executed.is_error;
        }
        if (outcome != nullptr)
        {
            switch (o.kind)
            {
                case kgq::OutcomeKind::Answered: *outcome = KGQ_OUTCOME_ANSWERED; break;
                case kgq::OutcomeKind::Cancelled: *outcome = KGQ_OUTCOME_CANCELLED; break;
                case kgq::OutcomeKind::Exhausted: *outcome = KGQ_OUTCOME_EXHAUSTED; break;
                case kgq::OutcomeKind::Aborted: *outcome = KGQ_OUTCOME_ABORTED; break;
            }
        }
        *result_json = dup_string(result.dump());
    });
}

kgq_status kgq_engine_bench(kgq_engine* engine, const char* dataset_path, const char* bench_json, char** report_json)
{
    return guarded([&] {
        require(engine, "engine");
        require(dataset_path, "dataset_path");
        require(report_json, "report_json");
        *report_json = nullptr;
        auto options = parse_options(bench_json);
        auto allowed = session_keys;
        allowed.insert({ "n", "parallelism", "out", "gt_cache" });
        reject_unknown(options, allowed);

        kgq::BenchmarkConfig config;
        config.session = session_from(options);
        config.session.kg.reset();
        config.n = options.value("n", config.n);
        config.seed = options.value("seed", config.seed);
        config.parallelism = options.value("parallelism", config.parallelism);
        if (options.contains("kg"))
            config.kg = options["kg"].get<std::string>();
        if (!options.contains("out"))
            kgq::fail(kgq::ErrorKind::InvalidArgument, "bench needs an output directory (\"out\")");
        config.out = options["out"].get<std::string>();
        if (options.contains("gt_cache"))
            config.gt_cache = options["gt_cache"].get<std::string>();

        auto summary = kgq::run_benchmark(dataset_path, config, engine->toolbox, *engine->model);
        *report_json = dup_string(kgq::summary_json(summary).dump());
    });
}

kgq_status kgq_report(const char* dir, const char* compare_dir, char** text_out)
{
    return guarded([&] {
        require(dir, "dir");
        require(text_out, "text_out");
        *text_out = nullptr;
        auto runs = kgq::load_run_summaries(dir);
        std::optional<std::vector<kgq::BenchmarkSummary>> compare;
        if (compare_dir != nullptr)
            compare = kgq::load_run_summaries(compare_dir);
        *text_out = dup_string(kgq::format_report(runs, compare));
    });
}

kgq_status kgq_score_tables(const char* gt_json, const char* pred_json, char** score_json)
{
    return guarded([&] {
        require(gt_json, "gt_json");
        require(pred_json, "pred_json");
        require(score_json, "score_json");
        *score_json = nullptr;
        auto const gt = kgq::parse_sparql_json(gt_json, kgq::evaluation_row_cap);
        auto const pred = kgq::parse_sparql_json(pred_json, kgq::evaluation_row_cap);
        *score_json = dup_string(score_to_json(kgq::score_results(kgq::QueryOutcome(gt), kgq::QueryOutcome(pred))).dump());
    });
}

} // extern "C"
