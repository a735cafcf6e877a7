// SPDX-License-Identifier: Apache-2.0
// Command-line front end over the kgq C API.
#include <kgq/kgq.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

using json = nlohmann::json;

namespace
{

// Exit codes are part of the interface; scripts branch on them.
enum Exit : int
{
    exit_ok = 0,
    exit_internal = 1,
    exit_input = 2,
    exit_config = 3,
    exit_cancelled = 4,
    exit_exhausted = 5,
    exit_transport = 6,
};

int exit_for(kgq_status status)
{
    switch (status)
    {
        case KGQ_OK: return exit_ok;
        case KGQ_ERR_INVALID_ARGUMENT:
        case KGQ_ERR_INPUT: return exit_input;
        case KGQ_ERR_CONFIG: return exit_config;
        case KGQ_ERR_TRANSPORT: return exit_transport;
        case KGQ_ERR_INTERNAL: return exit_internal;
    }
    return exit_internal;
}

int report_failure(kgq_status status)
{
    std::cerr << "error: " << kgq_last_error() << "\n";
    return exit_for(status);
}

struct StringDeleter
{
    void operator()(char* s) const { kgq_string_free(s); }
};
using owned_string = std::unique_ptr<char, StringDeleter>;

struct CatalogDeleter
{
    void operator()(kgq_catalog* c) const { kgq_catalog_free(c); }
};
struct EngineDeleter
{
    void operator()(kgq_engine* e) const { kgq_engine_free(e); }
};

std::string default_catalog()
{
    const char* env = std::getenv("KGQ_CATALOG");
    return env != nullptr ? env : "catalog.json";
}

struct SessionFlags
{
    std::string catalog = default_catalog();
    std::string fn_set = "s";
    bool feedback = false;
    std::string few_shot;
    std::size_t shots = 3;
    std::uint64_t seed = 0;
    bool strict_iri_guard = false;
    std::size_t max_turns = 30;
    std::string kg;
    std::string model_script;
    double sparql_timeout = 0;

    void add_to(CLI::App& app)
    {
        app.add_option("--catalog", catalog, "Catalog file (default: $KGQ_CATALOG or catalog.json)");
        app.add_option("--fn-set", fn_set, "Function set: b, s, se, sa or sc")->check(CLI::IsMember({ "b", "s", "se", "sa", "sc" }));
        app.add_flag("--feedback", feedback, "Review answer/cancel calls with up to two feedback loops");
        app.add_option("--few-shot", few_shot, "Inject examples: similar or random")->check(CLI::IsMember({ "similar", "random" }));
        app.add_option("--shots", shots, "Number of injected examples")->check(CLI::PositiveNumber);
        app.add_option("--seed", seed, "Random seed");
        app.add_flag("--strict-iri-guard", strict_iri_guard, "Reject queries with IRIs not seen in earlier function results");
        app.add_option("--max-turns", max_turns, "Model turn budget")->check(CLI::PositiveNumber);
        app.add_option("--model-script", model_script, "Replay a scripted model instead of the chat endpoint");
        app.add_option("--sparql-timeout", sparql_timeout, "Query timeout in seconds")->check(CLI::PositiveNumber);
    }

    [[nodiscard]] json session_options() const
    {
        json o { { "fn_set", fn_set }, { "feedback", feedback }, { "shots", shots }, { "seed", seed }, { "strict_iri_guard", strict_iri_guard }, { "max_turns", max_turns } };
        if (!few_shot.empty())
            o["few_shot"] = few_shot;
        if (!kg.empty())
            o["kg"] = kg;
        return o;
    }

    [[nodiscard]] json engine_options() const
    {
        json o = json::object();
        if (!model_script.empty())
            o["model_script"] = model_script;
        if (sparql_timeout > 0)
            o["sparql_timeout_s"] = sparql_timeout;
        return o;
    }
};

int open_engine(const SessionFlags& flags, std::unique_ptr<kgq_engine, EngineDeleter>& engine)
{
    kgq_catalog* raw_catalog = nullptr;
    if (auto st = kgq_catalog_load(flags.catalog.c_str(), &raw_catalog); st != KGQ_OK)
        return report_failure(st);
    std::unique_ptr<kgq_catalog, CatalogDeleter> catalog(raw_catalog);
    kgq_engine* raw_engine = nullptr;
    if (auto st = kgq_engine_open(catalog.get(), flags.engine_options().dump().c_str(), &raw_engine); st != KGQ_OK)
        return report_failure(st);
    engine.reset(raw_engine);
    return exit_ok;
}

int cmd_index_build(const std::string& catalog_path, const std::string& kg, const std::string& kind, const std::string& source, const std::string& out)
{
    kgq_catalog* raw = nullptr;
    if (auto st = kgq_catalog_load(catalog_path.c_str(), &raw); st != KGQ_OK)
        return report_failure(st);
    std::unique_ptr<kgq_catalog, CatalogDeleter> catalog(raw);
    auto const started = std::chrono::steady_clock::now();
    std::size_t count = 0;
    if (auto st = kgq_index_build(catalog.get(), kg.c_str(), kind.c_str(), source.c_str(), out.c_str(), &count); st != KGQ_OK)
        return report_failure(st);
    auto const seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::printf("indexed %zu %s items for %s in %.2f s: %s\n", count, kind.c_str(), kg.c_str(), seconds, out.c_str());
    return exit_ok;
}

int cmd_ask(const std::string& question, const SessionFlags& flags, const std::string& trace)
{
    std::unique_ptr<kgq_engine, EngineDeleter> engine;
    if (int code = open_engine(flags, engine); code != exit_ok)
        return code;
    auto options = flags.session_options();
    if (!trace.empty())
        options["trace"] = trace;
    char* raw = nullptr;
    kgq_outcome outcome = KGQ_OUTCOME_ABORTED;
    if (auto st = kgq_engine_ask(engine.get(), question.c_str(), options.dump().c_str(), &raw, &outcome); st != KGQ_OK)
        return report_failure(st);
    owned_string text(raw);
    auto const r = json::parse(text.get());

    std::cout << "outcome: " << r["outcome"].get<std::string>() << " (turns " << r["turns"] << ", function calls " << r["function_calls"]
              << ", feedback loops " << r["feedback_loops"] << ")\n";
    std::cout << "functions offered:";
    for (const auto& m: r["offered"])
        std::cout << " " << m.get<std::string>();
    std::cout << "\ncalls:";
    if (r["call_counts"].empty())
        std::cout << " none";
    for (const auto& [name, count]: r["call_counts"].items())
        std::cout << " " << name << "=" << count;
    std::cout << "\n";
    if (r.contains("kg"))
        std::cout << "kg: " << r["kg"].get<std::string>() << "\n";
    if (r.contains("sparql"))
        std::cout << "SPARQL:\n" << r["sparql"].get<std::string>() << "\n";
    if (r.contains("result"))
        std::cout << "result:\n" << r["result"].get<std::string>() << "\n";
    if (r.contains("answer"))
        std::cout << "answer: " << r["answer"].get<std::string>() << "\n";
    if (r.contains("explanation"))
        std::cout << "explanation: " << r["explanation"].get<std::string>() << "\n";

    switch (outcome)
    {
        case KGQ_OUTCOME_ANSWERED: return exit_ok;
        case KGQ_OUTCOME_CANCELLED: return exit_cancelled;
        case KGQ_OUTCOME_EXHAUSTED: return exit_exhausted;
        case KGQ_OUTCOME_ABORTED: return exit_transport;
    }
    return exit_internal;
}

int cmd_bench(const std::string& dataset, const SessionFlags& flags, std::size_t n, std::size_t parallelism, const std::string& out, const std::string& gt_cache)
{
    std::unique_ptr<kgq_engine, EngineDeleter> engine;
    if (int code = open_engine(flags, engine); code != exit_ok)
        return code;
    auto options = flags.session_options();
    options["n"] = n;
    options["parallelism"] = parallelism;
    options["out"] = out;
    if (!gt_cache.empty())
        options["gt_cache"] = gt_cache;
    char* raw = nullptr;
    if (auto st = kgq_engine_bench(engine.get(), dataset.c_str(), options.dump().c_str(), &raw); st != KGQ_OK)
        return report_failure(st);
    owned_string text(raw);
    auto const r = json::parse(text.get());
    std::printf("%s: mean F1 %.3f over %zu evaluated of %zu samples; results in %s\n",
                r["benchmark"].get<std::string>().c_str(),
                r["mean_f1"].get<double>(),
                r["evaluated"].get<std::size_t>(),
                r["samples"].get<std::size_t>(),
                out.c_str());
    return exit_ok;
}

int cmd_report(const std::string& dir, const std::string& compare)
{
    char* raw = nullptr;
    if (auto st = kgq_report(dir.c_str(), compare.empty() ? nullptr : compare.c_str(), &raw); st != KGQ_OK)
        return report_failure(st);
    owned_string text(raw);
    std::cout << text.get();
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app { "Question answering over RDF knowledge graphs with a tool-calling language model" };
    app.require_subcommand(1);
    app.set_version_flag("--version", kgq_version());
    std::string log_level;
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    auto* index_build = app.add_subcommand("index-build", "Build an entity keyword index or a property vector index");
    std::string ib_catalog = default_catalog();
    std::string ib_kg;
    std::string ib_kind;
    std::string ib_source;
    std::string ib_out;
    index_build->add_option("--catalog", ib_catalog, "Catalog file (default: $KGQ_CATALOG or catalog.json)");
    index_build->add_option("--kg", ib_kg, "Knowledge graph name")->required();
    index_build->add_option("--kind", ib_kind, "entity or property")->required()->check(CLI::IsMember({ "entity", "property" }));
    index_build->add_option("--source", ib_source, "TSV dump")->required();
    index_build->add_option("--out", ib_out, "Index file to write")->required();

    auto* ask = app.add_subcommand("ask", "Answer one question");
    SessionFlags ask_flags;
    std::string question;
    std::string trace;
    ask->add_option("question", question, "Question in natural language")->required();
    ask_flags.add_to(*ask);
    ask->add_option("--kg", ask_flags.kg, "Graph used for example retrieval");
    ask->add_option("--trace", trace, "Write the session trace (JSON lines) to this file");

    auto* bench = app.add_subcommand("bench", "Run a seeded benchmark evaluation");
    SessionFlags bench_flags;
    std::string dataset;
    std::size_t n = 200;
    std::size_t parallelism = 1;
    std::string out;
    std::string gt_cache;
    bench->add_option("--dataset", dataset, "Dataset (JSON lines or QALD JSON)")->required();
    bench_flags.add_to(*bench);
    bench->add_option("--kg", bench_flags.kg, "Graph for samples that name none");
    bench->add_option("--n", n, "Number of samples")->check(CLI::PositiveNumber);
    bench->add_option("--parallelism", parallelism, "Concurrent sessions")->check(CLI::PositiveNumber);
    bench->add_option("--out", out, "Output directory")->required();
    bench->add_option("--gt-cache", gt_cache, "Directory caching ground-truth results");

    auto* report = app.add_subcommand("report", "Summarize benchmark runs");
    std::string report_dir;
    std::string compare_dir;
    report->add_option("dir", report_dir, "Run directory or a directory of runs")->required();
    report->add_option("--compare", compare_dir, "Second run directory to compare against");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        int const code = app.exit(e);
        return code == 0 ? exit_ok : exit_input;
    }

    if (!log_level.empty())
        if (auto st = kgq_set_log_level(log_level.c_str()); st != KGQ_OK)
            return report_failure(st);

    if (index_build->parsed())
        return cmd_index_build(ib_catalog, ib_kg, ib_kind, ib_source, ib_out);
    if (ask->parsed())
        return cmd_ask(question, ask_flags, trace);
    if (bench->parsed())
        return cmd_bench(dataset, bench_flags, n, parallelism, out, gt_cache);
    if (report->parsed())
        return cmd_report(report_dir, compare_dir);
    return exit_input;
}
