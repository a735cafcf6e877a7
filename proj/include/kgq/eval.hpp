// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/agent.hpp>
#include <kgq/catalog.hpp>
#include <kgq/sparql.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kgq
{

struct BenchmarkSample
{
    std::string id;
    std::string question;
    std::string sparql; // ground truth
    std::string kg;
    std::string split;
};

/// Reads line-delimited records {"id", "question", "sparql", "kg"?, "split"?}
/// or a QALD-style JSON document ({"questions": [...]}). Samples without a
/// kg get `default_kg`. Throws Error{Input} with the offending line.
std::vector<BenchmarkSample> load_dataset(const std::filesystem::path& path, const std::string& default_kg);

enum class ScorePath : std::uint8_t
{
    Matched,
    ExactFallback,
    AskEquivalence,
    Excluded, // empty ground truth
    Error,    // prediction missing or failed
    Invalid,  // ground truth failed to execute
};

std::string_view to_string(ScorePath path);
std::optional<ScorePath> parse_score_path(std::string_view text);

struct EvalScore
{
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    ScorePath path = ScorePath::Error;
    std::string notes;

    /// Counts towards the mean F1.
    [[nodiscard]] bool counted() const noexcept { return path != ScorePath::Excluded && path != ScorePath::Invalid; }
};

/// Tables with more rows than this on either side are scored with exact_f1.
inline constexpr std::size_t assignment_row_limit = 1024;
/// Materialization cap when executing queries for scoring.
inline constexpr std::size_t evaluation_row_cap = 1'000'000;

/// Value equality: IRIs by absolute form, numeric literals by value, dates at
/// the coarser of both precisions, other literals by lexical form; language
/// tags and string datatypes are ignored.
bool cells_equivalent(const Cell& a, const Cell& b);

/// Canonical value key consistent with cells_equivalent, except that dates
/// keep their own precision.
std::string canonical_cell(const Cell& cell);

/// True iff the gt cells form a sub-multiset of the predicted cells.
bool row_match(const std::vector<Cell>& gt_row, const std::vector<Cell>& pred_row);

/// Maximum matching between predicted and ground-truth rows under row_match.
EvalScore assignment_f1(const ResultTable& gt, const ResultTable& pred);

/// Multiset F1 over canonicalized full rows.
EvalScore exact_f1(const ResultTable& gt, const ResultTable& pred);

/// Scores two executed queries. `pred` is nullopt when there is no query.
EvalScore score_results(const QueryOutcome& gt, const std::optional<QueryOutcome>& pred);

/// On-disk cache of ground-truth results keyed by endpoint and query. Safe
/// for concurrent use: entries are written to a temporary file and renamed.
class GroundTruthCache
{
  public:
    explicit GroundTruthCache(std::filesystem::path dir);

    [[nodiscard]] std::optional<ResultTable> get(const std::string& endpoint, const std::string& sparql) const;
    void put(const std::string& endpoint, const std::string& sparql, const ResultTable& table) const;

    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return _dir; }

  private:
    [[nodiscard]] std::filesystem::path entry_path(const std::string& endpoint, const std::string& sparql) const;
    std::filesystem::path _dir;
};

/// Executes the ground truth and the predicted query and scores them.
/// Cancelled outcomes with a best attempt and exhausted outcomes with an
/// executed query are scored like answers.
EvalScore score_sample(const BenchmarkSample& sample,
                       const Outcome& predicted,
                       const Catalog& catalog,
                       const SparqlClient& client,
                       const GroundTruthCache* cache = nullptr);

struct BenchmarkConfig
{
    SessionConfig session;
    std::size_t n = 200;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;
    std::optional<std::string> kg; // default graph for samples without one
    std::filesystem::path out;
    std::optional<std::filesystem::path> gt_cache;
};

struct SampleResult
{
    BenchmarkSample sample;
    Outcome outcome;
    EvalScore score;
    std::size_t turns = 0;
    std::size_t function_calls = 0;
    std::size_t feedback_loops = 0;
    std::map<std::string, std::size_t> call_counts;
    std::string trace_file; // relative to the output directory
};

struct BenchmarkSummary
{
    std::string benchmark;
    std::size_t samples = 0;
    std::size_t evaluated = 0;
    double mean_f1 = 0.0;
    std::map<std::string, std::size_t> outcomes; // answered, cancelled, exhausted, aborted
    std::map<std::string, std::size_t> paths;    // by ScorePath
    std::size_t best_attempts_scored = 0;
    std::map<std::string, std::size_t> calls; // by mnemonic
    double mean_turns = 0.0;
    double mean_function_calls = 0.0;
};

/// Mean F1 over counted samples, summed in id order.
BenchmarkSummary summarize(const std::string& benchmark, std::vector<SampleResult> results);

nlohmann::json sample_result_json(const SampleResult& result);
SampleResult sample_result_from_json(const nlohmann::json& record);

inline constexpr int output_layout_version = 1;

/// Output directory layout: run.json (config snapshot), scores.jsonl (one
/// record per sample, sorted by id, no timings), report.json, report.txt,
/// traces/<id>.jsonl.
BenchmarkSummary run_benchmark(const std::filesystem::path& dataset,
                               const BenchmarkConfig& config,
                               const Toolbox& toolbox,
                               ChatModel& model);

/// Seeded uniform sample of min(n, size) indices, ascending.
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed);

/// Reads every run directory at or directly below `dir`. Throws Error{Input}
/// with "no traces found" when there is none.
std::vector<BenchmarkSummary> load_run_summaries(const std::filesystem::path& dir);

/// Plain-text tables: one row per benchmark with mean F1 and outcome counts,
/// a function-call histogram, and with `compare` a side-by-side delta table.
std::string format_report(const std::vector<BenchmarkSummary>& runs,
                          const std::optional<std::vector<BenchmarkSummary>>& compare = std::nullopt);

nlohmann::json summary_json(const BenchmarkSummary& summary);

} // namespace kgq
