/* SPDX-License-Identifier: Apache-2.0 */
#ifndef KGQ_KGQ_H
#define KGQ_KGQ_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define KGQ_API __declspec(dllexport)
#else
#define KGQ_API __attribute__((visibility("default")))
#endif

/* Status codes. Values are stable; the CLI maps them to exit codes. */
typedef enum kgq_status
{
    KGQ_OK = 0,
    KGQ_ERR_INVALID_ARGUMENT = 1,
    KGQ_ERR_INPUT = 2,
    KGQ_ERR_CONFIG = 3,
    KGQ_ERR_TRANSPORT = 6,
    KGQ_ERR_INTERNAL = 7
} kgq_status;

typedef enum kgq_outcome
{
    KGQ_OUTCOME_ANSWERED = 0,
    KGQ_OUTCOME_CANCELLED = 1,
    KGQ_OUTCOME_EXHAUSTED = 2,
    KGQ_OUTCOME_ABORTED = 3
} kgq_outcome;

typedef struct kgq_catalog kgq_catalog;
typedef struct kgq_engine kgq_engine;
typedef struct kgq_keyword_index kgq_keyword_index;

KGQ_API const char* kgq_version(void);

/* Message of the last failed call on this thread; empty if none. */
KGQ_API const char* kgq_last_error(void);

/* Log threshold for diagnostics written to stderr: "trace", "debug",
 * "info", "warn", "error" or "off". Defaults to KGQ_LOG_LEVEL or "warn". */
KGQ_API kgq_status kgq_set_log_level(const char* level);

/* Frees strings returned through char** out-parameters. */
KGQ_API void kgq_string_free(char* s);

KGQ_API kgq_status kgq_catalog_load(const char* path, kgq_catalog** out);
KGQ_API void kgq_catalog_free(kgq_catalog* catalog);
KGQ_API size_t kgq_catalog_graph_count(const kgq_catalog* catalog);
/* Borrowed strings, valid until the catalog is freed; NULL when out of range. */
KGQ_API const char* kgq_catalog_graph_name(const kgq_catalog* catalog, size_t index);
KGQ_API const char* kgq_catalog_graph_endpoint(const kgq_catalog* catalog, size_t index);

/* Builds an entity keyword index or a property vector index ("entity" or
 * "property") from a TSV dump and writes it to out_path. */
KGQ_API kgq_status kgq_index_build(const kgq_catalog* catalog,
                                   const char* kg,
                                   const char* kind,
                                   const char* source_path,
                                   const char* out_path,
                                   size_t* item_count);

KGQ_API kgq_status kgq_keyword_index_open(const char* path, kgq_keyword_index** out);
KGQ_API void kgq_keyword_index_free(kgq_keyword_index* index);
/* JSON array of {"iri", "label", "score", "match", "rank"}. */
KGQ_API kgq_status kgq_keyword_index_search(const kgq_keyword_index* index, const char* query, size_t k, char** json_out);

/* options_json (may be NULL): {"model_script"?: path, "sparql_timeout_s"?: number}.
 * Without a model script the chat endpoint from the catalog or the
 * environment is used. The catalog is copied. */
KGQ_API kgq_status kgq_engine_open(const kgq_catalog* catalog, const char* options_json, kgq_engine** out);
KGQ_API void kgq_engine_free(kgq_engine* engine);

/* session_json (may be NULL): {"fn_set", "feedback", "few_shot", "shots",
 * "seed", "strict_iri_guard", "max_turns", "kg", "trace"}. The result JSON
 * holds the outcome, the final query, its rendered result and counters. */
KGQ_API kgq_status kgq_engine_ask(kgq_engine* engine,
                                  const char* question,
                                  const char* session_json,
                                  char** result_json,
                                  kgq_outcome* outcome);

/* bench_json: session keys plus {"n", "parallelism", "out", "gt_cache", "kg"}.
 * Writes the run directory and returns the report JSON. */
KGQ_API kgq_status kgq_engine_bench(kgq_engine* engine, const char* dataset_path, const char* bench_json, char** report_json);

/* Plain-text report of a run directory (or a directory of runs), optionally
 * compared against a second one. */
KGQ_API kgq_status kgq_report(const char* dir, const char* compare_dir, char** text_out);

/* Scores two SPARQL JSON result documents; returns {"precision", "recall",
 * "f1", "path", "notes"}. */
KGQ_API kgq_status kgq_score_tables(const char* gt_json, const char* pred_json, char** score_json);

#ifdef __cplusplus
}
#endif

#endif /* KGQ_KGQ_H */
