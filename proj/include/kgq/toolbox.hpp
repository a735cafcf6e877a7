// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/catalog.hpp>
#include <kgq/functions.hpp>
#include <kgq/keyword_index.hpp>
#include <kgq/sparql.hpp>
#include <kgq/vector_index.hpp>

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>

namespace kgq
{

struct FunctionResult
{
    std::string rendered;                 // text shown to the model
    nlohmann::json structured;            // machine-readable payload, null if none
    std::set<std::string> mentioned_iris; // absolute IRIs surfaced in `rendered`
    bool is_error = false;

    static FunctionResult error(std::string message);
};

/// Indices and example store of one graph. Any member may be absent.
struct GraphResources
{
    std::shared_ptr<const KeywordIndex> entities;
    std::shared_ptr<const VectorIndex> properties;
    std::shared_ptr<const ExampleStore> examples;
};

/// Loads what the catalog entry points at: index files when configured,
/// otherwise indices built from the TSV sources that exist. Throws Error on
/// unreadable files or when a similarity index is needed without provider.
GraphResources load_graph_resources(const KnowledgeGraphConfig& kg, EmbeddingProvider* provider);

enum class TriplePosition : std::uint8_t
{
    Subject,
    Property,
    Object,
};

std::optional<TriplePosition> parse_triple_position(std::string_view text);

struct TripleConstraints
{
    std::optional<std::string> subj;
    std::optional<std::string> prop;
    std::optional<std::string> obj;
};

inline constexpr std::size_t search_result_limit = 10;
inline constexpr std::size_t list_result_limit = 10;
inline constexpr std::size_t list_candidate_cap = 1'000;
inline constexpr std::size_t property_candidate_cap = 10'000;
inline constexpr std::size_t object_candidate_cap = 100'000;
inline constexpr std::size_t example_result_limit = 3;
inline constexpr std::size_t label_lookup_cap = 1'000;

inline constexpr std::string_view approximate_note = "approximate (candidate set truncated)";

/// The knowledge-graph functions offered to the model. Every operation takes
/// the graph by name, accepts prefixed or absolute IRIs, and returns bounded
/// text; problems the model can fix come back as error results, while missing
/// indices throw Error{Config}.
///
/// Immutable after construction apart from set_resources(); safe for
/// concurrent use by independent sessions.
class Toolbox
{
  public:
    Toolbox(Catalog catalog, SparqlClient client, std::shared_ptr<EmbeddingProvider> provider);

    /// Loads resources for every graph in the catalog.
    static Toolbox open(Catalog catalog, SparqlClient client, std::shared_ptr<EmbeddingProvider> provider);

    void set_resources(const std::string& kg, GraphResources resources);

    [[nodiscard]] const Catalog& catalog() const noexcept { return _catalog; }
    [[nodiscard]] const SparqlClient& client() const noexcept { return _client; }
    [[nodiscard]] EmbeddingProvider* provider() const noexcept { return _provider.get(); }
    [[nodiscard]] const GraphResources* resources(std::string_view kg) const;

    FunctionResult execute(std::string_view kg, std::string_view sparql) const;
    FunctionResult list(std::string_view kg, const TripleConstraints& pattern) const;
    FunctionResult search_entity(std::string_view kg, std::string_view query) const;
    FunctionResult search_property(std::string_view kg, std::string_view query) const;
    FunctionResult search_property_of_entity(std::string_view kg, std::string_view query, std::string_view ent) const;
    FunctionResult search_object_of_property(std::string_view kg, std::string_view query, std::string_view prop) const;
    FunctionResult search_autocomplete(std::string_view kg, std::string_view query, std::string_view sparql) const;
    FunctionResult search_constrained(std::string_view kg,
                                      std::string_view query,
                                      TriplePosition pos,
                                      const TripleConstraints& constraints) const;
    FunctionResult find_similar_examples(std::string_view kg, std::string_view question, std::size_t k = example_result_limit) const;
    FunctionResult find_examples(std::string_view kg, std::mt19937_64& rng, std::size_t k = example_result_limit) const;

    /// Dispatches a model call with JSON arguments. Argument problems come
    /// back as error results. ANS and CAN are not handled here.
    FunctionResult invoke(FunctionId id, const nlohmann::json& args, std::mt19937_64& rng) const;

  private:
    struct Candidate;
    enum class CandidateMode : std::uint8_t;

    const KnowledgeGraphConfig* graph(std::string_view kg) const;
    const KeywordIndex& entity_index(const KnowledgeGraphConfig& kg) const;
    const VectorIndex& property_index(const KnowledgeGraphConfig& kg) const;
    FunctionResult unknown_graph(std::string_view kg) const;

    FunctionResult search_candidates(const KnowledgeGraphConfig& kg,
                                     std::string_view query,
                                     const std::string& candidate_query,
                                     std::string_view variable,
                                     std::size_t cap,
                                     CandidateMode mode,
                                     std::string_view empty_text) const;
    std::map<std::string, std::vector<Cell>> fetch_labels(const KnowledgeGraphConfig& kg, const std::vector<std::string>& iris) const;
    std::optional<std::string> label_of(const KnowledgeGraphConfig& kg, const std::string& iri) const;
    std::uint64_t popularity_of(const KnowledgeGraphConfig& kg, const std::string& iri) const;
    FunctionResult render_examples(const KnowledgeGraphConfig& kg, const std::vector<const ExamplePair*>& pairs) const;

    Catalog _catalog;
    SparqlClient _client;
    std::shared_ptr<EmbeddingProvider> _provider;
    std::map<std::string, GraphResources, std::less<>> _resources;
};

/// Renders a SPARQL term for an IRI or literal argument: IRIs become
/// `<absolute>`; quoted literals (with optional @lang or ^^datatype),
/// numbers and booleans pass through. Returns nullopt for anything else.
std::optional<std::string> sparql_term(const PrefixTable& prefixes, std::string_view text, bool allow_literal);

/// Rewrites a SELECT query mentioning ?search into one that yields the
/// distinct bindings of ?search, capped at `cap` + 1 rows. The body is kept
/// verbatim. Returns nullopt when the query is not a SELECT or lacks ?search.
std::optional<std::string> autocomplete_query(std::string_view sparql, std::size_t cap, std::string* problem = nullptr);

} // namespace kgq
