// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/catalog.hpp>
#include <kgq/http.hpp>
#include <kgq/rdf.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace kgq
{

enum class CellKind : std::uint8_t
{
    Iri,
    Literal,
    Blank,
    Unbound,
};

struct Cell
{
    CellKind kind = CellKind::Unbound;
    std::string lexical; // absolute IRI for Iri cells
    std::string datatype;
    std::string lang;

    static Cell iri(std::string value) { return Cell { CellKind::Iri, std::move(value), {}, {} }; }
    static Cell literal(std::string value, std::string datatype = {}, std::string lang = {})
    {
        return Cell { CellKind::Literal, std::move(value), std::move(datatype), std::move(lang) };
    }
    static Cell blank(std::string id) { return Cell { CellKind::Blank, std::move(id), {}, {} }; }
    static Cell unbound() { return Cell {}; }

    bool operator==(const Cell&) const = default;
};

struct ResultTable
{
    std::vector<std::string> variables;
    std::vector<std::vector<Cell>> rows;
    std::size_t total_rows = 0;
    std::size_t total_cols = 0;
    bool truncated = false;         // rows beyond the materialization cap were dropped
    std::optional<bool> ask_result; // set for ASK queries

    [[nodiscard]] bool is_ask() const noexcept { return ask_result.has_value(); }

    static ResultTable from_rows(std::vector<std::string> variables, std::vector<std::vector<Cell>> rows);
    static ResultTable from_ask(bool value);
};

enum class QueryErrorKind
{
    Timeout,
    EndpointHttp,
    Parse,
    MalformedQuery,
};

std::string_view to_string(QueryErrorKind kind);

struct QueryError
{
    QueryErrorKind kind;
    std::string message;
};

using QueryOutcome = std::variant<ResultTable, QueryError>;

enum class QueryForm
{
    Select,
    Ask,
    Construct,
    Describe,
    Update,
    Unknown,
};

/// Classifies by the first keyword after the prologue (PREFIX/BASE).
QueryForm classify_query(std::string_view sparql);

/// Light client-side validation: non-empty, balanced braces/parentheses
/// outside strings and IRIs, not an update. Returns the violation, if any.
std::optional<std::string> validate_query(std::string_view sparql);

/// Offset just past the prologue (PREFIX and BASE declarations, comments).
std::size_t prologue_end(std::string_view sparql);

/// Parses an `application/sparql-results+json` document. At most `row_cap`
/// rows are materialized. Throws QueryError{Parse} on malformed input.
ResultTable parse_sparql_json(std::string_view body, std::size_t row_cap);

/// Serializes a table back to the SPARQL JSON results format.
std::string to_sparql_json(const ResultTable& table);

/// Moves one query to an endpoint. Implementations throw TimeoutError on
/// deadline expiry and Error{Transport} when the endpoint is unreachable.
class SparqlTransport
{
  public:
    virtual ~SparqlTransport() = default;
    virtual HttpResponse post_query(const KnowledgeGraphConfig& kg,
                                    std::string_view sparql,
                                    std::chrono::milliseconds timeout) = 0;
    virtual bool reachable(const KnowledgeGraphConfig& kg) = 0;
};

/// SPARQL protocol over HTTP(S): POST with `application/sparql-query`,
/// JSON results requested. A watchdog stops the request at the deadline.
class HttpTransport final: public SparqlTransport
{
  public:
    HttpResponse post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds timeout) override;
    bool reachable(const KnowledgeGraphConfig& kg) override;
};

/// Serves canned responses from a line-delimited JSON file named by a
/// `file://` endpoint. Each line: {"query", "status"?, "body" | "text",
/// "delay_ms"?}. Queries match after whitespace normalization.
class CannedTransport final: public SparqlTransport
{
  public:
    HttpResponse post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds timeout) override;
    bool reachable(const KnowledgeGraphConfig& kg) override;

  private:
    struct Canned
    {
        int status = 200;
        std::string body;
        std::chrono::milliseconds delay { 0 };
    };
    using Table = std::map<std::string, Canned>;
    const Table& load(const std::string& path);

    std::mutex _mutex;
    std::map<std::string, Table> _files;
};

/// Dispatches by endpoint scheme: file:// to canned, everything else to HTTP.
class RoutingTransport final: public SparqlTransport
{
  public:
    HttpResponse post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds timeout) override;
    bool reachable(const KnowledgeGraphConfig& kg) override;

  private:
    HttpTransport _http;
    CannedTransport _canned;
};

/// Adapter for tests and embedding: answers queries with a callable.
class FunctionTransport final: public SparqlTransport
{
  public:
    using Handler = std::function<HttpResponse(const KnowledgeGraphConfig&, std::string_view)>;
    explicit FunctionTransport(Handler handler): _handler(std::move(handler)) {}

    HttpResponse post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds) override
    {
        return _handler(kg, sparql);
    }
    bool reachable(const KnowledgeGraphConfig&) override { return true; }

  private:
    Handler _handler;
};

inline constexpr std::chrono::milliseconds default_query_timeout { 60'000 };
inline constexpr std::size_t default_row_cap = 100'000;

struct SparqlClientOptions
{
    std::chrono::milliseconds timeout = default_query_timeout;
    std::size_t row_cap = default_row_cap;

    /// Defaults with `KGQ_SPARQL_TIMEOUT` (seconds) applied when set.
    static SparqlClientOptions from_env();
};

class SparqlClient
{
  public:
    explicit SparqlClient(std::shared_ptr<SparqlTransport> transport, SparqlClientOptions options = SparqlClientOptions::from_env());

    [[nodiscard]] QueryOutcome execute(const KnowledgeGraphConfig& kg,
                                       std::string_view sparql,
                                       std::optional<std::chrono::milliseconds> timeout = std::nullopt) const;

    /// Same client with a different materialization cap.
    [[nodiscard]] SparqlClient with_row_cap(std::size_t row_cap) const;

    [[nodiscard]] const SparqlClientOptions& options() const noexcept { return _options; }
    [[nodiscard]] SparqlTransport& transport() const noexcept { return *_transport; }

  private:
    std::shared_ptr<SparqlTransport> _transport;
    SparqlClientOptions _options;
};

struct RenderedTable
{
    std::string text;
    std::set<std::string> iris; // absolute IRIs that appear in `text`
};

inline constexpr std::size_t render_edge = 5;  // rows/columns shown at each end
inline constexpr std::size_t render_limit = 10; // tables up to this size render in full

/// Renders a table for the model: header, at most 5 leading and 5 trailing
/// rows (and columns) around an ellipsis, and a totals footer.
RenderedTable render_table(const ResultTable& table, const PrefixTable& prefixes = {});

/// Renders one cell: prefixed/bracketed IRIs, quoted literals with language
/// or non-string datatype, `_:id` blanks, empty for unbound.
std::string render_cell(const Cell& cell, const PrefixTable& prefixes, std::set<std::string>* iris = nullptr);

} // namespace kgq
