// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kgq
{

struct Prefix
{
    std::string name;
    std::string base;

    bool operator==(const Prefix&) const = default;
};

/// Ordered prefix table of one knowledge graph. The well-known vocabularies
/// (rdf, rdfs, xsd, owl) resolve even when not declared.
class PrefixTable
{
  public:
    PrefixTable() = default;
    explicit PrefixTable(std::vector<Prefix> prefixes);

    /// Adds a prefix; throws on a duplicate name.
    void add(std::string name, std::string base);

    /// Expands `wd:Q42`, `<http://...>` or an absolute IRI to absolute form.
    /// Returns nullopt for unknown prefixes or text that is not an IRI.
    [[nodiscard]] std::optional<std::string> expand(std::string_view term) const;

    /// Shortens an absolute IRI to `prefix:local` when a declared prefix
    /// matches and the local part is a plain name, else `<iri>`.
    [[nodiscard]] std::string shorten(std::string_view iri) const;

    [[nodiscard]] const std::vector<Prefix>& entries() const noexcept { return _prefixes; }
    [[nodiscard]] std::optional<std::string_view> base_of(std::string_view name) const;

  private:
    std::vector<Prefix> _prefixes;
};

/// Prefixes every table falls back to.
const std::vector<Prefix>& well_known_prefixes();

/// True if `iri` lives in the rdf, rdfs, xsd or owl namespace.
bool is_well_known_vocabulary(std::string_view iri);

/// Heuristic check for an absolute IRI (`scheme:` followed by something,
/// scheme per RFC 3986, and either `//` or a `urn:`/`mailto:` style scheme).
bool looks_like_absolute_iri(std::string_view text);

/// Local name of an IRI: text after the last '/', '#' or ':'.
std::string_view iri_local_name(std::string_view iri);

/// Extracts the IRIs a SPARQL query references: `<...>` terms and prefixed
/// names whose prefix is declared in the query prologue or in `table`.
/// String literals and comments are skipped. Results are absolute IRIs.
std::set<std::string> extract_query_iris(std::string_view sparql, const PrefixTable& table);

/// True if `local` may follow `prefix:` without escaping.
bool is_plain_local_name(std::string_view local);

} // namespace kgq
