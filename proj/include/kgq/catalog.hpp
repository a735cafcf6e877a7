// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/rdf.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kgq
{

enum class ItemKind : std::uint8_t
{
    Entity = 0,
    Property = 1,
};

std::string_view to_string(ItemKind kind);
std::optional<ItemKind> parse_item_kind(std::string_view text);

/// One indexed entity or property.
struct ItemRecord
{
    std::string iri; // absolute
    std::string label;
    std::uint64_t score = 0;
    std::vector<std::string> synonyms;
    std::vector<std::string> infos;
    ItemKind kind = ItemKind::Entity;

    /// Label followed by the synonyms; this is the alias list the keyword
    /// index tokenizes.
    [[nodiscard]] std::vector<std::string_view> aliases() const;

    bool operator==(const ItemRecord&) const = default;
};

struct KnowledgeGraphConfig
{
    std::string name;
    std::string endpoint;
    PrefixTable prefixes;
    std::map<std::string, std::string> headers; // extra HTTP headers, e.g. auth
    std::filesystem::path entity_data_path;
    std::filesystem::path property_data_path;
    std::optional<std::filesystem::path> entity_index_path;
    std::optional<std::filesystem::path> property_index_path;
    std::optional<std::filesystem::path> example_store_path;
    std::string label_property = "http://www.w3.org/2000/01/rdf-schema#label";
};

struct EmbeddingConfig
{
    std::string provider; // "hash" or "http"
    std::string url;
    std::string model;
    std::string api_key_env;
    std::size_t dimension = 64;
};

struct ChatConfig
{
    std::string url;
    std::string model;
    std::string api_key_env;
};

class Catalog
{
  public:
    Catalog() = default;

    /// Throws on duplicate name or malformed endpoint.
    void add(KnowledgeGraphConfig graph);

    [[nodiscard]] const KnowledgeGraphConfig* find(std::string_view name) const;
    [[nodiscard]] const KnowledgeGraphConfig& at(std::string_view name) const;
    [[nodiscard]] const std::vector<KnowledgeGraphConfig>& graphs() const noexcept { return _graphs; }
    [[nodiscard]] bool empty() const noexcept { return _graphs.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return _graphs.size(); }

    std::optional<EmbeddingConfig> embedding;
    std::optional<ChatConfig> chat;

  private:
    std::vector<KnowledgeGraphConfig> _graphs;
};

/// Checks for an absolute http(s) or file URL.
bool is_valid_endpoint_url(std::string_view url);

/// Loads the JSON catalog document. Relative paths inside it resolve against
/// the document's directory. Unknown keys are rejected.
Catalog load_catalog(const std::filesystem::path& path);

struct ItemLoadStats
{
    std::size_t rows = 0;
    std::size_t rejected_empty_label = 0;
};

/// Reads index source TSV (`iri, label, score, synonyms, infos`, one header
/// line). Prefixed IRIs are expanded with `prefixes`. Throws Error{Input} with
/// the 1-based line number on malformed rows or descending-order violations.
std::vector<ItemRecord> load_item_records(const std::filesystem::path& path,
                                          ItemKind kind,
                                          const PrefixTable& prefixes = {},
                                          ItemLoadStats* stats = nullptr);

std::vector<ItemRecord> parse_item_records(std::istream& in,
                                           ItemKind kind,
                                           const PrefixTable& prefixes = {},
                                           ItemLoadStats* stats = nullptr);

/// Writes records in the TSV source format with absolute IRIs.
void write_item_records(std::ostream& out, const std::vector<ItemRecord>& records);

inline constexpr std::uint64_t max_item_score = 0xFFFF'FFFFull;

} // namespace kgq
