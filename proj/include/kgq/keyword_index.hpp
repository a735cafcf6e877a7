// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/catalog.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace kgq
{

/// Sum over query tokens: 2 if the token equals some alias token, else 1 if
/// it is a proper prefix of some alias token, else 0.
std::uint32_t score_alias(std::span<const std::string> query_tokens, std::span<const std::string> alias_tokens);

struct KeywordHit
{
    ItemRecord item;
    std::uint32_t match_score = 0;
    std::size_t rank = 0; // 1-based
};

struct KeywordSearchResult
{
    std::vector<KeywordHit> hits;
    bool approximate = false; // candidate cap reached during a prefix scan
};

inline constexpr std::size_t default_candidate_cap = 1'000'000;

/// Prefix-keyword index over item aliases.
///
/// The index is a single little-endian byte image (token dictionary,
/// postings, item table, IRI order). Built indices own the image in memory;
/// opened indices either read it into memory or map the file, and both go
/// through the same lookup code.
///
/// Image layout, all sections 8-byte aligned:
///   header      magic "KGQKWIDX", u32 version, u32 kind, u64 counts and
///               section offsets (see Header in the implementation)
///   tokens      u64 offsets[n_tokens + 1] + UTF-8 blob, sorted bytewise
///   postings    u64 offsets[n_tokens + 1] + {u32 item, u32 alias}[]
///   items       u64 offsets[n_items + 1] + encoded ItemRecord blob
///   scores      u64[n_items]
///   iri_rank    u32[n_items]   rank of each item's IRI in byte order
///   iri_order   u32[n_items]   item ids sorted by IRI
class KeywordIndex
{
  public:
    static constexpr std::uint32_t format_version = 1;

    enum class Storage
    {
        Memory,
        Mapped,
    };

    /// Item ids are positions in `items`. IRIs must be unique.
    static KeywordIndex build(const std::vector<ItemRecord>& items);
    static KeywordIndex open(const std::filesystem::path& path, Storage storage = Storage::Memory);

    KeywordIndex(KeywordIndex&&) noexcept;
    KeywordIndex& operator=(KeywordIndex&&) noexcept;
    ~KeywordIndex();

    void save(const std::filesystem::path& path) const;

    /// Top-k items by (match score desc, popularity desc, IRI asc). When
    /// `restrict_to` is given only those IRIs are candidates.
    [[nodiscard]] KeywordSearchResult search(std::string_view query,
                                             std::size_t k = 10,
                                             const std::unordered_set<std::string>* restrict_to = nullptr) const;

    /// Same as search() with pre-resolved item ids as the candidate filter.
    [[nodiscard]] KeywordSearchResult search_ids(std::string_view query,
                                                 std::size_t k,
                                                 const std::unordered_set<std::uint32_t>* restrict_ids) const;

    [[nodiscard]] std::size_t size() const noexcept;
    [[nodiscard]] std::size_t token_count() const noexcept;
    [[nodiscard]] std::size_t posting_count() const noexcept;
    [[nodiscard]] ItemRecord item(std::uint32_t id) const;
    [[nodiscard]] std::optional<std::uint32_t> find(std::string_view iri) const;

    /// Maximum postings a single query may touch before results are flagged
    /// approximate.
    void set_candidate_cap(std::size_t cap) noexcept { _candidate_cap = cap; }

  private:
    struct Image;
    explicit KeywordIndex(std::unique_ptr<Image> image);

    std::unique_ptr<Image> _image;
    std::size_t _candidate_cap = default_candidate_cap;
};

} // namespace kgq
