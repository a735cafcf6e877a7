// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <kgq/catalog.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgq
{

using Vector = std::vector<float>;

class EmbeddingProvider
{
  public:
    virtual ~EmbeddingProvider() = default;

    /// One vector per input text, each of dimension(). Vectors need not be
    /// normalized; callers normalize.
    virtual std::vector<Vector> embed(std::span<const std::string> texts) = 0;
    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual std::size_t dimension() const = 0;
};

/// Deterministic offline provider: every token of the text (see tokenize())
/// is hashed with FNV-1a into one of `dimension` buckets; the bucket counts
/// form the vector. Text without tokens hashes the empty string instead so
/// that every vector has unit norm after normalization.
class HashEmbeddingProvider final: public EmbeddingProvider
{
  public:
    explicit HashEmbeddingProvider(std::size_t dimension = 64);

    std::vector<Vector> embed(std::span<const std::string> texts) override;
    [[nodiscard]] std::string id() const override;
    [[nodiscard]] std::size_t dimension() const override { return _dimension; }

  private:
    std::size_t _dimension;
};

/// Remote provider speaking the common embeddings wire format:
/// POST {"model", "input": [texts]} -> {"data": [{"index", "embedding"}]}.
class HttpEmbeddingProvider final: public EmbeddingProvider
{
  public:
    HttpEmbeddingProvider(std::string url, std::string model, std::string api_key, std::size_t dimension, int max_attempts = 3);

    std::vector<Vector> embed(std::span<const std::string> texts) override;
    [[nodiscard]] std::string id() const override { return "http:" + _model; }
    [[nodiscard]] std::size_t dimension() const override { return _dimension; }

  private:
    std::string _url;
    std::string _model;
    std::string _api_key;
    std::size_t _dimension;
    int _max_attempts;
};

/// Builds the provider described by the catalog (`hash` or `http`), or
/// nullptr when none is configured.
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::optional<EmbeddingConfig>& config);

/// Scales to unit L2 norm; zero vectors are left unchanged.
void normalize(Vector& v);

/// Text embedded for an item: the label, followed by up to three infos in
/// parentheses separated by "; ".
std::string embed_item_text(const ItemRecord& item);

inline constexpr std::size_t max_embedded_infos = 3;

/// Row-major matrix of unit vectors with the provider recorded at build time.
class SimilarityMatrix
{
  public:
    SimilarityMatrix() = default;
    SimilarityMatrix(std::string provider_id, std::size_t dimension, std::vector<float> data);

    /// Embeds `texts` in batches and normalizes. Throws Error on provider
    /// failure (naming the batch) or dimension mismatch.
    static SimilarityMatrix build(std::span<const std::string> texts, EmbeddingProvider& provider, std::size_t batch = 256);

    [[nodiscard]] std::size_t rows() const noexcept { return _dimension == 0 ? 0 : _data.size() / _dimension; }
    [[nodiscard]] std::size_t dimension() const noexcept { return _dimension; }
    [[nodiscard]] const std::string& provider_id() const noexcept { return _provider_id; }
    [[nodiscard]] std::span<const float> row(std::size_t i) const { return { _data.data() + i * _dimension, _dimension }; }
    [[nodiscard]] const std::vector<float>& data() const noexcept { return _data; }

    /// Embeds and normalizes `text` after checking the provider id.
    [[nodiscard]] Vector embed_query(std::string_view text, EmbeddingProvider& provider) const;

    /// Dot products of `query` with every row.
    [[nodiscard]] std::vector<double> similarities(std::span<const float> query) const;

  private:
    std::string _provider_id;
    std::size_t _dimension = 0;
    std::vector<float> _data;
};

struct SimilarityHit
{
    ItemRecord item;
    double similarity = 0.0;
    std::size_t rank = 0; // 1-based
};

/// Exact cosine search over item records.
class VectorIndex
{
  public:
    static constexpr std::uint32_t format_version = 1;

    VectorIndex() = default;
    VectorIndex(SimilarityMatrix matrix, std::vector<ItemRecord> items);

    static VectorIndex open(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Hits ordered by similarity desc, popularity desc, IRI asc; the
    /// `restrict_to` filter applies before top-k.
    [[nodiscard]] std::vector<SimilarityHit> search(std::string_view query,
                                                    EmbeddingProvider& provider,
                                                    std::size_t k = 10,
                                                    const std::unordered_set<std::string>* restrict_to = nullptr) const;

    [[nodiscard]] std::size_t size() const noexcept { return _items.size(); }
    [[nodiscard]] const std::vector<ItemRecord>& items() const noexcept { return _items; }
    [[nodiscard]] const SimilarityMatrix& matrix() const noexcept { return _matrix; }
    [[nodiscard]] const ItemRecord* find(std::string_view iri) const;

  private:
    SimilarityMatrix _matrix;
    std::vector<ItemRecord> _items;
    std::unordered_map<std::string, std::size_t> _by_iri;
};

/// One vector per item from embed_item_text(), in input order.
VectorIndex build_vector_index(const std::vector<ItemRecord>& items, EmbeddingProvider& provider, std::size_t batch = 256);

struct ExamplePair
{
    std::string question;
    std::string sparql;
    std::string kg;

    bool operator==(const ExamplePair&) const = default;
};

/// Line-delimited JSON records {"question", "sparql", "kg"?}; `default_kg`
/// fills a missing kg.
std::vector<ExamplePair> load_example_pairs(const std::filesystem::path& path, const std::string& default_kg);

/// Question-SPARQL pairs with a similarity index over the questions.
class ExampleStore
{
  public:
    ExampleStore(std::vector<ExamplePair> pairs, EmbeddingProvider& provider);

    /// Top-k pairs by question similarity (desc), ties by store order.
    [[nodiscard]] std::vector<const ExamplePair*> find_similar(std::string_view question, EmbeddingProvider& provider, std::size_t k = 3) const;

    /// k pairs drawn without replacement, in draw order.
    [[nodiscard]] std::vector<const ExamplePair*> draw_random(std::mt19937_64& rng, std::size_t k = 3) const;

    [[nodiscard]] std::size_t size() const noexcept { return _pairs.size(); }
    [[nodiscard]] const std::vector<ExamplePair>& pairs() const noexcept { return _pairs; }

  private:
    std::vector<ExamplePair> _pairs;
    SimilarityMatrix _matrix;
};

/// Partial Fisher-Yates: the first `k` positions of a uniformly shuffled
/// 0..n-1, in draw order. Shared by few-shot and benchmark sampling.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng);

} // namespace kgq
