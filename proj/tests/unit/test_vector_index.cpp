// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "oracles.hpp"
#include "test_support.hpp"

#include <kgq/error.hpp>
#include <kgq/vector_index.hpp>

#include <cmath>
#include <set>

using namespace kgq;
using namespace kgq::testing;

namespace
{

std::vector<ItemRecord> random_items(std::mt19937_64& rng, std::size_t n)
{
    std::vector<ItemRecord> items;
    std::uniform_int_distribution<int> word(0, 40);
    for (std::size_t i = 0; i < n; ++i)
    {
        // Repeated labels produce exact similarity ties.
        items.push_back(item("http://example.org/p" + std::to_string(i), "w" + std::to_string(word(rng)) + " w" + std::to_string(word(rng)), rng() % 5));
    }
    return items;
}

} // namespace

TEST_CASE("hash provider is deterministic and sized")
{
    HashEmbeddingProvider p;
    CHECK(p.dimension() == 64);
    std::vector<std::string> const texts { "published in", "published in", "authored by" };
    auto const v = p.embed(texts);
    REQUIRE(v.size() == 3);
    CHECK(v[0].size() == 64);
    CHECK(v[0] == v[1]);
    CHECK(v[0] != v[2]);
}

TEST_CASE("normalize gives unit length and leaves zero vectors alone")
{
    Vector v { 3.0f, 4.0f };
    normalize(v);
    CHECK(v[0] == doctest::Approx(0.6));
    CHECK(v[1] == doctest::Approx(0.8));
    Vector z { 0.0f, 0.0f };
    normalize(z);
    CHECK(z == Vector { 0.0f, 0.0f });
}

TEST_CASE("item text includes up to three infos")
{
    CHECK(embed_item_text(item("http://x/p", "title", 1)) == "title");
    CHECK(embed_item_text(item("http://x/p", "title", 1, {}, { "a", "b", "c", "d" })) == "title (a; b; c)");
}

TEST_CASE("search equals exhaustive cosine ranking")
{
    std::mt19937_64 rng(99);
    SeededProvider provider(16);
    for (int round = 0; round < 10; ++round)
    {
        auto const items = random_items(rng, 1 + rng() % 800);
        auto const index = build_vector_index(items, provider, 64);
        std::vector<Vector> raw;
        for (const auto& it: items)
            raw.push_back(provider.raw(embed_item_text(it)));
        for (int q = 0; q < 3; ++q)
        {
            auto const query = "w" + std::to_string(rng() % 41);
            auto const expected = cosine_oracle(raw, provider.raw(query));
            auto const hits = index.search(query, provider, 10);
            REQUIRE(hits.size() == std::min<std::size_t>(10, items.size()));
            for (std::size_t i = 0; i < hits.size(); ++i)
            {
                CHECK(hits[i].rank == i + 1);
                CHECK(std::abs(hits[i].similarity - expected[i].similarity) <= 1e-6);
                auto const pos = static_cast<std::size_t>(index.find(hits[i].item.iri) - index.items().data());
                CHECK(std::abs(cosine(raw[pos], provider.raw(query)) - expected[i].similarity) <= 1e-6);
            }
            std::set<std::string> distinct;
            for (const auto& h: hits)
                distinct.insert(h.item.iri);
            CHECK(distinct.size() == hits.size());
        }
    }
}

TEST_CASE("equal similarities break by popularity then IRI")
{
    SeededProvider provider(8);
    auto const index = build_vector_index({ item("http://x/b", "same", 1), item("http://x/a", "same", 1), item("http://x/c", "same", 2) }, provider);
    auto const hits = index.search("same", provider, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].item.iri == "http://x/c");
    CHECK(hits[1].item.iri == "http://x/a");
    CHECK(hits[2].item.iri == "http://x/b");
}

TEST_CASE("restriction, persistence and provider mismatch")
{
    TempDir dir;
    HashEmbeddingProvider provider;
    std::vector<ItemRecord> const items { item("http://x/title", "title", 3), item("http://x/year", "year of publication", 2),
                                          item("http://x/stream", "published in stream", 1) };
    auto const index = build_vector_index(items, provider);
    std::unordered_set<std::string> const only { "http://x/year" };
    auto const restricted = index.search("published", provider, 5, &only);
    REQUIRE(restricted.size() == 1);
    CHECK(restricted[0].item.iri == "http://x/year");

    index.save(dir / "p.vec");
    auto const loaded = VectorIndex::open(dir / "p.vec");
    CHECK(loaded.items() == index.items());
    CHECK(loaded.matrix().data() == index.matrix().data());
    auto const a = index.search("published in", provider, 3);
    auto const b = loaded.search("published in", provider, 3);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].item.iri == b[i].item.iri);

    SeededProvider other(64);
    CHECK_THROWS_AS((void)loaded.search("x", other, 3), Error);
    CHECK_THROWS_AS((void)index.search("x", provider, 0), Error);
}

TEST_CASE("example store")
{
    HashEmbeddingProvider provider;
    auto const pairs = load_example_pairs(fixture("dblp/examples.jsonl"), "dblp");
    REQUIRE(pairs.size() == 4);
    ExampleStore const store(pairs, provider);
    auto const similar = store.find_similar(pairs[2].question, provider, 2);
    REQUIRE(similar.size() == 2);
    CHECK(*similar[0] == pairs[2]);

    std::mt19937_64 rng1(5), rng2(5);
    auto const d1 = store.draw_random(rng1, 3);
    auto const d2 = store.draw_random(rng2, 3);
    REQUIRE(d1.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(d1[i] == d2[i]);
    CHECK(store.draw_random(rng1, 10).size() == 4);
}

TEST_CASE("draw without replacement is a sample of distinct indices")
{
    std::mt19937_64 rng(1);
    for (std::size_t n = 0; n < 30; ++n)
        for (std::size_t k = 0; k <= n + 2; ++k)
        {
            auto const d = draw_without_replacement(n, k, rng);
            CHECK(d.size() == std::min(n, k));
            std::set<std::size_t> const s(d.begin(), d.end());
            CHECK(s.size() == d.size());
            for (auto i: d)
                CHECK(i < n);
        }
}
