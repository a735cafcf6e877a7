// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "oracles.hpp"
#include "test_support.hpp"

#include <kgq/error.hpp>
#include <kgq/keyword_index.hpp>

using namespace kgq;
using namespace kgq::testing;

namespace
{

std::vector<ItemRecord> people()
{
    return {
        item("http://example.org/PeterFalk", "Peter Falk", 40),
        item("http://example.org/CarlosAlberto", "Carlos Alberto", 30),
        item("http://example.org/AlbertEinstein", "Albert Einstein", 20),
        item("http://example.org/AlbertFinney", "Albert Finney", 10),
    };
}

std::vector<std::string> labels(const KeywordSearchResult& r)
{
    std::vector<std::string> out;
    for (const auto& h: r.hits)
        out.push_back(h.item.label);
    return out;
}

} // namespace

TEST_CASE("alias scoring: exact 2, proper prefix 1")
{
    std::vector<std::string> const alias { "albert", "einstein" };
    CHECK(score_alias(std::vector<std::string> { "albert" }, alias) == 2);
    CHECK(score_alias(std::vector<std::string> { "alb" }, alias) == 1);
    CHECK(score_alias(std::vector<std::string> { "albert", "e" }, alias) == 3);
    CHECK(score_alias(std::vector<std::string> { "zzz" }, alias) == 0);
    CHECK(score_alias(std::vector<std::string> { "einsteins" }, alias) == 0);
}

TEST_CASE("Albert E ranks Einstein, Finney, Alberto and drops Falk")
{
    auto const index = KeywordIndex::build(people());
    auto const r = index.search("Albert E");
    CHECK(labels(r) == std::vector<std::string> { "Albert Einstein", "Albert Finney", "Carlos Alberto" });
    REQUIRE(r.hits.size() == 3);
    CHECK(r.hits[0].match_score == 3);
    CHECK(r.hits[1].match_score == 2);
    CHECK(r.hits[2].match_score == 1);
    CHECK(r.hits[0].rank == 1);
    CHECK(r.hits[2].rank == 3);
    CHECK_FALSE(r.approximate);
}

TEST_CASE("ties break by popularity then IRI")
{
    auto const index = KeywordIndex::build({
        item("http://x/b", "Same Name", 5),
        item("http://x/a", "Same Name", 5),
        item("http://x/c", "Same Name", 9),
    });
    auto const r = index.search("same name");
    REQUIRE(r.hits.size() == 3);
    CHECK(r.hits[0].item.iri == "http://x/c");
    CHECK(r.hits[1].item.iri == "http://x/a");
    CHECK(r.hits[2].item.iri == "http://x/b");
}

TEST_CASE("best alias wins and synonyms are searchable")
{
    auto const index = KeywordIndex::build({ item("http://x/nips", "NeurIPS", 1, { "Neural Information Processing Systems", "NIPS" }) });
    auto const r = index.search("neural information");
    REQUIRE(r.hits.size() == 1);
    CHECK(r.hits[0].match_score == 4);
    CHECK(r.hits[0].item.synonyms.size() == 2);
}

TEST_CASE("search edge cases")
{
    auto const index = KeywordIndex::build(people());
    CHECK(index.search("").hits.empty());
    CHECK(index.search("!!!").hits.empty());
    CHECK(index.search("albert", 1).hits.size() == 1);
    CHECK_THROWS_AS((void)index.search("albert", 0), Error);
    std::unordered_set<std::string> const only { "http://example.org/AlbertFinney" };
    auto const r = index.search("albert", 10, &only);
    REQUIRE(r.hits.size() == 1);
    CHECK(r.hits[0].item.label == "Albert Finney");
    CHECK(index.find("http://example.org/PeterFalk").has_value());
    CHECK_FALSE(index.find("http://example.org/Nobody").has_value());
}

TEST_CASE("candidate cap marks results approximate")
{
    std::vector<ItemRecord> items;
    for (int i = 0; i < 50; ++i)
        items.push_back(item("http://x/" + std::to_string(100 + i), "token" + std::to_string(100 + i), 1));
    auto index = KeywordIndex::build(items);
    index.set_candidate_cap(10);
    auto const r = index.search("token");
    CHECK(r.approximate);
    CHECK(r.hits.size() <= 10);
}

TEST_CASE("saved index answers like the built one")
{
    TempDir dir;
    auto const built = KeywordIndex::build(people());
    built.save(dir / "people.kwi");
    for (auto storage: { KeywordIndex::Storage::Memory, KeywordIndex::Storage::Mapped })
    {
        auto const loaded = KeywordIndex::open(dir / "people.kwi", storage);
        CHECK(loaded.size() == 4);
        CHECK(labels(loaded.search("Albert E")) == labels(built.search("Albert E")));
        CHECK(loaded.item(*loaded.find("http://example.org/PeterFalk")) == people()[0]);
    }
    write_text(dir / "junk.kwi", "not an index");
    CHECK_THROWS_AS((void)KeywordIndex::open(dir / "junk.kwi"), Error);
    CHECK_THROWS_AS((void)KeywordIndex::open(dir / "missing.kwi"), Error);
}

TEST_CASE("search equals the brute-force oracle on random corpora")
{
    std::mt19937_64 rng(20240611);
    for (int round = 0; round < 25; ++round)
    {
        auto const c = random_keyword_case(rng, 300);
        auto const index = KeywordIndex::build(c.items);
        for (const auto& q: c.queries)
        {
            auto const expected = keyword_oracle(c.items, q, 10);
            auto const actual = index.search(q, 10);
            REQUIRE(actual.hits.size() == expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i)
            {
                CHECK(actual.hits[i].item.iri == expected[i].iri);
                CHECK(actual.hits[i].match_score == static_cast<std::uint32_t>(expected[i].score));
            }
        }
    }
}

TEST_CASE("ranking properties")
{
    std::mt19937_64 rng(7);
    for (int round = 0; round < 20; ++round)
    {
        auto const c = random_keyword_case(rng, 200);
        auto const index = KeywordIndex::build(c.items);
        for (const auto& q: c.queries)
        {
            auto const all = index.search(q, c.items.size());
            for (std::size_t i = 1; i < all.hits.size(); ++i)
            {
                const auto& a = all.hits[i - 1];
                const auto& b = all.hits[i];
                CHECK(a.match_score >= b.match_score);
                if (a.match_score == b.match_score)
                    CHECK(a.item.score >= b.item.score);
            }
            for (const auto& h: all.hits)
                CHECK(h.match_score > 0);
            // Top-k is a prefix of the full ranking.
            auto const top = index.search(q, 3);
            for (std::size_t i = 0; i < top.hits.size(); ++i)
                CHECK(top.hits[i].item.iri == all.hits[i].item.iri);
        }
    }
}
