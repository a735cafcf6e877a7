// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "mini_store.hpp"
#include "test_support.hpp"

#include <kgq/error.hpp>
#include <kgq/toolbox.hpp>

using namespace kgq;
using namespace kgq::testing;
using json = nlohmann::json;

namespace
{

constexpr auto ex = "http://ex.org/";

struct Fixture
{
    std::shared_ptr<std::vector<std::string>> log = std::make_shared<std::vector<std::string>>();
    std::shared_ptr<EmbeddingProvider> provider = std::make_shared<HashEmbeddingProvider>();
    std::optional<Toolbox> box;

    Fixture()
    {
        PrefixTable p;
        p.add("ex", ex);
        p.add("rdfs", "http://www.w3.org/2000/01/rdf-schema#");
        MiniStore store;
        store.load(R"(
            ex:p1 ex:stream ex:iclr .
            ex:p1 ex:author ex:levine .
            ex:p1 ex:title "Offline RL" .
            ex:p1 ex:year 2021 .
            ex:p2 ex:stream ex:nips .
            ex:p2 ex:author ex:bengio .
            ex:p2 ex:author ex:levine .
            ex:p2 ex:title "Deep Nets" .
            ex:p2 ex:year 2020 .
            ex:p3 ex:stream ex:iclr .
            ex:p3 ex:author ex:bengio .
            ex:p3 ex:title "GFlowNets" .
            ex:p3 ex:year 2023 .
            ex:p4 ex:stream ex:mystery .
            ex:mystery rdfs:label "Mystery Venue"@en .
            ex:mystery rdfs:label "Venue Mystere"@fr .
        )",
                   p);

        auto kg = graph_config("toy");
        kg.prefixes = p;
        Catalog catalog;
        catalog.add(kg);
        box.emplace(catalog, SparqlClient(store.transport(log)), provider);

        GraphResources res;
        res.entities = std::make_shared<KeywordIndex>(KeywordIndex::build({
            item("http://ex.org/nips", "NeurIPS", 90, { "NIPS" }, { "conference" }),
            item("http://ex.org/iclr", "ICLR", 70, {}, { "conference" }),
            item("http://ex.org/bengio", "Yoshua Bengio", 60),
            item("http://ex.org/levine", "Sergey Levine", 50),
            item("http://ex.org/p1", "Offline RL", 5),
            item("http://ex.org/p2", "Deep Nets", 4),
            item("http://ex.org/p3", "GFlowNets", 3),
        }));
        std::vector<ItemRecord> props {
            item("http://ex.org/stream", "published in stream", 10),
            item("http://ex.org/author", "authored by", 9),
            item("http://ex.org/title", "title", 8),
            item("http://ex.org/year", "year of publication", 7),
        };
        for (auto& r: props)
            r.kind = ItemKind::Property;
        res.properties = std::make_shared<VectorIndex>(build_vector_index(props, *provider));
        res.examples = std::make_shared<ExampleStore>(
            std::vector<ExamplePair> {
                { "How many papers appeared at ICLR?", "SELECT (COUNT(?p) AS ?n) WHERE { ?p <http://ex.org/stream> <http://ex.org/iclr> }", "toy" },
                { "Who wrote Deep Nets?", "SELECT ?a WHERE { <http://ex.org/p2> <http://ex.org/author> ?a }", "toy" },
            },
            *provider);
        box->set_resources("toy", res);
    }

    const Toolbox& tb() const { return *box; }
};

std::vector<std::string> hit_iris(const FunctionResult& r)
{
    std::vector<std::string> out;
    for (const auto& h: r.structured.at("hits"))
        out.push_back(h.value("iri", h.value("literal", "")));
    return out;
}

} // namespace

TEST_CASE("execute renders the result and records IRIs")
{
    Fixture f;
    auto const r = f.tb().execute("toy", "SELECT ?p WHERE { ?p <http://ex.org/stream> <http://ex.org/iclr> }");
    CHECK_FALSE(r.is_error);
    CHECK(r.rendered == "?p\nex:p1\nex:p3\n2 rows total, 1 column total");
    CHECK(r.mentioned_iris == std::set<std::string> { "http://ex.org/p1", "http://ex.org/p3" });
    CHECK(r.structured.at("rows") == 2);
    // No prologue is inserted: the query goes out verbatim.
    CHECK(f.log->back() == "SELECT ?p WHERE { ?p <http://ex.org/stream> <http://ex.org/iclr> }");

    auto const ask = f.tb().execute("toy", "ASK WHERE { <http://ex.org/p1> <http://ex.org/year> 2021 }");
    CHECK(ask.rendered == "Result: true");

    auto const bad = f.tb().execute("toy", "SELECT ?p WHERE { ?p");
    CHECK(bad.is_error);
    CHECK(bad.rendered.starts_with("Error"));

    auto const unknown = f.tb().execute("wikidata", "SELECT * WHERE { }");
    CHECK(unknown.is_error);
    CHECK(unknown.rendered == "Error: unknown knowledge graph 'wikidata'; available: toy");
}

TEST_CASE("list with one bound position")
{
    Fixture f;
    auto const r = f.tb().list("toy", TripleConstraints { "ex:p1", std::nullopt, std::nullopt });
    CHECK_FALSE(r.is_error);
    CHECK(f.log->front() == "SELECT ?p ?o WHERE { <http://ex.org/p1> ?p ?o } LIMIT 1001");
    CHECK(r.rendered.starts_with("Showing 4 of 4 matching triples:\n"));
    CHECK(r.rendered.find("ex:p1 (Offline RL) ex:stream (published in stream) ex:iclr (ICLR)") != std::string::npos);
    CHECK(r.rendered.find("ex:p1 (Offline RL) ex:title (title) \"Offline RL\"") != std::string::npos);
    CHECK(r.mentioned_iris.count("http://ex.org/iclr") == 1);
    CHECK(r.structured.at("candidates") == 4);
}

TEST_CASE("list with all positions bound checks existence")
{
    Fixture f;
    auto const yes = f.tb().list("toy", TripleConstraints { "ex:p1", "ex:author", "ex:levine" });
    CHECK(yes.rendered == "1 triple:\nex:p1 (Offline RL) ex:author (authored by) ex:levine (Sergey Levine)");
    CHECK(f.log->back() == "ASK WHERE { <http://ex.org/p1> <http://ex.org/author> <http://ex.org/levine> }");
    auto const no = f.tb().list("toy", TripleConstraints { "ex:p3", "ex:author", "ex:levine" });
    CHECK(no.rendered == "no triples found");
    CHECK_FALSE(no.is_error);
    auto const literal = f.tb().list("toy", TripleConstraints { std::nullopt, "ex:year", "2021" });
    CHECK(literal.rendered.find("ex:p1 (Offline RL) ex:year (year of publication) 2021") != std::string::npos);
    auto const invalid = f.tb().list("toy", TripleConstraints { "not an iri", std::nullopt, std::nullopt });
    CHECK(invalid.is_error);
}

TEST_CASE("unconstrained list stays within ten diverse triples")
{
    Fixture f;
    auto const r = f.tb().list("toy", {});
    CHECK(r.structured.at("triples").size() == 10);
    CHECK(r.rendered.starts_with("Showing 10 of 16 matching triples:"));
    // Grouped by property: every property shows up.
    for (auto p: { "ex:stream", "ex:author", "ex:title", "ex:year", "rdfs:label" })
        CHECK(r.rendered.find(p) != std::string::npos);
}

TEST_CASE("entity search ranks by the keyword index")
{
    Fixture f;
    auto const r = f.tb().search_entity("toy", "ICLR");
    REQUIRE(hit_iris(r).size() == 1);
    CHECK(r.rendered == "1. ICLR (ex:iclr) — conference");
    CHECK(r.mentioned_iris == std::set<std::string> { "http://ex.org/iclr" });
    auto const nips = f.tb().search_entity("toy", "nips");
    CHECK(hit_iris(nips).front() == "http://ex.org/nips");
    CHECK(f.tb().search_entity("toy", "qqqq").rendered == "no results");
    CHECK(f.log->empty());
}

TEST_CASE("property search ranks by similarity")
{
    Fixture f;
    auto const r = f.tb().search_property("toy", "published in stream");
    auto const iris = hit_iris(r);
    REQUIRE(iris.size() == 4);
    CHECK(iris.front() == "http://ex.org/stream");
    CHECK(r.rendered.starts_with("1. published in stream (ex:stream)"));
}

TEST_CASE("properties of an entity")
{
    Fixture f;
    auto const r = f.tb().search_property_of_entity("toy", "authored by", "ex:p2");
    CHECK(f.log->front() == "SELECT DISTINCT ?p WHERE { <http://ex.org/p2> ?p ?o } LIMIT 10001");
    auto const iris = hit_iris(r);
    CHECK(std::set<std::string>(iris.begin(), iris.end()) ==
          std::set<std::string> { "http://ex.org/stream", "http://ex.org/author", "http://ex.org/title", "http://ex.org/year" });
    CHECK(iris.front() == "http://ex.org/author");
    CHECK(f.tb().search_property_of_entity("toy", "x", "ex:nothing").rendered == "entity has no properties");
}

TEST_CASE("objects of a property")
{
    Fixture f;
    auto const r = f.tb().search_object_of_property("toy", "Levine", "ex:author");
    CHECK(f.log->front() == "SELECT DISTINCT ?o WHERE { ?s <http://ex.org/author> ?o } LIMIT 100001");
    CHECK(hit_iris(r) == std::vector<std::string> { "http://ex.org/levine" });

    // Unindexed objects are labelled from the endpoint.
    auto const m = f.tb().search_object_of_property("toy", "mystery", "ex:stream");
    CHECK(hit_iris(m) == std::vector<std::string> { "http://ex.org/mystery" });
    CHECK(m.rendered == "1. Mystery Venue (ex:mystery)");
    CHECK(f.log->back().find("VALUES ?item { <http://ex.org/mystery> }") != std::string::npos);

    auto const lit = f.tb().search_object_of_property("toy", "deep nets", "ex:title");
    CHECK(lit.rendered == "1. \"Deep Nets\"");
}

TEST_CASE("autocomplete rewrite")
{
    CHECK(autocomplete_query("PREFIX ex: <http://ex.org/>\nSELECT ?x WHERE { ?x ex:author ?search } ORDER BY ?x", 100) ==
          "PREFIX ex: <http://ex.org/>\nSELECT ?search WHERE { SELECT DISTINCT ?search WHERE { ?x ex:author ?search } ORDER BY ?x } LIMIT 101");
    std::string problem;
    CHECK_FALSE(autocomplete_query("ASK { ?search ?p ?o }", 10, &problem).has_value());
    CHECK(problem == "query must be a SELECT query");
    CHECK_FALSE(autocomplete_query("SELECT ?x WHERE { ?x ?p ?o }", 10, &problem).has_value());
    CHECK(problem == "query must contain variable ?search");
}

TEST_CASE("autocomplete search")
{
    Fixture f;
    auto const r = f.tb().search_autocomplete("toy", "bengio", "SELECT ?x WHERE { ?x <http://ex.org/stream> <http://ex.org/iclr> . ?x <http://ex.org/author> ?search }");
    CHECK(hit_iris(r) == std::vector<std::string> { "http://ex.org/bengio" });
    auto const props = f.tb().search_autocomplete("toy", "title", "SELECT ?x WHERE { <http://ex.org/p1> ?search ?x }");
    CHECK(hit_iris(props).front() == "http://ex.org/title");
    auto const bad = f.tb().search_autocomplete("toy", "x", "SELECT ?x WHERE { ?x ?p ?o }");
    CHECK(bad.is_error);
}

TEST_CASE("constrained search")
{
    Fixture f;
    auto const r = f.tb().search_constrained("toy", "2021", TriplePosition::Object, TripleConstraints { std::nullopt, "ex:year", std::nullopt });
    CHECK(f.log->front() == "SELECT DISTINCT ?search WHERE { ?s <http://ex.org/year> ?search } LIMIT 100001");
    CHECK(hit_iris(r) == std::vector<std::string> { "2021" });

    auto const subj = f.tb().search_constrained("toy", "offline", TriplePosition::Subject, TripleConstraints { std::nullopt, "ex:stream", "ex:iclr" });
    CHECK(hit_iris(subj) == std::vector<std::string> { "http://ex.org/p1" });

    auto const bound = f.tb().search_constrained("toy", "x", TriplePosition::Object, TripleConstraints { std::nullopt, std::nullopt, "ex:iclr" });
    CHECK(bound.is_error);

    auto const free = f.tb().search_constrained("toy", "ICLR", TriplePosition::Subject, {});
    CHECK(free.rendered == f.tb().search_entity("toy", "ICLR").rendered);
}

TEST_CASE("examples")
{
    Fixture f;
    auto const r = f.tb().find_similar_examples("toy", "Who wrote Deep Nets?", 1);
    CHECK(r.rendered == "Example 1:\nQuestion: Who wrote Deep Nets?\nSPARQL:\nSELECT ?a WHERE { <http://ex.org/p2> <http://ex.org/author> ?a }");
    CHECK(r.mentioned_iris.count("http://ex.org/p2") == 1);
    std::mt19937_64 rng(3);
    auto const random = f.tb().find_examples("toy", rng, 5);
    CHECK(random.structured.at("examples").size() == 2);
}

TEST_CASE("invoke validates arguments")
{
    Fixture f;
    std::mt19937_64 rng(1);
    auto const missing = f.tb().invoke(FunctionId::SearchEntity, json { { "query", "x" } }, rng);
    CHECK(missing.rendered == "Error: missing required argument 'kg' for search_entity");
    auto const typed = f.tb().invoke(FunctionId::SearchEntity, json { { "kg", "toy" }, { "query", 3 } }, rng);
    CHECK(typed.rendered == "Error: argument 'query' of search_entity must be a string");
    auto const pos = f.tb().invoke(FunctionId::SearchConstrained, json { { "kg", "toy" }, { "query", "x" }, { "pos", "middle" } }, rng);
    CHECK(pos.rendered == "Error: pos must be one of subj, prop, obj (got 'middle')");
    auto const ok = f.tb().invoke(FunctionId::SearchConstrained,
                                  json { { "kg", "toy" }, { "query", "2021" }, { "pos", "obj" }, { "constraints", R"({"prop":"ex:year"})" } }, rng);
    CHECK(hit_iris(ok) == std::vector<std::string> { "2021" });
    CHECK(f.tb().invoke(FunctionId::Execute, json::array(), rng).is_error);
    CHECK_THROWS_AS((void)f.tb().invoke(FunctionId::Answer, json::object(), rng), Error);
}

TEST_CASE("resources come from the catalog")
{
    auto catalog = load_catalog(configured_fixture("dblp/catalog.json"));
    auto const box = Toolbox::open(catalog, SparqlClient(std::make_shared<RoutingTransport>()), make_embedding_provider(catalog.embedding));
    const auto* res = box.resources("dblp");
    REQUIRE(res != nullptr);
    CHECK(res->entities->size() > 5);
    CHECK(res->properties->size() == 5);
    CHECK(res->examples->size() == 4);

    auto no_embed = load_catalog(configured_fixture("dblp/catalog_no_embedding.json"));
    auto const plain = Toolbox::open(no_embed, SparqlClient(std::make_shared<RoutingTransport>()), nullptr);
    CHECK(plain.resources("dblp")->entities != nullptr);
    CHECK(plain.resources("dblp")->properties == nullptr);
    CHECK_THROWS_AS((void)plain.search_property("dblp", "published"), Error);
}
