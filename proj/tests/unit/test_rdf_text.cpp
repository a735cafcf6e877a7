// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <kgq/error.hpp>
#include <kgq/rdf.hpp>
#include <kgq/text.hpp>

using namespace kgq;

namespace
{

PrefixTable dblp_prefixes()
{
    PrefixTable t;
    t.add("dblp", "https://dblp.org/rdf/schema#");
    t.add("conf", "https://dblp.org/streams/conf/");
    return t;
}

} // namespace

TEST_CASE("prefix table expands and shortens")
{
    auto t = dblp_prefixes();
    CHECK(t.expand("conf:iclr") == "https://dblp.org/streams/conf/iclr");
    CHECK(t.expand("<https://example.org/x>") == "https://example.org/x");
    CHECK_FALSE(t.expand("nope:x").has_value());
    CHECK(t.shorten("https://dblp.org/streams/conf/iclr") == "conf:iclr");
    CHECK(t.shorten("https://example.org/x") == "<https://example.org/x>");
    CHECK_THROWS_AS(t.add("conf", "https://other/"), Error);
}

TEST_CASE("well-known vocabularies")
{
    CHECK(is_well_known_vocabulary("http://www.w3.org/2000/01/rdf-schema#label"));
    CHECK(is_well_known_vocabulary("http://www.w3.org/2001/XMLSchema#integer"));
    CHECK(is_well_known_vocabulary("http://www.w3.org/1999/02/22-rdf-syntax-ns#type"));
    CHECK(is_well_known_vocabulary("http://www.w3.org/2002/07/owl#sameAs"));
    CHECK_FALSE(is_well_known_vocabulary("https://dblp.org/rdf/schema#title"));
}

TEST_CASE("query IRIs come from brackets, prefixed names and declarations")
{
    auto const q = "PREFIX ex: <http://ex.org/>\n"
                   "SELECT ?x WHERE { ?x ex:p conf:iclr . ?x <http://other.org/q> \"conf:notaniri\" }";
    auto const iris = extract_query_iris(q, dblp_prefixes());
    CHECK(iris.count("http://ex.org/p") == 1);
    CHECK(iris.count("https://dblp.org/streams/conf/iclr") == 1);
    CHECK(iris.count("http://other.org/q") == 1);
    CHECK(iris.count("https://dblp.org/streams/conf/notaniri") == 0);
}

TEST_CASE("local names")
{
    CHECK(iri_local_name("https://dblp.org/rdf/schema#title") == "title");
    CHECK(iri_local_name("https://dblp.org/streams/conf/iclr") == "iclr");
    CHECK(is_plain_local_name("Q42"));
    CHECK_FALSE(is_plain_local_name("a/b"));
}

TEST_CASE("tokenize lowercases and splits on non-alphanumerics")
{
    CHECK(tokenize("Albert E") == std::vector<std::string> { "albert", "e" });
    CHECK(tokenize("  NeurIPS-2024, (Vancouver) ") == std::vector<std::string> { "neurips", "2024", "vancouver" });
    CHECK(tokenize("Ärzte ohne Grenzen") == std::vector<std::string> { "ärzte", "ohne", "grenzen" });
    // Decomposed and precomposed forms tokenize identically.
    CHECK(tokenize("Jose\xCC\x81") == tokenize("Jos\xC3\xA9"));
    CHECK(tokenize("").empty());
}

TEST_CASE("string helpers")
{
    CHECK(trim("  a b \t") == "a b");
    CHECK(split("a;b;;c", ';').size() == 4);
    CHECK(join({ "x", "y" }, ", ") == "x, y");
    CHECK(normalize_whitespace("  SELECT\n\t?x  WHERE {} ") == "SELECT ?x WHERE {}");
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(hex64(0xabcull) == "0000000000000abc");
}
