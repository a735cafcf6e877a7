// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "oracles.hpp"

#include <kgq/functions.hpp>

using namespace kgq;
using namespace kgq::testing;

namespace
{

std::set<std::string> mnemonics(const std::set<FunctionId>& ids)
{
    std::set<std::string> out;
    for (auto id: ids)
        out.insert(function_spec(id).mnemonic);
    return out;
}

std::set<std::string> schema_names(const nlohmann::json& schemas)
{
    std::set<std::string> out;
    for (const auto& s: schemas)
        out.insert(s.at("function").at("name").get<std::string>());
    return out;
}

} // namespace

TEST_CASE("twelve functions with unique names and mnemonics")
{
    const auto& specs = function_specs();
    REQUIRE(specs.size() == function_count);
    std::set<std::string> names, mnems;
    for (std::size_t i = 0; i < specs.size(); ++i)
    {
        CHECK(static_cast<std::size_t>(specs[i].id) == i);
        CHECK(specs[i].mnemonic.size() == 3);
        names.insert(specs[i].name);
        mnems.insert(specs[i].mnemonic);
        CHECK(function_by_name(specs[i].name) == specs[i].id);
        CHECK(function_by_mnemonic(specs[i].mnemonic) == specs[i].id);
    }
    CHECK(names.size() == function_count);
    CHECK(mnems.size() == function_count);
    CHECK_FALSE(function_by_name("drop_graph").has_value());
}

TEST_CASE("tool names")
{
    CHECK(function_spec(FunctionId::Answer).name == "answer");
    CHECK(function_spec(FunctionId::Cancel).name == "cancel");
    CHECK(function_spec(FunctionId::Execute).name == "execute");
    CHECK(function_spec(FunctionId::List).name == "list");
    CHECK(function_spec(FunctionId::SearchEntity).name == "search_entity");
    CHECK(function_spec(FunctionId::SearchProperty).name == "search_property");
    CHECK(function_spec(FunctionId::SearchPropertyOfEntity).name == "search_property_of_entity");
    CHECK(function_spec(FunctionId::SearchObjectOfProperty).name == "search_object_of_property");
    CHECK(function_spec(FunctionId::SearchAutocomplete).name == "search_autocomplete");
    CHECK(function_spec(FunctionId::SearchConstrained).name == "search_constrained");
    CHECK(function_spec(FunctionId::FindSimilarExamples).name == "find_similar_examples");
    CHECK(function_spec(FunctionId::FindExamples).name == "find_examples");
}

TEST_CASE("function set closure")
{
    for (std::string code: { "b", "s", "se", "sa", "sc" })
    {
        auto const id = parse_function_set(code);
        REQUIRE(id.has_value());
        CHECK(to_string(*id) == code);
        for (auto mode: { FewShotMode::None, FewShotMode::Similar, FewShotMode::Random })
        {
            CAPTURE(code);
            auto const members = function_set_members(*id, mode);
            auto const expected = expected_function_set(code, mode == FewShotMode::None ? "" : std::string(to_string(mode)));
            CHECK(mnemonics(members) == expected);

            std::set<std::string> expected_names;
            for (const auto& m: expected)
                expected_names.insert(function_spec(*function_by_mnemonic(m)).name);
            auto const schemas = tool_schemas(members);
            CHECK(schemas.size() == members.size());
            CHECK(schema_names(schemas) == expected_names);
        }
    }
    CHECK_FALSE(parse_function_set("x").has_value());
    CHECK(parse_few_shot_mode("similar") == FewShotMode::Similar);
    CHECK(parse_few_shot_mode("random") == FewShotMode::Random);
    CHECK(parse_few_shot_mode("none") == FewShotMode::None);
    CHECK_FALSE(parse_few_shot_mode("all").has_value());
}

TEST_CASE("tool schemas declare typed, required parameters")
{
    for (const auto& spec: function_specs())
    {
        auto const s = spec.tool_schema();
        CHECK(s.at("type") == "function");
        const auto& params = s.at("function").at("parameters");
        CHECK(params.at("type") == "object");
        for (const auto& p: spec.parameters)
        {
            CHECK(params.at("properties").contains(p.name));
            auto const& req = params.at("required");
            bool const listed = std::find(req.begin(), req.end(), p.name) != req.end();
            CHECK(listed == p.required);
        }
    }
    auto const ans = function_spec(FunctionId::Answer).tool_schema();
    auto const& props = ans.at("function").at("parameters").at("properties");
    CHECK(props.contains("kg"));
    CHECK(props.contains("sparql"));
    CHECK(props.contains("answer"));
}
