// SPDX-License-Identifier: Apache-2.0
#include <kgq/functions.hpp>

#include <stdexcept>

namespace kgq
{

using json = nlohmann::json;

namespace
{

ParameterSpec param(std::string name, std::string description, bool required = true)
{
    return ParameterSpec { std::move(name), "string", std::move(description), required, {}, {} };
}

ParameterSpec kg_param()
{
    return param("kg", "Name of the knowledge graph to use.");
}

std::vector<FunctionSpec> make_specs()
{
    std::vector<FunctionSpec> specs;
    specs.push_back({ FunctionId::Answer,
                      "ANS",
                      "answer",
                      "Provide the final SPARQL query sparql over the knowledge graph kg together with a human-readable answer to "
                      "the question. Calling this function stops the generation process.",
                      { kg_param(),
                        param("sparql", "The final SPARQL query."),
                        param("answer", "Human-readable answer to the question, based on the query results.") } });

    ParameterSpec best_attempt { "best_attempt", "object", "Optional best attempt at a SPARQL query.", false, {}, {} };
    best_attempt.fields = { param("sparql", "SPARQL query of the best attempt."), param("kg", "Knowledge graph of the best attempt.") };
    specs.push_back({ FunctionId::Cancel,
                      "CAN",
                      "cancel",
                      "Give up when no satisfactory SPARQL query can be found. expl explains why; best_attempt optionally "
                      "holds the best sparql and kg found so far. Calling this function stops the generation process.",
                      { param("expl", "Explanation why no satisfactory query was found."), best_attempt } });

    specs.push_back({ FunctionId::Execute,
                      "EXE",
                      "execute",
                      "Execute the SPARQL query sparql over the knowledge graph kg. Returns the results as a table, or an "
                      "error message. Tables with more than 10 rows or columns show only the first five and last five. "
                      "Queries time out after 60 seconds.",
                      { kg_param(), param("sparql", "The SPARQL query to execute.") } });

    specs.push_back({ FunctionId::List,
                      "LST",
                      "list",
                      "List at most 10 triples from the knowledge graph kg matching the given subj, prop and obj "
                      "constraints. Unspecified positions are free. Returned triples prefer popular items and avoid "
                      "repeating the same entities and properties.",
                      { kg_param(),
                        param("subj", "Subject IRI.", false),
                        param("prop", "Property IRI.", false),
                        param("obj", "Object IRI or literal.", false) } });

    specs.push_back({ FunctionId::SearchEntity,
                      "SEN",
                      "search_entity",
                      "Search for entities in the knowledge graph kg with the keyword query. Returns the top 10 results.",
                      { kg_param(), param("query", "Keywords to search for.") } });

    specs.push_back({ FunctionId::SearchProperty,
                      "SPR",
                      "search_property",
                      "Search for properties in the knowledge graph kg by similarity to the query. Returns the top 10 "
                      "results.",
                      { kg_param(), param("query", "Description of the property to search for.") } });

    specs.push_back({ FunctionId::SearchPropertyOfEntity,
                      "SPE",
                      "search_property_of_entity",
                      "Like search_property, but only returns properties the entity ent has in the knowledge graph kg, "
                      "ranked by similarity to the query. Returns the top 10 results.",
                      { kg_param(), param("query", "Description of the property to search for."), param("ent", "Entity IRI.") } });

    specs.push_back({ FunctionId::SearchObjectOfProperty,
                      "SOP",
                      "search_object_of_property",
                      "Like search_entity, but only returns entities and literals that appear as object of the property "
                      "prop in the knowledge graph kg, ranked by the keyword query. Returns the top 10 results.",
                      { kg_param(), param("query", "Keywords to search for."), param("prop", "Property IRI.") } });

    specs.push_back({ FunctionId::SearchAutocomplete,
                      "SAC",
                      "search_autocomplete",
                      "Context-sensitive search in the knowledge graph kg: sparql must be a SELECT query with the "
                      "variable ?search in its body; only items that fit at that variable's position are ranked against "
                      "the query. Returns the top 10 results.",
                      { kg_param(),
                        param("query", "Keywords or description to search for."),
                        param("sparql", "SELECT query containing the variable ?search.") } });

    ParameterSpec pos = param("pos", "Triple position to search at.");
    pos.choices = { "subj", "prop", "obj" };
    ParameterSpec constraints { "constraints", "object", "Optional constraints on the other positions.", false, {}, {} };
    constraints.fields = { param("subj", "Subject IRI.", false), param("prop", "Property IRI.", false), param("obj", "Object IRI or literal.", false) };
    specs.push_back({ FunctionId::SearchConstrained,
                      "SCN",
                      "search_constrained",
                      "Search for items at position pos (subj, prop or obj) of triples in the knowledge graph kg with the "
                      "query. constraints may fix the other positions to limit the search to matching triples. Returns "
                      "the top 10 results.",
                      { kg_param(), param("query", "Keywords or description to search for."), pos, constraints } });

    specs.push_back({ FunctionId::FindSimilarExamples,
                      "FSE",
                      "find_similar_examples",
                      "Find the three question-SPARQL pairs over the knowledge graph kg whose questions are most similar "
                      "to the given question.",
                      { kg_param(), param("question", "The question to find similar examples for.") } });

    specs.push_back({ FunctionId::FindExamples,
                      "FEX",
                      "find_examples",
                      "Return three randomly selected question-SPARQL pairs over the knowledge graph kg.",
                      { kg_param() } });
    return specs;
}

json parameter_schema(const ParameterSpec& p)
{
    json schema { { "type", p.type }, { "description", p.description } };
    if (!p.choices.empty())
        schema["enum"] = p.choices;
    if (p.type == "object")
    {
        json properties = json::object();
        json required = json::array();
        for (const auto& f: p.fields)
        {
            properties[f.name] = parameter_schema(f);
            if (f.required)
                required.push_back(f.name);
        }
        schema["properties"] = std::move(properties);
        schema["required"] = std::move(required);
        schema["additionalProperties"] = false;
    }
    return schema;
}

} // namespace

json FunctionSpec::tool_schema() const
{
    ParameterSpec root { "", "object", "", true, {}, parameters };
    json params = parameter_schema(root);
    params.erase("description");
    return json { { "type", "function" }, { "function", { { "name", name }, { "description", description }, { "parameters", params } } } };
}

const std::vector<FunctionSpec>& function_specs()
{
    static const std::vector<FunctionSpec> specs = make_specs();
    return specs;
}

const FunctionSpec& function_spec(FunctionId id)
{
    return function_specs().at(static_cast<std::size_t>(id));
}

std::optional<FunctionId> function_by_name(std::string_view name)
{
    for (const auto& s: function_specs())
        if (s.name == name)
            return s.id;
    return std::nullopt;
}

std::optional<FunctionId> function_by_mnemonic(std::string_view mnemonic)
{
    for (const auto& s: function_specs())
        if (s.mnemonic == mnemonic)
            return s.id;
    return std::nullopt;
}

std::optional<FunctionSetId> parse_function_set(std::string_view text)
{
    if (text == "b")
        return FunctionSetId::Base;
    if (text == "s")
        return FunctionSetId::Search;
    if (text == "se")
        return FunctionSetId::Extended;
    if (text == "sa")
        return FunctionSetId::Autocomplete;
    if (text == "sc")
        return FunctionSetId::Constrained;
    return std::nullopt;
}

std::string_view to_string(FunctionSetId id)
{
    switch (id)
    {
        case FunctionSetId::Base: return "b";
        case FunctionSetId::Search: return "s";
        case FunctionSetId::Extended: return "se";
        case FunctionSetId::Autocomplete: return "sa";
        case FunctionSetId::Constrained: return "sc";
    }
    return "?";
}

std::optional<FewShotMode> parse_few_shot_mode(std::string_view text)
{
    if (text == "none" || text.empty())
        return FewShotMode::None;
    if (text == "similar")
        return FewShotMode::Similar;
    if (text == "random")
        return FewShotMode::Random;
    return std::nullopt;
}

std::string_view to_string(FewShotMode mode)
{
    switch (mode)
    {
        case FewShotMode::None: return "none";
        case FewShotMode::Similar: return "similar";
        case FewShotMode::Random: return "random";
    }
    return "?";
}

std::set<FunctionId> function_set_members(FunctionSetId id, FewShotMode few_shot)
{
    std::set<FunctionId> members { FunctionId::Answer, FunctionId::Cancel, FunctionId::Execute };
    switch (id)
    {
        case FunctionSetId::Base: break;
        case FunctionSetId::Extended:
            members.insert({ FunctionId::SearchPropertyOfEntity, FunctionId::SearchObjectOfProperty });
            [[fallthrough]];
        case FunctionSetId::Search:
            members.insert({ FunctionId::List, FunctionId::SearchEntity, FunctionId::SearchProperty });
            break;
        case FunctionSetId::Autocomplete: members.insert({ FunctionId::List, FunctionId::SearchAutocomplete }); break;
        case FunctionSetId::Constrained: members.insert({ FunctionId::List, FunctionId::SearchConstrained }); break;
    }
    if (few_shot == FewShotMode::Similar)
        members.insert(FunctionId::FindSimilarExamples);
    else if (few_shot == FewShotMode::Random)
        members.insert(FunctionId::FindExamples);
    return members;
}

json tool_schemas(const std::set<FunctionId>& members)
{
    json tools = json::array();
    for (auto id: members)
        tools.push_back(function_spec(id).tool_schema());
    return tools;
}

} // namespace kgq
