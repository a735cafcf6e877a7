// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/text.hpp>
#include <kgq/toolbox.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <tuple>
#include <unordered_map>

namespace kgq
{

using json = nlohmann::json;

FunctionResult FunctionResult::error(std::string message)
{
    FunctionResult r;
    r.rendered = std::move(message);
    r.is_error = true;
    return r;
}

GraphResources load_graph_resources(const KnowledgeGraphConfig& kg, EmbeddingProvider* provider)
{
    namespace fs = std::filesystem;
    GraphResources r;
    if (kg.entity_index_path)
    {
        if (!fs::exists(*kg.entity_index_path))
            fail(ErrorKind::Config,
                 "graph '" + kg.name + "': entity index '" + kg.entity_index_path->string() + "' not found (run index-build first)");
        r.entities = std::make_shared<KeywordIndex>(KeywordIndex::open(*kg.entity_index_path, KeywordIndex::Storage::Mapped));
    }
    else if (!kg.entity_data_path.empty() && fs::exists(kg.entity_data_path))
    {
        r.entities = std::make_shared<KeywordIndex>(KeywordIndex::build(load_item_records(kg.entity_data_path, ItemKind::Entity, kg.prefixes)));
    }

    if (kg.property_index_path)
    {
        if (!fs::exists(*kg.property_index_path))
            fail(ErrorKind::Config,
                 "graph '" + kg.name + "': property index '" + kg.property_index_path->string() + "' not found (run index-build first)");
        r.properties = std::make_shared<VectorIndex>(VectorIndex::open(*kg.property_index_path));
    }
    else if (!kg.property_data_path.empty() && fs::exists(kg.property_data_path))
    {
        if (provider == nullptr)
            fail(ErrorKind::Config, "graph '" + kg.name + "': property search needs an embedding provider");
        r.properties = std::make_shared<VectorIndex>(
            build_vector_index(load_item_records(kg.property_data_path, ItemKind::Property, kg.prefixes), *provider));
    }

    if (kg.example_store_path)
    {
        if (provider == nullptr)
            fail(ErrorKind::Config, "graph '" + kg.name + "': example search needs an embedding provider");
        auto pairs = load_example_pairs(*kg.example_store_path, kg.name);
        std::erase_if(pairs, [&](const ExamplePair& p) { return p.kg != kg.name; });
        r.examples = std::make_shared<ExampleStore>(std::move(pairs), *provider);
    }
    return r;
}

std::optional<TriplePosition> parse_triple_position(std::string_view text)
{
    if (text == "subj")
        return TriplePosition::Subject;
    if (text == "prop")
        return TriplePosition::Property;
    if (text == "obj")
        return TriplePosition::Object;
    return std::nullopt;
}

namespace
{

bool valid_iri_chars(std::string_view iri)
{
    for (unsigned char c: iri)
        if (c <= 0x20 || c == '<' || c == '>' || c == '"' || c == '{' || c == '}' || c == '|' || c == '^' || c == '`' || c == '\\')
            return false;
    return !iri.empty();
}

// Length of a quoted literal at the start of `text`, including an optional
// @lang or ^^datatype suffix, or 0 if malformed.
std::size_t quoted_literal_length(std::string_view text)
{
    if (text.empty() || (text[0] != '"' && text[0] != '\''))
        return 0;
    char const quote = text[0];
    std::size_t i = 1;
    while (i < text.size() && text[i] != quote)
    {
        if (text[i] == '\n')
            return 0;
        i += text[i] == '\\' ? 2 : 1;
    }
    if (i >= text.size())
        return 0;
    ++i;
    if (i < text.size() && text[i] == '@')
    {
        ++i;
        while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) != 0 || text[i] == '-'))
            ++i;
    }
    else if (text.substr(i).starts_with("^^"))
    {
        i += 2;
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) == 0)
            ++i;
    }
    return i;
}

bool is_number(std::string_view text)
{
    std::size_t i = 0;
    if (i < text.size() && (text[i] == '+' || text[i] == '-'))
        ++i;
    bool digits = false, dot = false;
    for (; i < text.size(); ++i)
    {
        if (std::isdigit(static_cast<unsigned char>(text[i])) != 0)
            digits = true;
        else if (text[i] == '.' && !dot)
            dot = true;
        else
            return false;
    }
    return digits;
}

std::string error_text(const QueryError& e)
{
    return "Error (" + std::string(to_string(e.kind)) + "): " + e.message;
}

std::string_view position_name(TriplePosition pos)
{
    switch (pos)
    {
        case TriplePosition::Subject: return "subj";
        case TriplePosition::Property: return "prop";
        case TriplePosition::Object: return "obj";
    }
    return "?";
}

double normalized_match(std::uint32_t match, std::size_t query_tokens)
{
    return query_tokens == 0 ? 0.0 : static_cast<double>(match) / static_cast<double>(2 * query_tokens);
}

// Scanner helpers for the autocomplete rewrite.
std::size_t skip_quoted(std::string_view q, std::size_t i)
{
    char const c = q[i];
    if (i + 2 < q.size() && q[i + 1] == c && q[i + 2] == c)
    {
        auto const end = q.find(std::string(3, c), i + 3);
        return end == std::string_view::npos ? q.size() : end + 3;
    }
    ++i;
    while (i < q.size() && q[i] != c)
        i += q[i] == '\\' ? 2 : 1;
    return std::min(q.size(), i + 1);
}

std::size_t skip_iriref(std::string_view q, std::size_t i)
{
    auto j = i + 1;
    while (j < q.size() && q[j] != '>' && std::isspace(static_cast<unsigned char>(q[j])) == 0 && q[j] != '<')
        ++j;
    return j < q.size() && q[j] == '>' ? j + 1 : i + 1;
}

bool is_name_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool keyword_at(std::string_view q, std::size_t i, std::string_view word)
{
    if (i + word.size() > q.size())
        return false;
    if (i > 0 && is_name_char(q[i - 1]))
        return false;
    for (std::size_t k = 0; k < word.size(); ++k)
        if (std::toupper(static_cast<unsigned char>(q[i + k])) != word[k])
            return false;
    return i + word.size() == q.size() || !is_name_char(q[i + word.size()]);
}

// Offset of the matching '}' for the '{' at `open`, or npos.
std::size_t match_brace(std::string_view q, std::size_t open)
{
    int depth = 0;
    for (std::size_t i = open; i < q.size();)
    {
        char const c = q[i];
        if (c == '#')
        {
            while (i < q.size() && q[i] != '\n')
                ++i;
        }
        else if (c == '"' || c == '\'')
            i = skip_quoted(q, i);
        else if (c == '<')
            i = skip_iriref(q, i);
        else
        {
            if (c == '{')
                ++depth;
            else if (c == '}' && --depth == 0)
                return i;
            ++i;
        }
    }
    return std::string_view::npos;
}

bool mentions_variable(std::string_view q, std::string_view name)
{
    for (std::size_t i = 0; i < q.size();)
    {
        char const c = q[i];
        if (c == '#')
        {
            while (i < q.size() && q[i] != '\n')
                ++i;
        }
        else if (c == '"' || c == '\'')
            i = skip_quoted(q, i);
        else if (c == '<')
            i = skip_iriref(q, i);
        else if (c == '?' && q.substr(i + 1).starts_with(name) && (i + 1 + name.size() == q.size() || !is_name_char(q[i + 1 + name.size()])))
            return true;
        else
            ++i;
    }
    return false;
}

} // namespace

std::optional<std::string> sparql_term(const PrefixTable& prefixes, std::string_view text, bool allow_literal)
{
    text = trim(text);
    if (text.empty())
        return std::nullopt;
    if (allow_literal)
    {
        if (auto const n = quoted_literal_length(text); n > 0 && n == text.size())
        {
            auto const caret = text.rfind("^^");
            if (caret != std::string_view::npos && caret + 2 < text.size() && text[caret + 2] != '<' && quoted_literal_length(text.substr(0, caret)) == caret)
            {
                auto const datatype = prefixes.expand(text.substr(caret + 2));
                if (!datatype || !valid_iri_chars(*datatype))
                    return std::nullopt;
                return std::string(text.substr(0, caret)) + "^^<" + *datatype + ">";
            }
            return std::string(text);
        }
        if (is_number(text) || text == "true" || text == "false")
            return std::string(text);
    }
    auto const iri = prefixes.expand(text);
    if (!iri || !valid_iri_chars(*iri))
        return std::nullopt;
    return "<" + *iri + ">";
}

std::optional<std::string> autocomplete_query(std::string_view q, std::size_t cap, std::string* problem)
{
    auto const set_problem = [&](std::string text) {
        if (problem != nullptr)
            *problem = std::move(text);
        return std::nullopt;
    };
    if (classify_query(q) != QueryForm::Select)
        return set_problem("query must be a SELECT query");
    auto const select_at = prologue_end(q);
    auto const prologue = q.substr(0, select_at);

    // Projection runs to the first top-level FROM, WHERE or '{'.
    std::size_t i = select_at + 6;
    int depth = 0;
    std::size_t projection_end = std::string_view::npos;
    while (i < q.size())
    {
        char const c = q[i];
        if (c == '"' || c == '\'')
            i = skip_quoted(q, i);
        else if (c == '<' && depth > 0)
            i = skip_iriref(q, i);
        else if (c == '(')
            ++depth, ++i;
        else if (c == ')')
            --depth, ++i;
        else if (depth == 0 && (c == '{' || keyword_at(q, i, "WHERE") || keyword_at(q, i, "FROM")))
        {
            projection_end = i;
            break;
        }
        else
            ++i;
    }
    if (projection_end == std::string_view::npos)
        return set_problem("query has no WHERE clause");

    // Dataset clauses stay on the outer query.
    auto const open = q.find('{', projection_end);
    if (open == std::string_view::npos)
        return set_problem("query has no WHERE clause");
    auto dataset = std::string(trim(q.substr(projection_end, open - projection_end)));
    if (dataset.size() >= 5 && keyword_at(dataset, dataset.size() - 5, "WHERE"))
        dataset = std::string(trim(std::string_view(dataset).substr(0, dataset.size() - 5)));
    auto const close = match_brace(q, open);
    if (close == std::string_view::npos)
        return set_problem("unbalanced braces in query");
    auto const body = q.substr(open, close + 1 - open);
    auto const modifiers = trim(q.substr(close + 1));

    if (!mentions_variable(body, "search"))
        return set_problem("query must contain variable ?search");

    std::string out(prologue);
    out += "SELECT ?search ";
    if (!dataset.empty())
        out += dataset + " ";
    out += "WHERE { SELECT DISTINCT ?search WHERE ";
    out += body;
    if (!modifiers.empty())
        out += " " + std::string(modifiers);
    out += " } LIMIT " + std::to_string(cap + 1);
    return out;
}

struct Toolbox::Candidate
{
    Cell value; // Iri or Literal
    std::string label;
    std::vector<std::string> infos;
    double score = 0.0; // normalized to [0, 1] for keyword scores, cosine otherwise
    std::uint64_t popularity = 0;
};

enum class Toolbox::CandidateMode : std::uint8_t
{
    Properties, // similarity for indexed properties, every candidate kept
    Objects,    // keyword scores for entities and literals, zero scores dropped
    Mixed,      // both indices consulted, zero keyword scores dropped
};

namespace
{

bool candidate_before(const auto& a, const auto& b)
{
    if (a.score != b.score)
        return a.score > b.score;
    if (a.popularity != b.popularity)
        return a.popularity > b.popularity;
    return std::tie(a.value.kind, a.value.lexical, a.value.lang, a.value.datatype) <
           std::tie(b.value.kind, b.value.lexical, b.value.lang, b.value.datatype);
}

template<typename C>
FunctionResult render_candidates(const std::vector<C>& hits, const PrefixTable& prefixes, bool approximate, std::string_view empty_text)
{
    FunctionResult r;
    r.structured = json { { "hits", json::array() }, { "approximate", approximate } };
    if (hits.empty())
        r.rendered = std::string(empty_text);
    for (std::size_t i = 0; i < hits.size(); ++i)
    {
        const auto& h = hits[i];
        if (i > 0)
            r.rendered += '\n';
        r.rendered += std::to_string(i + 1) + ". ";
        json entry { { "rank", i + 1 } };
        if (h.value.kind == CellKind::Iri)
        {
            auto const shown = render_cell(h.value, prefixes, &r.mentioned_iris);
            r.rendered += h.label.empty() ? shown : h.label + " (" + shown + ")";
            std::vector<std::string> infos(h.infos.begin(), h.infos.begin() + static_cast<std::ptrdiff_t>(std::min(h.infos.size(), max_embedded_infos)));
            if (!infos.empty())
                r.rendered += " — " + join(infos, "; ");
            entry["iri"] = h.value.lexical;
            entry["label"] = h.label;
        }
        else
        {
            r.rendered += render_cell(h.value, prefixes, &r.mentioned_iris);
            entry["literal"] = h.value.lexical;
            if (!h.value.lang.empty())
                entry["lang"] = h.value.lang;
            if (!h.value.datatype.empty())
                entry["datatype"] = h.value.datatype;
        }
        entry["score"] = h.score;
        r.structured["hits"].push_back(std::move(entry));
    }
    if (approximate)
        r.rendered += "\n" + std::string(approximate_note);
    return r;
}

} // namespace

Toolbox::Toolbox(Catalog catalog, SparqlClient client, std::shared_ptr<EmbeddingProvider> provider):
    _catalog(std::move(catalog)), _client(std::move(client)), _provider(std::move(provider))
{
}

Toolbox Toolbox::open(Catalog catalog, SparqlClient client, std::shared_ptr<EmbeddingProvider> provider)
{
    Toolbox box(std::move(catalog), std::move(client), std::move(provider));
    for (const auto& kg: box._catalog.graphs())
        box._resources[kg.name] = load_graph_resources(kg, box._provider.get());
    return box;
}

void Toolbox::set_resources(const std::string& kg, GraphResources resources)
{
    if (_catalog.find(kg) == nullptr)
        fail(ErrorKind::Config, "unknown knowledge graph '" + kg + "'");
    _resources[kg] = std::move(resources);
}

const GraphResources* Toolbox::resources(std::string_view kg) const
{
    auto it = _resources.find(kg);
    return it == _resources.end() ? nullptr : &it->second;
}

const KnowledgeGraphConfig* Toolbox::graph(std::string_view kg) const
{
    return _catalog.find(kg);
}

FunctionResult Toolbox::unknown_graph(std::string_view kg) const
{
    std::vector<std::string> names;
    for (const auto& g: _catalog.graphs())
        names.push_back(g.name);
    return FunctionResult::error("Error: unknown knowledge graph '" + std::string(kg) + "'; available: " + join(names, ", "));
}

const KeywordIndex& Toolbox::entity_index(const KnowledgeGraphConfig& kg) const
{
    auto const* res = resources(kg.name);
    if (res == nullptr || !res->entities)
        fail(ErrorKind::Config, "graph '" + kg.name + "' has no entity index");
    return *res->entities;
}

const VectorIndex& Toolbox::property_index(const KnowledgeGraphConfig& kg) const
{
    auto const* res = resources(kg.name);
    if (res == nullptr || !res->properties)
        fail(ErrorKind::Config, "graph '" + kg.name + "' has no property index");
    if (!_provider)
        fail(ErrorKind::Config, "property search needs an embedding provider");
    return *res->properties;
}

std::optional<std::string> Toolbox::label_of(const KnowledgeGraphConfig& kg, const std::string& iri) const
{
    auto const* res = resources(kg.name);
    if (res == nullptr)
        return std::nullopt;
    if (res->properties)
        if (auto const* item = res->properties->find(iri))
            return item->label;
    if (res->entities)
        if (auto id = res->entities->find(iri))
            return res->entities->item(*id).label;
    return std::nullopt;
}

std::uint64_t Toolbox::popularity_of(const KnowledgeGraphConfig& kg, const std::string& iri) const
{
    auto const* res = resources(kg.name);
    if (res == nullptr)
        return 0;
    if (res->entities)
        if (auto id = res->entities->find(iri))
            return res->entities->item(*id).score;
    if (res->properties)
        if (auto const* item = res->properties->find(iri))
            return item->score;
    return 0;
}

FunctionResult Toolbox::execute(std::string_view kg, std::string_view sparql) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto outcome = _client.execute(*g, sparql);
    if (auto const* e = std::get_if<QueryError>(&outcome))
    {
        auto r = FunctionResult::error(error_text(*e));
        r.structured = json { { "error", to_string(e->kind) } };
        return r;
    }
    const auto& table = std::get<ResultTable>(outcome);
    auto rendered = render_table(table, g->prefixes);
    FunctionResult r;
    r.rendered = std::move(rendered.text);
    r.mentioned_iris = std::move(rendered.iris);
    if (table.is_ask())
        r.structured = json { { "ask", *table.ask_result } };
    else
        r.structured = json { { "rows", table.total_rows }, { "columns", table.total_cols } };
    return r;
}

FunctionResult Toolbox::list(std::string_view kg, const TripleConstraints& pattern) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);

    std::array<std::optional<std::string>, 3> terms;
    std::array<const std::optional<std::string>*, 3> const args { &pattern.subj, &pattern.prop, &pattern.obj };
    static constexpr std::array<std::string_view, 3> vars { "s", "p", "o" };
    for (std::size_t k = 0; k < 3; ++k)
    {
        if (!*args[k])
            continue;
        terms[k] = sparql_term(g->prefixes, **args[k], k == 2);
        if (!terms[k])
            return FunctionResult::error("Error: invalid " + std::string(k == 2 ? "IRI or literal" : "IRI") + " '" + **args[k] + "'");
    }
    auto const term_or_var = [&](std::size_t k) { return terms[k] ? *terms[k] : "?" + std::string(vars[k]); };
    auto const triple_pattern = term_or_var(0) + " " + term_or_var(1) + " " + term_or_var(2);

    // Bound values as cells so every triple renders uniformly.
    std::array<std::optional<Cell>, 3> bound;
    for (std::size_t k = 0; k < 3; ++k)
        if (terms[k])
        {
            auto const& t = *terms[k];
            if (t.front() == '<')
                bound[k] = Cell::iri(t.substr(1, t.size() - 2));
            else
                bound[k] = Cell::literal(std::string(trim(**args[k])));
        }

    auto const render_triple = [&](const std::array<Cell, 3>& triple, std::set<std::string>& iris) {
        std::string line;
        for (std::size_t k = 0; k < 3; ++k)
        {
            if (k > 0)
                line += ' ';
            if (bound[k] && bound[k]->kind == CellKind::Literal)
                line += bound[k]->lexical;
            else
                line += render_cell(triple[k], g->prefixes, &iris);
            if (triple[k].kind == CellKind::Iri)
                if (auto label = label_of(*g, triple[k].lexical))
                    line += " (" + *label + ")";
        }
        return line;
    };

    if (terms[0] && terms[1] && terms[2])
    {
        auto outcome = _client.execute(*g, "ASK WHERE { " + triple_pattern + " }");
        if (auto const* e = std::get_if<QueryError>(&outcome))
            return FunctionResult::error(error_text(*e));
        if (!std::get<ResultTable>(outcome).ask_result.value_or(false))
            return FunctionResult { "no triples found", json { { "triples", json::array() } }, {}, false };
        FunctionResult r;
        r.rendered = "1 triple:\n" + render_triple({ *bound[0], *bound[1], *bound[2] }, r.mentioned_iris);
        r.structured = json { { "triples", 1 } };
        return r;
    }

    std::string projection;
    for (std::size_t k = 0; k < 3; ++k)
        if (!terms[k])
            projection += "?" + std::string(vars[k]) + " ";
    auto const query = "SELECT " + projection + "WHERE { " + triple_pattern + " } LIMIT " + std::to_string(list_candidate_cap + 1);
    auto outcome = _client.with_row_cap(list_candidate_cap + 1).execute(*g, query);
    if (auto const* e = std::get_if<QueryError>(&outcome))
        return FunctionResult::error(error_text(*e));
    const auto& table = std::get<ResultTable>(outcome);
    auto const more = table.rows.size() > list_candidate_cap || table.truncated;
    auto const count = std::min(table.rows.size(), list_candidate_cap);
    if (count == 0)
        return FunctionResult { "no triples found", json { { "triples", json::array() } }, {}, false };

    std::vector<std::array<Cell, 3>> triples;
    triples.reserve(count);
    for (std::size_t r = 0; r < count; ++r)
    {
        std::array<Cell, 3> t;
        for (std::size_t k = 0; k < 3; ++k)
        {
            if (bound[k])
            {
                t[k] = *bound[k];
                continue;
            }
            auto const col = std::find(table.variables.begin(), table.variables.end(), vars[k]) - table.variables.begin();
            if (static_cast<std::size_t>(col) < table.variables.size())
                t[k] = table.rows[r][static_cast<std::size_t>(col)];
        }
        triples.push_back(std::move(t));
    }

    // Diversity: group by property when it varies, else by subject, else by
    // object; at most two triples per group, taken round-robin over groups
    // ordered by the group item's popularity.
    std::size_t const group_pos = !terms[1] ? 1 : !terms[0] ? 0 : 2;
    auto const cell_popularity = [&](const Cell& c) { return c.kind == CellKind::Iri ? popularity_of(*g, c.lexical) : 0; };
    struct Group
    {
        std::uint64_t popularity;
        std::size_t first_seen;
        std::vector<std::pair<std::uint64_t, std::size_t>> members; // (popularity of the other free items, triple)
    };
    std::vector<Group> groups;
    std::map<std::tuple<CellKind, std::string, std::string, std::string>, std::size_t> group_of;
    for (std::size_t t = 0; t < triples.size(); ++t)
    {
        const auto& key_cell = triples[t][group_pos];
        auto const key = std::make_tuple(key_cell.kind, key_cell.lexical, key_cell.lang, key_cell.datatype);
        auto [it, inserted] = group_of.try_emplace(key, groups.size());
        if (inserted)
            groups.push_back(Group { cell_popularity(key_cell), t, {} });
        std::uint64_t other = 0;
        for (std::size_t k = 0; k < 3; ++k)
            if (k != group_pos && !terms[k])
                other = std::max(other, cell_popularity(triples[t][k]));
        groups[it->second].members.emplace_back(other, t);
    }
    std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.popularity > b.popularity; });
    for (auto& grp: groups)
        std::stable_sort(grp.members.begin(), grp.members.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<std::size_t> chosen;
    for (std::size_t round = 0; round < 2 && chosen.size() < list_result_limit; ++round)
        for (const auto& grp: groups)
        {
            if (chosen.size() >= list_result_limit)
                break;
            if (round < grp.members.size())
                chosen.push_back(grp.members[round].second);
        }

    FunctionResult r;
    r.rendered = "Showing " + std::to_string(chosen.size()) + " of " + std::to_string(count) + (more ? "+" : "") + " matching triple" +
                 (count == 1 && !more ? "" : "s") + ":";
    json listed = json::array();
    for (auto t: chosen)
    {
        r.rendered += "\n" + render_triple(triples[t], r.mentioned_iris);
        json entry = json::array();
        for (const auto& c: triples[t])
            entry.push_back(c.lexical);
        listed.push_back(std::move(entry));
    }
    r.structured = json { { "triples", std::move(listed) }, { "candidates", count }, { "more", more } };
    return r;
}

FunctionResult Toolbox::search_entity(std::string_view kg, std::string_view query) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto const q_tokens = tokenize(query).size();
    auto const result = entity_index(*g).search(query, search_result_limit);
    std::vector<Candidate> hits;
    for (const auto& h: result.hits)
        hits.push_back(Candidate { Cell::iri(h.item.iri), h.item.label, h.item.infos, normalized_match(h.match_score, q_tokens), h.item.score });
    return render_candidates(hits, g->prefixes, result.approximate, "no results");
}

FunctionResult Toolbox::search_property(std::string_view kg, std::string_view query) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto const hits_in = property_index(*g).search(query, *_provider, search_result_limit);
    std::vector<Candidate> hits;
    for (const auto& h: hits_in)
        hits.push_back(Candidate { Cell::iri(h.item.iri), h.item.label, h.item.infos, h.similarity, h.item.score });
    return render_candidates(hits, g->prefixes, false, "no results");
}

std::map<std::string, std::vector<Cell>> Toolbox::fetch_labels(const KnowledgeGraphConfig& kg, const std::vector<std::string>& iris) const
{
    std::map<std::string, std::vector<Cell>> labels;
    constexpr std::size_t chunk = 100;
    for (std::size_t start = 0; start < iris.size(); start += chunk)
    {
        std::string values;
        for (std::size_t i = start; i < std::min(iris.size(), start + chunk); ++i)
            if (valid_iri_chars(iris[i]))
                values += "<" + iris[i] + "> ";
        if (values.empty())
            continue;
        auto const query = "SELECT ?item ?label WHERE { VALUES ?item { " + values + "} ?item <" + kg.label_property + "> ?label }";
        auto outcome = _client.execute(kg, query);
        if (auto const* e = std::get_if<QueryError>(&outcome))
        {
            spdlog::debug("label lookup failed: {}", e->message);
            continue;
        }
        const auto& table = std::get<ResultTable>(outcome);
        auto const item_col = std::find(table.variables.begin(), table.variables.end(), "item") - table.variables.begin();
        auto const label_col = std::find(table.variables.begin(), table.variables.end(), "label") - table.variables.begin();
        if (static_cast<std::size_t>(item_col) >= table.variables.size() || static_cast<std::size_t>(label_col) >= table.variables.size())
            continue;
        for (const auto& row: table.rows)
        {
            const auto& item = row[static_cast<std::size_t>(item_col)];
            const auto& label = row[static_cast<std::size_t>(label_col)];
            if (item.kind == CellKind::Iri && label.kind == CellKind::Literal)
                labels[item.lexical].push_back(label);
        }
    }
    return labels;
}

FunctionResult Toolbox::search_candidates(const KnowledgeGraphConfig& kg,
                                          std::string_view query,
                                          const std::string& candidate_query,
                                          std::string_view variable,
                                          std::size_t cap,
                                          CandidateMode mode,
                                          std::string_view empty_text) const
{
    auto outcome = _client.with_row_cap(cap + 1).execute(kg, candidate_query);
    if (auto const* e = std::get_if<QueryError>(&outcome))
        return FunctionResult::error(error_text(*e));
    const auto& table = std::get<ResultTable>(outcome);
    auto const col = static_cast<std::size_t>(std::find(table.variables.begin(), table.variables.end(), variable) - table.variables.begin());
    if (col >= table.variables.size())
        return FunctionResult::error("Error: candidate query did not return ?" + std::string(variable));
    bool approximate = table.rows.size() > cap || table.truncated;

    std::vector<Cell> cells;
    std::set<std::tuple<CellKind, std::string, std::string, std::string>> seen;
    for (std::size_t r = 0; r < std::min(cap, table.rows.size()); ++r)
    {
        const auto& c = table.rows[r][col];
        if (c.kind != CellKind::Iri && c.kind != CellKind::Literal)
            continue;
        if (seen.emplace(c.kind, c.lexical, c.lang, c.datatype).second)
            cells.push_back(c);
    }
    if (cells.empty())
        return FunctionResult { std::string(empty_text), json { { "hits", json::array() }, { "approximate", approximate } }, {}, false };

    auto const query_tokens = tokenize(query);
    auto const* res = resources(kg.name);
    auto const* entities = res != nullptr && mode != CandidateMode::Properties ? res->entities.get() : nullptr;
    auto const* properties = res != nullptr && mode != CandidateMode::Objects && _provider ? res->properties.get() : nullptr;
    bool const keep_zero = mode == CandidateMode::Properties;

    std::unordered_set<std::string> in_properties, in_entities;
    std::vector<std::string> unknown;
    std::vector<Candidate> scored;
    for (const auto& c: cells)
    {
        if (c.kind == CellKind::Literal)
        {
            auto const m = score_alias(query_tokens, tokenize(c.lexical));
            if (m > 0 || keep_zero)
                scored.push_back(Candidate { c, {}, {}, normalized_match(m, query_tokens.size()), 0 });
        }
        else if (properties != nullptr && properties->find(c.lexical) != nullptr)
            in_properties.insert(c.lexical);
        else if (entities != nullptr && entities->find(c.lexical))
            in_entities.insert(c.lexical);
        else
            unknown.push_back(c.lexical);
    }

    if (!in_properties.empty())
        for (const auto& h: properties->search(query, *_provider, search_result_limit, &in_properties))
            scored.push_back(Candidate { Cell::iri(h.item.iri), h.item.label, h.item.infos, h.similarity, h.item.score });
    if (!in_entities.empty())
    {
        auto const result = entities->search(query, search_result_limit, &in_entities);
        approximate = approximate || result.approximate;
        for (const auto& h: result.hits)
            scored.push_back(Candidate { Cell::iri(h.item.iri), h.item.label, h.item.infos, normalized_match(h.match_score, query_tokens.size()), h.item.score });
    }
    if (!unknown.empty())
    {
        // Items without an index entry are scored on labels from the endpoint.
        auto const lookup = std::vector<std::string>(unknown.begin(), unknown.begin() + static_cast<std::ptrdiff_t>(std::min(unknown.size(), label_lookup_cap)));
        auto const labels = fetch_labels(kg, lookup);
        for (std::size_t i = 0; i < unknown.size(); ++i)
        {
            const auto& iri = unknown[i];
            std::uint32_t best = 0;
            std::string shown;
            auto it = i < lookup.size() ? labels.find(iri) : labels.end();
            if (it != labels.end() && !it->second.empty())
            {
                const Cell* display = nullptr;
                for (const auto& l: it->second)
                {
                    best = std::max(best, score_alias(query_tokens, tokenize(l.lexical)));
                    if (display == nullptr || (l.lang == "en" && display->lang != "en") || (l.lang.empty() && !display->lang.empty() && display->lang != "en"))
                        display = &l;
                }
                shown = display->lexical;
            }
            else
                best = score_alias(query_tokens, tokenize(iri_local_name(iri)));
            if (best > 0 || keep_zero)
                scored.push_back(Candidate { Cell::iri(iri), shown, {}, normalized_match(best, query_tokens.size()), 0 });
        }
    }

    std::sort(scored.begin(), scored.end(), [](const Candidate& a, const Candidate& b) { return candidate_before(a, b); });
    if (scored.size() > search_result_limit)
        scored.resize(search_result_limit);
    return render_candidates(scored, kg.prefixes, approximate, "no results");
}

FunctionResult Toolbox::search_property_of_entity(std::string_view kg, std::string_view query, std::string_view ent) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto const term = sparql_term(g->prefixes, ent, false);
    if (!term)
        return FunctionResult::error("Error: invalid IRI '" + std::string(ent) + "'");
    auto const q = "SELECT DISTINCT ?p WHERE { " + *term + " ?p ?o } LIMIT " + std::to_string(property_candidate_cap + 1);
    return search_candidates(*g, query, q, "p", property_candidate_cap, CandidateMode::Properties, "entity has no properties");
}

FunctionResult Toolbox::search_object_of_property(std::string_view kg, std::string_view query, std::string_view prop) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto const term = sparql_term(g->prefixes, prop, false);
    if (!term)
        return FunctionResult::error("Error: invalid IRI '" + std::string(prop) + "'");
    auto const q = "SELECT DISTINCT ?o WHERE { ?s " + *term + " ?o } LIMIT " + std::to_string(object_candidate_cap + 1);
    return search_candidates(*g, query, q, "o", object_candidate_cap, CandidateMode::Objects, "no objects for property");
}

FunctionResult Toolbox::search_autocomplete(std::string_view kg, std::string_view query, std::string_view sparql) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    std::string problem;
    auto const rewritten = autocomplete_query(sparql, object_candidate_cap, &problem);
    if (!rewritten)
        return FunctionResult::error("Error: " + problem);
    return search_candidates(*g, query, *rewritten, "search", object_candidate_cap, CandidateMode::Mixed, "no results");
}

FunctionResult Toolbox::search_constrained(std::string_view kg,
                                           std::string_view query,
                                           TriplePosition pos,
                                           const TripleConstraints& constraints) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    std::array<const std::optional<std::string>*, 3> const given { &constraints.subj, &constraints.prop, &constraints.obj };
    auto const at = static_cast<std::size_t>(pos);
    if (*given[at])
        return FunctionResult::error("Error: constraints must not bind the search position '" + std::string(position_name(pos)) + "'");

    if (!constraints.subj && !constraints.prop && !constraints.obj)
        return pos == TriplePosition::Property ? search_property(kg, query) : search_entity(kg, query);

    static constexpr std::array<std::string_view, 3> vars { "?s", "?p", "?o" };
    std::string pattern;
    for (std::size_t k = 0; k < 3; ++k)
    {
        std::string term;
        if (k == at)
            term = "?search";
        else if (*given[k])
        {
            auto t = sparql_term(g->prefixes, **given[k], k == 2);
            if (!t)
                return FunctionResult::error("Error: invalid " + std::string(k == 2 ? "IRI or literal" : "IRI") + " '" + **given[k] + "'");
            term = *t;
        }
        else
            term = std::string(vars[k]);
        pattern += term + (k < 2 ? " " : "");
    }
    auto const properties = pos == TriplePosition::Property;
    auto const cap = properties ? property_candidate_cap : object_candidate_cap;
    auto const q = "SELECT DISTINCT ?search WHERE { " + pattern + " } LIMIT " + std::to_string(cap + 1);
    return search_candidates(*g, query, q, "search", cap, properties ? CandidateMode::Properties : CandidateMode::Objects, "no results");
}

FunctionResult Toolbox::render_examples(const KnowledgeGraphConfig& kg, const std::vector<const ExamplePair*>& pairs) const
{
    FunctionResult r;
    r.structured = json { { "examples", json::array() } };
    for (std::size_t i = 0; i < pairs.size(); ++i)
    {
        const auto& p = *pairs[i];
        if (i > 0)
            r.rendered += "\n\n";
        r.rendered += "Example " + std::to_string(i + 1) + ":\nQuestion: " + p.question + "\nSPARQL:\n" + p.sparql;
        auto const iris = extract_query_iris(p.sparql, kg.prefixes);
        r.mentioned_iris.insert(iris.begin(), iris.end());
        r.structured["examples"].push_back(json { { "question", p.question }, { "sparql", p.sparql }, { "kg", p.kg } });
    }
    if (pairs.empty())
        r.rendered = "no examples available";
    return r;
}

FunctionResult Toolbox::find_similar_examples(std::string_view kg, std::string_view question, std::size_t k) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto const* res = resources(kg);
    if (res == nullptr || !res->examples || res->examples->size() == 0 || !_provider)
        return FunctionResult { "no examples available", json { { "examples", json::array() } }, {}, false };
    return render_examples(*g, res->examples->find_similar(question, *_provider, k));
}

FunctionResult Toolbox::find_examples(std::string_view kg, std::mt19937_64& rng, std::size_t k) const
{
    auto const* g = graph(kg);
    if (g == nullptr)
        return unknown_graph(kg);
    auto const* res = resources(kg);
    if (res == nullptr || !res->examples || res->examples->size() == 0)
        return FunctionResult { "no examples available", json { { "examples", json::array() } }, {}, false };
    return render_examples(*g, res->examples->draw_random(rng, k));
}

namespace
{

struct ArgumentProblem
{
    std::string message;
};

std::optional<std::string> string_arg(const json& args, const char* name, bool required, std::string_view function)
{
    auto it = args.find(name);
    if (it == args.end() || it->is_null())
    {
        if (required)
            throw ArgumentProblem { "missing required argument '" + std::string(name) + "' for " + std::string(function) };
        return std::nullopt;
    }
    if (!it->is_string())
        throw ArgumentProblem { "argument '" + std::string(name) + "' of " + std::string(function) + " must be a string" };
    auto value = it->get<std::string>();
    if (!required && trim(value).empty())
        return std::nullopt;
    return value;
}

TripleConstraints constraints_arg(const json& args, std::string_view function)
{
    TripleConstraints c;
    auto it = args.find("constraints");
    if (it == args.end() || it->is_null())
        return c;
    json object = *it;
    if (object.is_string())
    {
        object = json::parse(object.get<std::string>(), nullptr, false);
        if (object.is_discarded())
            throw ArgumentProblem { "argument 'constraints' of " + std::string(function) + " must be an object" };
    }
    if (!object.is_object())
        throw ArgumentProblem { "argument 'constraints' of " + std::string(function) + " must be an object" };
    c.subj = string_arg(object, "subj", false, function);
    c.prop = string_arg(object, "prop", false, function);
    c.obj = string_arg(object, "obj", false, function);
    return c;
}

} // namespace

FunctionResult Toolbox::invoke(FunctionId id, const json& args, std::mt19937_64& rng) const
{
    auto const& spec = function_spec(id);
    if (!args.is_object())
        return FunctionResult::error("Error: arguments of " + spec.name + " must be a JSON object");
    try
    {
        auto const kg = [&] { return *string_arg(args, "kg", true, spec.name); };
        auto const req = [&](const char* name) { return *string_arg(args, name, true, spec.name); };
        auto const opt = [&](const char* name) { return string_arg(args, name, false, spec.name); };
        switch (id)
        {
            case FunctionId::Execute: return execute(kg(), req("sparql"));
            case FunctionId::List: return list(kg(), TripleConstraints { opt("subj"), opt("prop"), opt("obj") });
            case FunctionId::SearchEntity: return search_entity(kg(), req("query"));
            case FunctionId::SearchProperty: return search_property(kg(), req("query"));
            case FunctionId::SearchPropertyOfEntity: return search_property_of_entity(kg(), req("query"), req("ent"));
            case FunctionId::SearchObjectOfProperty: return search_object_of_property(kg(), req("query"), req("prop"));
            case FunctionId::SearchAutocomplete: return search_autocomplete(kg(), req("query"), req("sparql"));
            case FunctionId::SearchConstrained:
            {
                auto const pos_text = req("pos");
                auto const pos = parse_triple_position(pos_text);
                if (!pos)
                    return FunctionResult::error("Error: pos must be one of subj, prop, obj (got '" + pos_text + "')");
                return search_constrained(kg(), req("query"), *pos, constraints_arg(args, spec.name));
            }
            case FunctionId::FindSimilarExamples: return find_similar_examples(kg(), req("question"));
            case FunctionId::FindExamples: return find_examples(kg(), rng);
            case FunctionId::Answer:
            case FunctionId::Cancel: break;
        }
    }
    catch (const ArgumentProblem& p)
    {
        return FunctionResult::error("Error: " + p.message);
    }
    fail(ErrorKind::InvalidArgument, spec.name + " is handled by the session, not the toolbox");
}

} // namespace kgq
