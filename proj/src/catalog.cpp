// SPDX-License-Identifier: Apache-2.0
#include <kgq/catalog.hpp>
#include <kgq/error.hpp>
#include <kgq/text.hpp>

#include <nlohmann/json.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace kgq
{

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(ItemKind kind)
{
    return kind == ItemKind::Entity ? "entity" : "property";
}

std::optional<ItemKind> parse_item_kind(std::string_view text)
{
    if (text == "entity")
        return ItemKind::Entity;
    if (text == "property")
        return ItemKind::Property;
    return std::nullopt;
}

std::vector<std::string_view> ItemRecord::aliases() const
{
    std::vector<std::string_view> out;
    out.reserve(1 + synonyms.size());
    out.emplace_back(label);
    for (const auto& s: synonyms)
        out.emplace_back(s);
    return out;
}

bool is_valid_endpoint_url(std::string_view url)
{
    auto const scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        return false;
    auto const scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https" && scheme != "file")
        return false;
    auto const rest = url.substr(scheme_end + 3);
    if (scheme == "file")
        return rest.size() > 1 && rest.front() == '/';
    if (rest.empty() || rest.front() == '/' || rest.front() == ':')
        return false;
    return std::none_of(url.begin(), url.end(), [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) != 0 || c == '<' || c == '>' || c == '"';
    });
}

void Catalog::add(KnowledgeGraphConfig graph)
{
    if (graph.name.empty())
        fail(ErrorKind::Input, "knowledge graph name must not be empty");
    if (find(graph.name) != nullptr)
        fail(ErrorKind::Input, "duplicate knowledge graph name '" + graph.name + "'");
    if (!is_valid_endpoint_url(graph.endpoint))
        fail(ErrorKind::Input, "malformed endpoint URL '" + graph.endpoint + "' for graph '" + graph.name + "'");
    _graphs.push_back(std::move(graph));
}

const KnowledgeGraphConfig* Catalog::find(std::string_view name) const
{
    auto it = std::find_if(_graphs.begin(), _graphs.end(), [&](const auto& g) { return g.name == name; });
    return it == _graphs.end() ? nullptr : &*it;
}

const KnowledgeGraphConfig& Catalog::at(std::string_view name) const
{
    if (auto const* g = find(name))
        return *g;
    fail(ErrorKind::Config, "unknown knowledge graph '" + std::string(name) + "'");
}

namespace
{

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<std::string_view> allowed, std::string_view where)
{
    if (!obj.is_object())
        fail(ErrorKind::Input, std::string(where) + " must be an object");
    for (const auto& [key, _]: obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            fail(ErrorKind::Input, "unknown field '" + key + "' in " + std::string(where));
}

std::string require_string(const ordered_json& obj, const char* key, std::string_view where)
{
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        fail(ErrorKind::Input, std::string(where) + ": missing string field '" + key + "'");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const ordered_json& obj, const char* key, std::string_view where)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return std::nullopt;
    if (!it->is_string())
        fail(ErrorKind::Input, std::string(where) + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string env_key(std::string_view name)
{
    std::string out = "KGQ_ENDPOINT_";
    for (char c: name)
        out += std::isalnum(static_cast<unsigned char>(c)) != 0 ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : '_';
    return out;
}

KnowledgeGraphConfig parse_graph(const ordered_json& node, const std::filesystem::path& base)
{
    reject_unknown_keys(node,
                        { "name",
                          "endpoint",
                          "prefixes",
                          "headers",
                          "entity_data",
                          "property_data",
                          "entity_index",
                          "property_index",
                          "examples",
                          "label_property" },
                        "graph");
    KnowledgeGraphConfig g;
    g.name = require_string(node, "name", "graph");
    auto const where = "graph '" + g.name + "'";
    g.endpoint = require_string(node, "endpoint", where);
    if (const char* over = std::getenv(env_key(g.name).c_str()); over != nullptr && *over != '\0')
        g.endpoint = over;

    if (auto it = node.find("prefixes"); it != node.end())
    {
        if (!it->is_object())
            fail(ErrorKind::Input, where + ": prefixes must be an object of name -> IRI base");
        for (const auto& [name, base_iri]: it->items())
        {
            if (!base_iri.is_string())
                fail(ErrorKind::Input, where + ": prefix '" + name + "' must map to a string");
            g.prefixes.add(name, base_iri.get<std::string>());
        }
    }
    if (auto it = node.find("headers"); it != node.end())
    {
        if (!it->is_object())
            fail(ErrorKind::Input, where + ": headers must be an object");
        for (const auto& [name, value]: it->items())
        {
            if (!value.is_string())
                fail(ErrorKind::Input, where + ": header '" + name + "' must be a string");
            g.headers[name] = value.get<std::string>();
        }
    }
    if (auto p = optional_string(node, "entity_data", where))
        g.entity_data_path = resolve(base, *p);
    if (auto p = optional_string(node, "property_data", where))
        g.property_data_path = resolve(base, *p);
    if (auto p = optional_string(node, "entity_index", where))
        g.entity_index_path = resolve(base, *p);
    if (auto p = optional_string(node, "property_index", where))
        g.property_index_path = resolve(base, *p);
    if (auto p = optional_string(node, "examples", where))
        g.example_store_path = resolve(base, *p);
    if (auto p = optional_string(node, "label_property", where))
    {
        auto expanded = g.prefixes.expand(*p);
        if (!expanded)
            fail(ErrorKind::Input, where + ": label_property '" + *p + "' is not an IRI");
        g.label_property = *expanded;
    }
    return g;
}

} // namespace

Catalog load_catalog(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::Input, "cannot read catalog '" + path.string() + "'");

    ordered_json doc;
    try
    {
        doc = ordered_json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        fail(ErrorKind::Input, "catalog '" + path.string() + "' is not valid JSON: " + e.what());
    }
    reject_unknown_keys(doc, { "graphs", "embedding", "chat" }, "catalog");

    auto const base = path.parent_path();
    Catalog catalog;
    auto graphs = doc.find("graphs");
    if (graphs == doc.end() || !graphs->is_array() || graphs->empty())
        fail(ErrorKind::Input, "catalog must declare a non-empty 'graphs' array");
    for (const auto& node: *graphs)
        catalog.add(parse_graph(node, base));

    if (auto it = doc.find("embedding"); it != doc.end())
    {
        reject_unknown_keys(*it, { "provider", "url", "model", "api_key_env", "dimension" }, "embedding");
        EmbeddingConfig e;
        e.provider = require_string(*it, "provider", "embedding");
        if (e.provider != "hash" && e.provider != "http")
            fail(ErrorKind::Input, "embedding.provider must be 'hash' or 'http'");
        e.url = optional_string(*it, "url", "embedding").value_or("");
        e.model = optional_string(*it, "model", "embedding").value_or("");
        e.api_key_env = optional_string(*it, "api_key_env", "embedding").value_or("");
        if (auto d = it->find("dimension"); d != it->end())
        {
            if (!d->is_number_unsigned() || d->get<std::size_t>() == 0)
                fail(ErrorKind::Input, "embedding.dimension must be a positive integer");
            e.dimension = d->get<std::size_t>();
        }
        if (e.provider == "http" && !is_valid_endpoint_url(e.url))
            fail(ErrorKind::Input, "embedding.url must be an absolute URL");
        catalog.embedding = std::move(e);
    }
    if (auto it = doc.find("chat"); it != doc.end())
    {
        reject_unknown_keys(*it, { "url", "model", "api_key_env" }, "chat");
        ChatConfig c;
        c.url = require_string(*it, "url", "chat");
        c.model = require_string(*it, "model", "chat");
        c.api_key_env = optional_string(*it, "api_key_env", "chat").value_or("");
        if (!is_valid_endpoint_url(c.url))
            fail(ErrorKind::Input, "chat.url must be an absolute URL");
        catalog.chat = std::move(c);
    }
    return catalog;
}

namespace
{

std::vector<std::string> split_list_cell(std::string_view cell)
{
    std::vector<std::string> out;
    for (auto part: split(cell, ';'))
    {
        auto const t = trim(part);
        if (!t.empty())
            out.emplace_back(t);
    }
    return out;
}

[[noreturn]] void row_error(std::size_t line, const std::string& message)
{
    fail(ErrorKind::Input, "line " + std::to_string(line) + ": " + message);
}

} // namespace

std::vector<ItemRecord> parse_item_records(std::istream& in, ItemKind kind, const PrefixTable& prefixes, ItemLoadStats* stats)
{
    std::vector<ItemRecord> records;
    ItemLoadStats local;
    std::string line;
    std::size_t line_no = 0;
    std::optional<std::uint64_t> previous_score;

    if (!std::getline(in, line))
        fail(ErrorKind::Input, "missing header line");
    ++line_no;

    while (std::getline(in, line))
    {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto const cells = split(line, '\t');
        if (cells.size() != 5)
            row_error(line_no, "expected 5 tab-separated columns, found " + std::to_string(cells.size()));

        ItemRecord r;
        r.kind = kind;
        auto const raw_iri = trim(cells[0]);
        auto iri = prefixes.expand(raw_iri);
        if (!iri)
            row_error(line_no, "cannot resolve IRI '" + std::string(raw_iri) + "'");
        r.iri = std::move(*iri);

        auto const score_text = trim(cells[2]);
        std::uint64_t score = 0;
        auto const [ptr, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
        if (score_text.empty() || ec != std::errc {} || ptr != score_text.data() + score_text.size())
            row_error(line_no, "score '" + std::string(score_text) + "' is not a non-negative integer");
        if (score > max_item_score)
            row_error(line_no, "score " + std::string(score_text) + " exceeds 2^32-1");
        if (previous_score && score > *previous_score)
            row_error(line_no,
                      "score " + std::to_string(score) + " is larger than the previous row's "
                          + std::to_string(*previous_score) + "; rows must be ordered by descending score");
        previous_score = score;
        r.score = score;

        ++local.rows;
        r.label = std::string(trim(cells[1]));
        if (r.label.empty())
        {
            ++local.rejected_empty_label;
            continue;
        }
        for (auto& s: split_list_cell(cells[3]))
            if (s != r.label && std::find(r.synonyms.begin(), r.synonyms.end(), s) == r.synonyms.end())
                r.synonyms.push_back(std::move(s));
        r.infos = split_list_cell(cells[4]);
        records.push_back(std::move(r));
    }
    if (local.rejected_empty_label > 0)
        spdlog::warn("skipped {} row(s) with an empty label", local.rejected_empty_label);
    if (stats != nullptr)
        *stats = local;
    return records;
}

std::vector<ItemRecord> load_item_records(const std::filesystem::path& path,
                                          ItemKind kind,
                                          const PrefixTable& prefixes,
                                          ItemLoadStats* stats)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::Input, "cannot read item data '" + path.string() + "'");
    try
    {
        return parse_item_records(in, kind, prefixes, stats);
    }
    catch (const Error& e)
    {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

void write_item_records(std::ostream& out, const std::vector<ItemRecord>& records)
{
    auto const join = [](const std::vector<std::string>& xs) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i)
        {
            if (i > 0)
                s += "; ";
            s += xs[i];
        }
        return s;
    };
    out << "iri\tlabel\tscore\tsynonyms\tinfos\n";
    for (const auto& r: records)
        out << r.iri << '\t' << r.label << '\t' << r.score << '\t' << join(r.synonyms) << '\t' << join(r.infos) << '\n';
}

} // namespace kgq
