// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/sparql.hpp>
#include <kgq/text.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace kgq
{

using json = nlohmann::json;

std::string_view to_string(QueryErrorKind kind)
{
    switch (kind)
    {
        case QueryErrorKind::Timeout: return "timeout";
        case QueryErrorKind::EndpointHttp: return "endpoint_http";
        case QueryErrorKind::Parse: return "parse";
        case QueryErrorKind::MalformedQuery: return "malformed_query";
    }
    return "unknown";
}

ResultTable ResultTable::from_rows(std::vector<std::string> variables, std::vector<std::vector<Cell>> rows)
{
    ResultTable t;
    t.total_cols = variables.size();
    t.total_rows = rows.size();
    t.variables = std::move(variables);
    t.rows = std::move(rows);
    return t;
}

ResultTable ResultTable::from_ask(bool value)
{
    ResultTable t;
    t.ask_result = value;
    return t;
}

namespace
{

bool is_word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::string upper_word_at(std::string_view q, std::size_t pos)
{
    std::string w;
    while (pos < q.size() && is_word_char(q[pos]))
        w += static_cast<char>(std::toupper(static_cast<unsigned char>(q[pos++])));
    return w;
}

std::size_t skip_space_and_comments(std::string_view q, std::size_t i)
{
    while (i < q.size())
    {
        if (std::isspace(static_cast<unsigned char>(q[i])) != 0)
            ++i;
        else if (q[i] == '#')
        {
            while (i < q.size() && q[i] != '\n')
                ++i;
        }
        else
            break;
    }
    return i;
}

} // namespace

std::size_t prologue_end(std::string_view q)
{
    std::size_t i = 0;
    while (true)
    {
        i = skip_space_and_comments(q, i);
        auto const word = upper_word_at(q, i);
        if (word != "PREFIX" && word != "BASE")
            return i;
        auto const close = q.find('>', i);
        if (close == std::string_view::npos)
            return i;
        i = close + 1;
    }
}

QueryForm classify_query(std::string_view sparql)
{
    auto const word = upper_word_at(sparql, prologue_end(sparql));
    if (word == "SELECT")
        return QueryForm::Select;
    if (word == "ASK")
        return QueryForm::Ask;
    if (word == "CONSTRUCT")
        return QueryForm::Construct;
    if (word == "DESCRIBE")
        return QueryForm::Describe;
    static constexpr std::array update_words { "INSERT", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE", "ADD", "MOVE", "COPY", "WITH" };
    if (std::find(update_words.begin(), update_words.end(), word) != update_words.end())
        return QueryForm::Update;
    return QueryForm::Unknown;
}

std::optional<std::string> validate_query(std::string_view q)
{
    if (trim(q).empty())
        return "query is empty";
    switch (classify_query(q))
    {
        case QueryForm::Update: return "update queries are not allowed";
        case QueryForm::Unknown: return "query must start with SELECT, ASK, CONSTRUCT or DESCRIBE";
        default: break;
    }
    std::vector<char> stack;
    for (std::size_t i = 0; i < q.size(); ++i)
    {
        char const c = q[i];
        if (c == '#')
        {
            while (i < q.size() && q[i] != '\n')
                ++i;
        }
        else if (c == '"' || c == '\'')
        {
            auto const triple = i + 2 < q.size() && q[i + 1] == c && q[i + 2] == c;
            if (triple)
            {
                auto const end = q.find(std::string(3, c), i + 3);
                if (end == std::string_view::npos)
                    return "unterminated string literal";
                i = end + 2;
            }
            else
            {
                ++i;
                while (i < q.size() && q[i] != c && q[i] != '\n')
                    i += q[i] == '\\' ? 2 : 1;
                if (i >= q.size() || q[i] != c)
                    return "unterminated string literal";
            }
        }
        else if (c == '<')
        {
            auto j = i + 1;
            while (j < q.size() && q[j] != '>' && std::isspace(static_cast<unsigned char>(q[j])) == 0 && q[j] != '<')
                ++j;
            if (j < q.size() && q[j] == '>')
                i = j;
        }
        else if (c == '{' || c == '(' || c == '[')
            stack.push_back(c);
        else if (c == '}' || c == ')' || c == ']')
        {
            char const open = c == '}' ? '{' : c == ')' ? '(' : '[';
            if (stack.empty() || stack.back() != open)
                return std::string("unbalanced '") + c + "'";
            stack.pop_back();
        }
    }
    if (!stack.empty())
        return std::string("unbalanced '") + stack.back() + "'";
    return std::nullopt;
}

ResultTable parse_sparql_json(std::string_view body, std::size_t row_cap)
{
    json doc;
    try
    {
        doc = json::parse(body);
    }
    catch (const json::parse_error& e)
    {
        throw QueryError { QueryErrorKind::Parse, std::string("response is not valid JSON: ") + e.what() };
    }
    auto const bad = [](const std::string& what) { return QueryError { QueryErrorKind::Parse, "unexpected result format: " + what }; };
    if (!doc.is_object())
        throw bad("top level is not an object");
    if (auto it = doc.find("boolean"); it != doc.end())
    {
        if (!it->is_boolean())
            throw bad("'boolean' is not a boolean");
        return ResultTable::from_ask(it->get<bool>());
    }
    auto head = doc.find("head");
    auto results = doc.find("results");
    if (head == doc.end() || results == doc.end())
        throw bad("missing 'head' or 'results'");

    ResultTable t;
    if (auto vars = head->find("vars"); vars != head->end())
    {
        if (!vars->is_array())
            throw bad("'head.vars' is not an array");
        for (const auto& v: *vars)
            t.variables.push_back(v.get<std::string>());
    }
    t.total_cols = t.variables.size();
    auto bindings = results->find("bindings");
    if (bindings == results->end() || !bindings->is_array())
        throw bad("missing 'results.bindings'");
    t.total_rows = bindings->size();
    auto const keep = std::min(row_cap, bindings->size());
    t.truncated = keep < bindings->size();
    t.rows.reserve(keep);
    for (std::size_t r = 0; r < keep; ++r)
    {
        const auto& b = (*bindings)[r];
        if (!b.is_object())
            throw bad("binding is not an object");
        std::vector<Cell> row;
        row.reserve(t.variables.size());
        for (const auto& var: t.variables)
        {
            auto cell = b.find(var);
            if (cell == b.end())
            {
                row.push_back(Cell::unbound());
                continue;
            }
            auto const type = cell->value("type", "");
            auto value = cell->value("value", "");
            if (type == "uri")
                row.push_back(Cell::iri(std::move(value)));
            else if (type == "bnode")
                row.push_back(Cell::blank(std::move(value)));
            else if (type == "literal" || type == "typed-literal")
                row.push_back(Cell::literal(std::move(value), cell->value("datatype", ""), cell->value("xml:lang", "")));
            else
                throw bad("unknown term type '" + type + "'");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string to_sparql_json(const ResultTable& t)
{
    json doc;
    if (t.is_ask())
    {
        doc["head"] = json::object();
        doc["boolean"] = *t.ask_result;
        return doc.dump();
    }
    doc["head"]["vars"] = t.variables;
    auto bindings = json::array();
    for (const auto& row: t.rows)
    {
        json b = json::object();
        for (std::size_t c = 0; c < row.size() && c < t.variables.size(); ++c)
        {
            const auto& cell = row[c];
            json v;
            switch (cell.kind)
            {
                case CellKind::Unbound: continue;
                case CellKind::Iri: v["type"] = "uri"; break;
                case CellKind::Blank: v["type"] = "bnode"; break;
                case CellKind::Literal:
                    v["type"] = "literal";
                    if (!cell.datatype.empty())
                        v["datatype"] = cell.datatype;
                    if (!cell.lang.empty())
                        v["xml:lang"] = cell.lang;
                    break;
            }
            v["value"] = cell.lexical;
            b[t.variables[c]] = std::move(v);
        }
        bindings.push_back(std::move(b));
    }
    doc["results"]["bindings"] = std::move(bindings);
    return doc.dump();
}

namespace
{

std::string endpoint_message(const HttpResponse& r)
{
    std::string message;
    try
    {
        auto doc = json::parse(r.body);
        for (const char* key: { "exception", "message", "error" })
            if (doc.contains(key) && doc[key].is_string())
            {
                message = doc[key].get<std::string>();
                break;
            }
    }
    catch (const json::exception&)
    {
    }
    if (message.empty())
        message = std::string(trim(r.body));
    if (message.size() > 2000)
        message = message.substr(0, 2000) + " ...";
    if (message.empty())
        message = "no message";
    return "HTTP " + std::to_string(r.status) + ": " + message;
}

} // namespace

HttpResponse HttpTransport::post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds timeout)
{
    HttpRequest request;
    request.url = kg.endpoint;
    request.headers.emplace_back("Accept", "application/sparql-results+json");
    for (const auto& [name, value]: kg.headers)
        request.headers.emplace_back(name, value);
    request.body = std::string(sparql);
    request.content_type = "application/sparql-query";
    request.timeout = timeout;
    return http_post(request);
}

bool HttpTransport::reachable(const KnowledgeGraphConfig& kg)
{
    try
    {
        post_query(kg, "ASK {}", std::chrono::milliseconds(10'000));
        return true;
    }
    catch (const TimeoutError&)
    {
        return false;
    }
    catch (const Error&)
    {
        return false;
    }
}

namespace
{

std::string file_url_path(const std::string& url)
{
    constexpr std::string_view scheme = "file://";
    return url.starts_with(scheme) ? url.substr(scheme.size()) : url;
}

} // namespace

const CannedTransport::Table& CannedTransport::load(const std::string& path)
{
    std::lock_guard lock(_mutex);
    if (auto it = _files.find(path); it != _files.end())
        return it->second;
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::Transport, "cannot open canned endpoint file '" + path + "'");
    Table table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (trim(line).empty())
            continue;
        json entry;
        try
        {
            entry = json::parse(line);
        }
        catch (const json::parse_error& e)
        {
            fail(ErrorKind::Input, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        Canned c;
        c.status = entry.value("status", 200);
        if (auto b = entry.find("body"); b != entry.end())
            c.body = b->dump();
        else
            c.body = entry.value("text", "");
        c.delay = std::chrono::milliseconds(entry.value("delay_ms", 0));
        table[normalize_whitespace(entry.at("query").get<std::string>())] = std::move(c);
    }
    return _files.emplace(path, std::move(table)).first->second;
}

HttpResponse CannedTransport::post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds timeout)
{
    const auto& table = load(file_url_path(kg.endpoint));
    auto it = table.find(normalize_whitespace(sparql));
    if (it == table.end())
        return HttpResponse { 400, R"({"exception":"no canned response for this query"})" };
    if (it->second.delay > std::chrono::milliseconds::zero())
    {
        std::this_thread::sleep_for(std::min(it->second.delay, timeout));
        if (it->second.delay >= timeout)
            throw TimeoutError { "query timed out" };
    }
    return HttpResponse { it->second.status, it->second.body };
}

bool CannedTransport::reachable(const KnowledgeGraphConfig& kg)
{
    try
    {
        load(file_url_path(kg.endpoint));
        return true;
    }
    catch (const Error&)
    {
        return false;
    }
}

HttpResponse RoutingTransport::post_query(const KnowledgeGraphConfig& kg, std::string_view sparql, std::chrono::milliseconds timeout)
{
    if (kg.endpoint.starts_with("file://"))
        return _canned.post_query(kg, sparql, timeout);
    return _http.post_query(kg, sparql, timeout);
}

bool RoutingTransport::reachable(const KnowledgeGraphConfig& kg)
{
    return kg.endpoint.starts_with("file://") ? _canned.reachable(kg) : _http.reachable(kg);
}

SparqlClientOptions SparqlClientOptions::from_env()
{
    SparqlClientOptions o;
    if (const char* v = std::getenv("KGQ_SPARQL_TIMEOUT"); v != nullptr && *v != '\0')
    {
        char* end = nullptr;
        double const seconds = std::strtod(v, &end);
        if (end != v && seconds > 0)
            o.timeout = std::chrono::milliseconds(static_cast<long long>(seconds * 1000));
    }
    return o;
}

SparqlClient::SparqlClient(std::shared_ptr<SparqlTransport> transport, SparqlClientOptions options):
    _transport(std::move(transport)), _options(options)
{
}

SparqlClient SparqlClient::with_row_cap(std::size_t row_cap) const
{
    auto copy = *this;
    copy._options.row_cap = row_cap;
    return copy;
}

QueryOutcome SparqlClient::execute(const KnowledgeGraphConfig& kg,
                                   std::string_view sparql,
                                   std::optional<std::chrono::milliseconds> timeout) const
{
    if (auto problem = validate_query(sparql))
        return QueryError { QueryErrorKind::MalformedQuery, *problem };
    auto const limit = timeout.value_or(_options.timeout);
    HttpResponse response;
    try
    {
        response = _transport->post_query(kg, sparql, limit);
    }
    catch (const TimeoutError& e)
    {
        return QueryError { QueryErrorKind::Timeout, e.message };
    }
    catch (const Error& e)
    {
        if (e.kind() != ErrorKind::Transport)
            throw;
        return QueryError { QueryErrorKind::EndpointHttp, e.what() };
    }
    if (response.status >= 400 || response.status < 100)
        return QueryError { QueryErrorKind::EndpointHttp, endpoint_message(response) };
    try
    {
        return parse_sparql_json(response.body, _options.row_cap);
    }
    catch (QueryError& e)
    {
        return std::move(e);
    }
}

namespace
{

std::string escape_literal(std::string_view s)
{
    std::string out;
    out.reserve(s.size() + 2);
    for (char c: s)
    {
        switch (c)
        {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr std::string_view xsd_string = "http://www.w3.org/2001/XMLSchema#string";
constexpr std::string_view rdf_lang_string = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";
constexpr std::string_view ellipsis = "…";

std::string plural(std::size_t n, std::string_view word)
{
    return std::to_string(n) + " " + std::string(word) + (n == 1 ? "" : "s");
}

// Indices kept when showing at most `render_limit` of `total` entries; the
// ellipsis goes after position render_edge - 1 when the list is cut.
std::vector<std::size_t> kept_positions(std::size_t total, std::size_t available)
{
    std::vector<std::size_t> out;
    if (total <= render_limit)
    {
        for (std::size_t i = 0; i < std::min(total, available); ++i)
            out.push_back(i);
        return out;
    }
    for (std::size_t i = 0; i < render_edge && i < available; ++i)
        out.push_back(i);
    auto const tail_end = std::min(total, available);
    for (std::size_t i = tail_end >= render_edge ? tail_end - render_edge : 0; i < tail_end; ++i)
        if (i >= render_edge)
            out.push_back(i);
    return out;
}

} // namespace

std::string render_cell(const Cell& cell, const PrefixTable& prefixes, std::set<std::string>* iris)
{
    switch (cell.kind)
    {
        case CellKind::Unbound: return {};
        case CellKind::Blank: return "_:" + cell.lexical;
        case CellKind::Iri:
            if (iris != nullptr)
                iris->insert(cell.lexical);
            return prefixes.shorten(cell.lexical);
        case CellKind::Literal:
        {
            auto out = "\"" + escape_literal(cell.lexical) + "\"";
            if (!cell.lang.empty())
                out += "@" + cell.lang;
            else if (!cell.datatype.empty() && cell.datatype != xsd_string && cell.datatype != rdf_lang_string)
            {
                if (iris != nullptr)
                    iris->insert(cell.datatype);
                out += "^^" + prefixes.shorten(cell.datatype);
            }
            return out;
        }
    }
    return {};
}

RenderedTable render_table(const ResultTable& t, const PrefixTable& prefixes)
{
    RenderedTable out;
    if (t.is_ask())
    {
        out.text = std::string("Result: ") + (*t.ask_result ? "true" : "false");
        return out;
    }

    auto const total_cols = std::max(t.total_cols, t.variables.size());
    auto const cols = kept_positions(total_cols, t.variables.size());
    auto const cut_cols = total_cols > render_limit;

    auto const join_line = [&](auto&& cell_text) {
        std::string line;
        for (std::size_t k = 0; k < cols.size(); ++k)
        {
            if (k > 0)
                line += " | ";
            if (cut_cols && k == render_edge)
            {
                line += ellipsis;
                line += " | ";
            }
            line += cell_text(cols[k]);
        }
        return line;
    };

    out.text += join_line([&](std::size_t c) { return "?" + t.variables[c]; });
    out.text += '\n';

    auto const rows = kept_positions(t.total_rows, t.rows.size());
    auto const cut_rows = t.total_rows > render_limit;
    for (std::size_t k = 0; k < rows.size(); ++k)
    {
        if (cut_rows && k == render_edge)
        {
            out.text += ellipsis;
            out.text += '\n';
        }
        const auto& row = t.rows[rows[k]];
        out.text += join_line([&](std::size_t c) { return c < row.size() ? render_cell(row[c], prefixes, &out.iris) : std::string(); });
        out.text += '\n';
    }
    out.text += plural(t.total_rows, "row") + " total, " + plural(total_cols, "column") + " total";
    if (t.truncated)
        out.text += " (only the first " + std::to_string(t.rows.size()) + " rows were retrieved)";
    return out;
}

} // namespace kgq
