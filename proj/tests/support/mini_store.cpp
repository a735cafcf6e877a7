// SPDX-License-Identifier: Apache-2.0
#include "mini_store.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <variant>

namespace kgq::testing
{

namespace
{

using json = nlohmann::json;

enum class Tok
{
    Iri,
    Var,
    Literal,
    Word,
    Punct,
    End,
};

struct Token
{
    Tok kind = Tok::End;
    std::string text;
    Cell cell; // Iri and Literal tokens
};

class Lexer
{
  public:
    Lexer(std::string_view src, PrefixTable& prefixes): _src(src), _prefixes(prefixes) {}

    std::vector<Token> run()
    {
        std::vector<Token> out;
        while (true)
        {
            skip();
            if (_pos >= _src.size())
                break;
            out.push_back(next());
        }
        out.push_back(Token {});
        return out;
    }

  private:
    void skip()
    {
        while (_pos < _src.size())
        {
            if (std::isspace(static_cast<unsigned char>(_src[_pos])))
                ++_pos;
            else if (_src[_pos] == '#')
                while (_pos < _src.size() && _src[_pos] != '\n')
                    ++_pos;
            else
                break;
        }
    }

    std::string resolve(std::string_view pname)
    {
        auto iri = _prefixes.expand(pname);
        if (!iri)
            throw std::runtime_error("unknown prefix in '" + std::string(pname) + "'");
        return *iri;
    }

    Token next()
    {
        char const c = _src[_pos];
        if (c == '<')
        {
            auto end = _src.find('>', _pos);
            if (end == std::string_view::npos)
                throw std::runtime_error("unterminated IRI");
            std::string iri(_src.substr(_pos + 1, end - _pos - 1));
            _pos = end + 1;
            if (_pending_prefix)
            {
                _prefixes.add(*_pending_prefix, iri);
                _pending_prefix.reset();
            }
            return Token { Tok::Iri, iri, Cell::iri(iri) };
        }
        if (c == '?' || c == '$')
        {
            auto start = ++_pos;
            while (_pos < _src.size() && (std::isalnum(static_cast<unsigned char>(_src[_pos])) || _src[_pos] == '_'))
                ++_pos;
            return Token { Tok::Var, std::string(_src.substr(start, _pos - start)), {} };
        }
        if (c == '"')
        {
            std::string value;
            ++_pos;
            while (_pos < _src.size() && _src[_pos] != '"')
            {
                if (_src[_pos] == '\\' && _pos + 1 < _src.size())
                    ++_pos;
                value += _src[_pos++];
            }
            ++_pos;
            std::string lang;
            std::string datatype;
            if (_pos < _src.size() && _src[_pos] == '@')
            {
                auto start = ++_pos;
                while (_pos < _src.size() && (std::isalnum(static_cast<unsigned char>(_src[_pos])) || _src[_pos] == '-'))
                    ++_pos;
                lang = std::string(_src.substr(start, _pos - start));
            }
            else if (_src.substr(_pos, 2) == "^^")
            {
                _pos += 2;
                auto dt = next();
                datatype = dt.kind == Tok::Iri ? dt.text : resolve(dt.text);
            }
            return Token { Tok::Literal, value, Cell::literal(value, datatype, lang) };
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || ((c == '-' || c == '+') && _pos + 1 < _src.size() && std::isdigit(static_cast<unsigned char>(_src[_pos + 1]))))
        {
            auto start = _pos++;
            bool dot = false;
            while (_pos < _src.size() && (std::isdigit(static_cast<unsigned char>(_src[_pos])) ||
                                          (_src[_pos] == '.' && !dot && _pos + 1 < _src.size() && std::isdigit(static_cast<unsigned char>(_src[_pos + 1])))))
                dot |= _src[_pos++] == '.';
            std::string text(_src.substr(start, _pos - start));
            auto const dt = std::string("http://www.w3.org/2001/XMLSchema#") + (dot ? "decimal" : "integer");
            return Token { Tok::Literal, text, Cell::literal(text, dt) };
        }
        if (std::string_view("{}.;,()*").find(c) != std::string_view::npos)
        {
            ++_pos;
            return Token { Tok::Punct, std::string(1, c), {} };
        }
        auto start = _pos;
        while (_pos < _src.size())
        {
            char const d = _src[_pos];
            if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '-' || d == ':' ||
                (d == '.' && _pos + 1 < _src.size() && !std::isspace(static_cast<unsigned char>(_src[_pos + 1])) && _src[_pos + 1] != '}'))
                ++_pos;
            else
                break;
        }
        if (_pos == start)
            throw std::runtime_error(std::string("unexpected character '") + c + "'");
        std::string word(_src.substr(start, _pos - start));
        if (_expect_prefix_name && word.ends_with(':'))
            _pending_prefix = word.substr(0, word.size() - 1);
        else if (word.find(':') != std::string::npos)
        {
            auto iri = resolve(word);
            return Token { Tok::Iri, iri, Cell::iri(iri) };
        }
        _expect_prefix_name = word == "PREFIX" || word == "prefix";
        return Token { Tok::Word, word, {} };
    }

    std::string_view _src;
    PrefixTable& _prefixes;
    std::size_t _pos = 0;
    bool _expect_prefix_name = false;
    std::optional<std::string> _pending_prefix;
};

struct Term
{
    std::optional<std::string> var;
    Cell value;
};

struct TriplePattern
{
    Term s;
    Term p;
    Term o;
};

struct ValuesBlock
{
    std::string var;
    std::vector<Cell> values;
};

struct Query;
using Pattern = std::variant<TriplePattern, ValuesBlock, std::shared_ptr<Query>>;

struct Query
{
    bool ask = false;
    bool distinct = false;
    std::vector<std::string> vars; // empty means *
    std::vector<Pattern> where;
    std::optional<std::size_t> limit;
};

using Binding = std::map<std::string, Cell>;

bool is_keyword(const Token& t, std::string_view word)
{
    if (t.kind != Tok::Word || t.text.size() != word.size())
        return false;
    return std::equal(t.text.begin(), t.text.end(), word.begin(), [](char a, char b) { return std::toupper(static_cast<unsigned char>(a)) == b; });
}

class Parser
{
  public:
    explicit Parser(std::vector<Token> tokens): _t(std::move(tokens)) {}

    Query parse_query()
    {
        auto q = parse_select_or_ask();
        if (_t[_i].kind != Tok::End)
            throw std::runtime_error("trailing input: " + _t[_i].text);
        return q;
    }

    std::vector<TriplePattern> parse_triples_only()
    {
        std::vector<Pattern> out;
        while (_t[_i].kind != Tok::End)
            parse_triples(out);
        std::vector<TriplePattern> triples;
        for (auto& p: out)
            triples.push_back(std::get<TriplePattern>(p));
        return triples;
    }

  private:
    const Token& peek() const { return _t[_i]; }
    Token take() { return _t[_i++]; }
    void expect_punct(char c)
    {
        if (peek().kind != Tok::Punct || peek().text[0] != c)
            throw std::runtime_error(std::string("expected '") + c + "' near '" + peek().text + "'");
        ++_i;
    }
    bool at_punct(char c) const { return peek().kind == Tok::Punct && peek().text[0] == c; }

    Query parse_select_or_ask()
    {
        while (is_keyword(peek(), "PREFIX"))
        {
            ++_i;
            ++_i; // prefix name, already resolved by the lexer
            ++_i; // IRI
        }
        Query q;
        if (is_keyword(peek(), "ASK"))
        {
            ++_i;
            q.ask = true;
        }
        else if (is_keyword(peek(), "SELECT"))
        {
            ++_i;
            if (is_keyword(peek(), "DISTINCT"))
            {
                ++_i;
                q.distinct = true;
            }
            if (at_punct('*'))
                ++_i;
            else
                while (peek().kind == Tok::Var)
                    q.vars.push_back(take().text);
        }
        else
            throw std::runtime_error("unsupported query form: " + peek().text);
        if (is_keyword(peek(), "WHERE"))
            ++_i;
        q.where = parse_group();
        if (is_keyword(peek(), "LIMIT"))
        {
            ++_i;
            q.limit = std::stoull(take().text);
        }
        return q;
    }

    std::vector<Pattern> parse_group()
    {
        expect_punct('{');
        std::vector<Pattern> out;
        while (!at_punct('}'))
        {
            if (peek().kind == Tok::End)
                throw std::runtime_error("unterminated group");
            if (is_keyword(peek(), "VALUES"))
            {
                ++_i;
                ValuesBlock v;
                if (peek().kind != Tok::Var)
                    throw std::runtime_error("VALUES needs a single variable");
                v.var = take().text;
                expect_punct('{');
                while (!at_punct('}'))
                    v.values.push_back(take().cell);
                expect_punct('}');
                out.emplace_back(std::move(v));
            }
            else if (is_keyword(peek(), "SELECT"))
                out.emplace_back(std::make_shared<Query>(parse_select_or_ask()));
            else if (at_punct('{'))
            {
                auto inner = parse_group();
                out.insert(out.end(), inner.begin(), inner.end());
            }
            else if (peek().kind == Tok::Word && !is_keyword(peek(), "A"))
                throw std::runtime_error("unsupported keyword " + peek().text);
            else
                parse_triples(out);
            if (at_punct('.'))
                ++_i;
        }
        expect_punct('}');
        return out;
    }

    Term term()
    {
        auto t = take();
        if (t.kind == Tok::Var)
            return Term { t.text, {} };
        if (t.kind == Tok::Word && (t.text == "a"))
            return Term { std::nullopt, Cell::iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type") };
        if (t.kind == Tok::Word && (t.text == "true" || t.text == "false"))
            return Term { std::nullopt, Cell::literal(t.text, "http://www.w3.org/2001/XMLSchema#boolean") };
        if (t.kind == Tok::Iri || t.kind == Tok::Literal)
            return Term { std::nullopt, t.cell };
        throw std::runtime_error("unexpected term '" + t.text + "'");
    }

    void parse_triples(std::vector<Pattern>& out)
    {
        auto s = term();
        while (true)
        {
            auto p = term();
            while (true)
            {
                out.emplace_back(TriplePattern { s, p, term() });
                if (!at_punct(','))
                    break;
                ++_i;
            }
            if (!at_punct(';'))
                break;
            ++_i;
            if (at_punct('.') || at_punct('}'))
                break;
        }
        if (at_punct('.'))
            ++_i;
    }

    std::vector<Token> _t;
    std::size_t _i = 0;
};

bool unify(const Term& t, const Cell& value, Binding& b)
{
    if (!t.var)
        return t.value == value;
    auto it = b.find(*t.var);
    if (it != b.end())
        return it->second == value;
    b.emplace(*t.var, value);
    return true;
}

bool compatible(const Binding& a, const Binding& b)
{
    for (const auto& [k, v]: b)
        if (auto it = a.find(k); it != a.end() && !(it->second == v))
            return false;
    return true;
}

std::vector<Binding> evaluate(const Query& q, const std::vector<Triple>& data);

std::vector<Binding> evaluate_group(const std::vector<Pattern>& group, const std::vector<Triple>& data)
{
    std::vector<Binding> current { Binding {} };
    for (const auto& pattern: group)
    {
        std::vector<Binding> next;
        if (const auto* tp = std::get_if<TriplePattern>(&pattern))
        {
            for (const auto& b: current)
                for (const auto& t: data)
                {
                    Binding e = b;
                    if (unify(tp->s, t.s, e) && unify(tp->p, t.p, e) && unify(tp->o, t.o, e))
                        next.push_back(std::move(e));
                }
        }
        else if (const auto* vb = std::get_if<ValuesBlock>(&pattern))
        {
            for (const auto& b: current)
                for (const auto& v: vb->values)
                {
                    Binding e = b;
                    if (unify(Term { vb->var, {} }, v, e))
                        next.push_back(std::move(e));
                }
        }
        else
        {
            auto sub = evaluate(*std::get<std::shared_ptr<Query>>(pattern), data);
            for (const auto& b: current)
                for (const auto& s: sub)
                    if (compatible(b, s))
                    {
                        Binding e = b;
                        e.insert(s.begin(), s.end());
                        next.push_back(std::move(e));
                    }
        }
        current = std::move(next);
    }
    return current;
}

std::vector<std::string> projected(const Query& q, const std::vector<Binding>& rows)
{
    if (!q.vars.empty())
        return q.vars;
    std::set<std::string> names;
    for (const auto& r: rows)
        for (const auto& [k, _]: r)
            names.insert(k);
    return { names.begin(), names.end() };
}

std::vector<Binding> evaluate(const Query& q, const std::vector<Triple>& data)
{
    auto rows = evaluate_group(q.where, data);
    auto const vars = projected(q, rows);
    std::vector<Binding> out;
    std::set<std::vector<std::string>> seen;
    for (const auto& r: rows)
    {
        Binding p;
        std::vector<std::string> key;
        for (const auto& v: vars)
            if (auto it = r.find(v); it != r.end())
            {
                p.emplace(v, it->second);
                key.push_back(v + "=" + std::to_string(static_cast<int>(it->second.kind)) + it->second.lexical + "^" + it->second.datatype + "@" + it->second.lang);
            }
        if (q.distinct && !seen.insert(key).second)
            continue;
        out.push_back(std::move(p));
        if (q.limit && out.size() >= *q.limit)
            break;
    }
    return out;
}

json cell_json(const Cell& c)
{
    switch (c.kind)
    {
        case CellKind::Iri: return { { "type", "uri" }, { "value", c.lexical } };
        case CellKind::Blank: return { { "type", "bnode" }, { "value", c.lexical } };
        default:
        {
            json j { { "type", "literal" }, { "value", c.lexical } };
            if (!c.lang.empty())
                j["xml:lang"] = c.lang;
            if (!c.datatype.empty())
                j["datatype"] = c.datatype;
            return j;
        }
    }
}

} // namespace

void MiniStore::load(std::string_view text, const PrefixTable& prefixes)
{
    PrefixTable table = prefixes;
    Parser parser(Lexer(text, table).run());
    for (auto& tp: parser.parse_triples_only())
    {
        if (tp.s.var || tp.p.var || tp.o.var)
            throw std::runtime_error("variables are not allowed in data");
        add(tp.s.value, tp.p.value, tp.o.value);
    }
}

void MiniStore::add(Cell s, Cell p, Cell o)
{
    _triples.push_back(Triple { std::move(s), std::move(p), std::move(o) });
}

std::string MiniStore::answer(std::string_view sparql) const
{
    PrefixTable table;
    Parser parser(Lexer(sparql, table).run());
    auto const q = parser.parse_query();
    auto const rows = evaluate(q, _triples);
    if (q.ask)
        return json { { "head", json::object() }, { "boolean", !rows.empty() } }.dump();
    auto const vars = projected(q, rows);
    json bindings = json::array();
    for (const auto& r: rows)
    {
        json b = json::object();
        for (const auto& [k, v]: r)
            b[k] = cell_json(v);
        bindings.push_back(std::move(b));
    }
    return json { { "head", { { "vars", vars } } }, { "results", { { "bindings", bindings } } } }.dump();
}

std::shared_ptr<SparqlTransport> MiniStore::transport(std::shared_ptr<std::vector<std::string>> log) const
{
    auto self = std::make_shared<MiniStore>(*this);
    auto mutex = std::make_shared<std::mutex>();
    return std::make_shared<FunctionTransport>([self, log, mutex](const KnowledgeGraphConfig&, std::string_view sparql) {
        if (log)
        {
            std::lock_guard lock(*mutex);
            log->emplace_back(sparql);
        }
        try
        {
            return HttpResponse { 200, self->answer(sparql) };
        }
        catch (const std::exception& e)
        {
            return HttpResponse { 400, std::string("unsupported query: ") + e.what() };
        }
    });
}

} // namespace kgq::testing
