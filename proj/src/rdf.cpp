// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/rdf.hpp>

#include <algorithm>
#include <array>
#include <cctype>

namespace kgq
{

namespace
{

bool is_name_start(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
}

bool is_name_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == '.';
}

bool is_local_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == '.' || c == '%'
           || c == ':';
}

bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size()
           && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
                  return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
              });
}

// IRIREF body characters per the SPARQL grammar.
bool is_iriref_char(char c)
{
    auto const u = static_cast<unsigned char>(c);
    if (u <= 0x20)
        return false;
    switch (c)
    {
        case '<':
        case '>':
        case '"':
        case '{':
        case '}':
        case '|':
        case '^':
        case '`':
        case '\\': return false;
        default: return true;
    }
}

} // namespace

const std::vector<Prefix>& well_known_prefixes()
{
    static const std::vector<Prefix> prefixes {
        { "rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#" },
        { "rdfs", "http://www.w3.org/2000/01/rdf-schema#" },
        { "xsd", "http://www.w3.org/2001/XMLSchema#" },
        { "owl", "http://www.w3.org/2002/07/owl#" },
    };
    return prefixes;
}

bool is_well_known_vocabulary(std::string_view iri)
{
    return std::any_of(well_known_prefixes().begin(), well_known_prefixes().end(), [&](const Prefix& p) {
        return iri.starts_with(p.base);
    });
}

bool looks_like_absolute_iri(std::string_view text)
{
    auto const colon = text.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 >= text.size())
        return false;
    if (!is_name_start(text[0]))
        return false;
    for (std::size_t i = 1; i < colon; ++i)
    {
        char const c = text[i];
        if (std::isalnum(static_cast<unsigned char>(c)) == 0 && c != '+' && c != '-' && c != '.')
            return false;
    }
    if (std::any_of(text.begin(), text.end(), [](char c) { return !is_iriref_char(c); }))
        return false;
    auto const scheme = text.substr(0, colon);
    return text.substr(colon + 1).starts_with("//") || iequals(scheme, "urn") || iequals(scheme, "mailto");
}

std::string_view iri_local_name(std::string_view iri)
{
    auto const pos = iri.find_last_of("/#:");
    if (pos == std::string_view::npos || pos + 1 >= iri.size())
        return iri;
    return iri.substr(pos + 1);
}

bool is_plain_local_name(std::string_view local)
{
    if (local.empty())
        return false;
    auto const first = static_cast<unsigned char>(local.front());
    if (std::isalnum(first) == 0 && local.front() != '_')
        return false;
    return std::all_of(local.begin(), local.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
    });
}

PrefixTable::PrefixTable(std::vector<Prefix> prefixes)
{
    for (auto& p: prefixes)
        add(std::move(p.name), std::move(p.base));
}

void PrefixTable::add(std::string name, std::string base)
{
    if (std::any_of(_prefixes.begin(), _prefixes.end(), [&](const Prefix& p) { return p.name == name; }))
        fail(ErrorKind::Input, "duplicate prefix name '" + name + "'");
    _prefixes.push_back(Prefix { std::move(name), std::move(base) });
}

std::optional<std::string_view> PrefixTable::base_of(std::string_view name) const
{
    for (const auto& p: _prefixes)
        if (p.name == name)
            return std::string_view(p.base);
    for (const auto& p: well_known_prefixes())
        if (p.name == name)
            return std::string_view(p.base);
    return std::nullopt;
}

std::optional<std::string> PrefixTable::expand(std::string_view term) const
{
    if (term.size() >= 2 && term.front() == '<' && term.back() == '>')
    {
        auto const body = term.substr(1, term.size() - 2);
        if (body.empty() || !std::all_of(body.begin(), body.end(), is_iriref_char))
            return std::nullopt;
        return std::string(body);
    }
    auto const colon = term.find(':');
    if (colon == std::string_view::npos)
        return std::nullopt;
    // Declared prefixes win over scheme detection so `wd:Q42` never reads as a scheme.
    if (auto base = base_of(term.substr(0, colon)))
    {
        auto const local = term.substr(colon + 1);
        if (!std::all_of(local.begin(), local.end(), is_local_char))
            return std::nullopt;
        return std::string(*base) + std::string(local);
    }
    if (looks_like_absolute_iri(term))
        return std::string(term);
    return std::nullopt;
}

std::string PrefixTable::shorten(std::string_view iri) const
{
    const Prefix* best = nullptr;
    for (const auto& p: _prefixes)
        if (iri.starts_with(p.base) && (best == nullptr || p.base.size() > best->base.size()))
            best = &p;
    for (const auto& p: well_known_prefixes())
        if (iri.starts_with(p.base) && (best == nullptr || p.base.size() > best->base.size()))
            if (!std::any_of(_prefixes.begin(), _prefixes.end(), [&](const Prefix& d) { return d.name == p.name; }))
                best = &p;
    if (best != nullptr)
    {
        auto const local = iri.substr(best->base.size());
        if (is_plain_local_name(local))
            return best->name + ":" + std::string(local);
    }
    return "<" + std::string(iri) + ">";
}

std::set<std::string> extract_query_iris(std::string_view q, const PrefixTable& table)
{
    std::set<std::string> out;
    std::vector<Prefix> local_prefixes;

    auto const resolve = [&](std::string_view name) -> std::optional<std::string_view> {
        for (const auto& p: local_prefixes)
            if (p.name == name)
                return std::string_view(p.base);
        return table.base_of(name);
    };

    std::size_t i = 0;
    auto const n = q.size();
    auto const skip_ws = [&] {
        while (i < n && std::isspace(static_cast<unsigned char>(q[i])) != 0)
            ++i;
    };

    while (i < n)
    {
        char const c = q[i];
        if (c == '#')
        {
            while (i < n && q[i] != '\n')
                ++i;
            continue;
        }
        if (c == '"' || c == '\'')
        {
            auto const triple = i + 2 < n && q[i + 1] == c && q[i + 2] == c;
            if (triple)
            {
                auto const end = q.find(std::string(3, c), i + 3);
                i = end == std::string_view::npos ? n : end + 3;
            }
            else
            {
                ++i;
                while (i < n && q[i] != c)
                    i += q[i] == '\\' ? 2 : 1;
                ++i;
            }
            continue;
        }
        if (c == '<')
        {
            auto j = i + 1;
            while (j < n && is_iriref_char(q[j]))
                ++j;
            if (j < n && q[j] == '>' && j > i + 1)
            {
                out.emplace(q.substr(i + 1, j - i - 1));
                i = j + 1;
            }
            else
                ++i;
            continue;
        }
        if (c == '?' || c == '$')
        {
            ++i;
            while (i < n && is_name_char(q[i]))
                ++i;
            continue;
        }
        if (is_name_start(c) || c == ':')
        {
            auto const start = i;
            while (i < n && is_name_char(q[i]))
                ++i;
            auto word = q.substr(start, i - start);
            if (iequals(word, "PREFIX"))
            {
                skip_ws();
                auto const name_start = i;
                while (i < n && is_name_char(q[i]))
                    ++i;
                auto const name = q.substr(name_start, i - name_start);
                if (i < n && q[i] == ':')
                    ++i;
                skip_ws();
                if (i < n && q[i] == '<')
                {
                    auto const close = q.find('>', i);
                    if (close != std::string_view::npos)
                    {
                        local_prefixes.push_back(Prefix { std::string(name), std::string(q.substr(i + 1, close - i - 1)) });
                        i = close + 1;
                    }
                }
                continue;
            }
            if (iequals(word, "BASE"))
            {
                skip_ws();
                if (i < n && q[i] == '<')
                {
                    auto const close = q.find('>', i);
                    i = close == std::string_view::npos ? n : close + 1;
                }
                continue;
            }
            if (i < n && q[i] == ':')
            {
                // A prefixed name: word is the prefix (possibly empty when c == ':').
                if (start > 0 && (std::isalnum(static_cast<unsigned char>(q[start - 1])) != 0 || q[start - 1] == '_'))
                    continue;
                auto const prefix = word;
                ++i;
                auto const local_start = i;
                while (i < n && is_local_char(q[i]))
                    ++i;
                auto local = q.substr(local_start, i - local_start);
                while (!local.empty() && (local.back() == '.' || local.back() == ':'))
                {
                    local.remove_suffix(1);
                    --i;
                }
                if (auto base = resolve(prefix))
                    out.insert(std::string(*base) + std::string(local));
            }
            continue;
        }
        ++i;
    }
    return out;
}

} // namespace kgq
