// SPDX-License-Identifier: Apache-2.0
#include <kgq/text.hpp>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cctype>
#include <cstdio>

namespace kgq
{

std::vector<std::string_view> split(std::string_view text, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true)
    {
        auto const pos = text.find(sep, start);
        if (pos == std::string_view::npos)
        {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view text)
{
    auto const is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && is_space(text.front()))
        text.remove_prefix(1);
    while (!text.empty() && is_space(text.back()))
        text.remove_suffix(1);
    return text;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i)
    {
        if (i > 0)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view data) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c: data)
    {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace
{

bool is_ascii(std::string_view text)
{
    for (unsigned char c: text)
        if (c >= 0x80)
            return false;
    return true;
}

// ASCII fast path; identical output to the ICU path for ASCII input.
std::vector<std::string> tokenize_ascii(std::string_view text)
{
    std::vector<std::string> out;
    std::string current;
    for (unsigned char c: text)
    {
        if (std::isalnum(c) != 0)
            current += static_cast<char>(std::tolower(c));
        else if (!current.empty())
            out.push_back(std::move(current)), current.clear();
    }
    if (!current.empty())
        out.push_back(std::move(current));
    return out;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    if (is_ascii(text))
        return tokenize_ascii(text);

    UErrorCode status = U_ZERO_ERROR;
    auto const* nfc = icu::Normalizer2::getNFCInstance(status);
    auto const source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    icu::UnicodeString normalized = U_SUCCESS(status) ? nfc->normalize(source, status) : source;
    if (U_FAILURE(status))
        normalized = source;
    normalized.toLower(icu::Locale::getRoot());
    // Lowercasing may decompose (e.g. U+0130); recompose.
    status = U_ZERO_ERROR;
    auto recomposed = nfc->normalize(normalized, status);
    if (U_SUCCESS(status))
        normalized = recomposed;

    std::vector<std::string> out;
    icu::UnicodeString current;
    auto const flush = [&] {
        if (!current.isEmpty())
        {
            std::string s;
            current.toUTF8String(s);
            out.push_back(std::move(s));
            current.remove();
        }
    };
    for (int32_t i = 0; i < normalized.length();)
    {
        UChar32 const cp = normalized.char32At(i);
        i += U16_LENGTH(cp);
        // Combining marks that survive NFC stay attached to their token.
        if (u_isalnum(cp) != 0 || (!current.isEmpty() && (U_GET_GC_MASK(cp) & U_GC_M_MASK) != 0))
            current.append(cp);
        else
            flush();
    }
    flush();
    return out;
}

std::string normalize_whitespace(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (char c: text)
    {
        if (std::isspace(static_cast<unsigned char>(c)) != 0)
        {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

} // namespace kgq
