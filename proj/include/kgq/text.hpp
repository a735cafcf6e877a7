// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kgq
{

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// 64-bit FNV-1a; stable across platforms, used for cache keys and the
/// hashing embedding provider.
std::uint64_t fnv1a64(std::string_view data) noexcept;
std::string hex64(std::uint64_t value);

/// Lowercased, NFC-normalized tokens split on any non-alphanumeric code
/// point. Empty tokens are dropped and order is preserved.
std::vector<std::string> tokenize(std::string_view text);

/// Collapses whitespace runs to single spaces and trims.
std::string normalize_whitespace(std::string_view text);

} // namespace kgq
