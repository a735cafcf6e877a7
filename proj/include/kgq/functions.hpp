// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kgq
{

enum class FunctionId : std::uint8_t
{
    Answer,
    Cancel,
    Execute,
    List,
    SearchEntity,
    SearchProperty,
    SearchPropertyOfEntity,
    SearchObjectOfProperty,
    SearchAutocomplete,
    SearchConstrained,
    FindSimilarExamples,
    FindExamples,
};

inline constexpr std::size_t function_count = 12;

struct ParameterSpec
{
    std::string name;
    std::string type; // "string" or "object"
    std::string description;
    bool required = true;
    std::vector<std::string> choices;        // enum values for strings
    std::vector<ParameterSpec> fields;       // members of an object parameter
};

struct FunctionSpec
{
    FunctionId id;
    std::string mnemonic; // three letters, e.g. "SEN"
    std::string name;     // tool name offered to the model
    std::string description;
    std::vector<ParameterSpec> parameters;

    /// Tool declaration in the chat-completions format:
    /// {"type": "function", "function": {name, description, parameters}}.
    [[nodiscard]] nlohmann::json tool_schema() const;
};

/// All twelve functions in declaration order.
const std::vector<FunctionSpec>& function_specs();
const FunctionSpec& function_spec(FunctionId id);

std::optional<FunctionId> function_by_name(std::string_view name);
std::optional<FunctionId> function_by_mnemonic(std::string_view mnemonic);

enum class FunctionSetId : std::uint8_t
{
    Base,        // b
    Search,      // s
    Extended,    // se
    Autocomplete, // sa
    Constrained, // sc
};

enum class FewShotMode : std::uint8_t
{
    None,
    Similar,
    Random,
};

std::optional<FunctionSetId> parse_function_set(std::string_view text);
std::string_view to_string(FunctionSetId id);
std::optional<FewShotMode> parse_few_shot_mode(std::string_view text);
std::string_view to_string(FewShotMode mode);

/// Members of a function set, with FSE or FEX added in few-shot mode.
std::set<FunctionId> function_set_members(FunctionSetId id, FewShotMode few_shot = FewShotMode::None);

/// Tool declarations of a set, in FunctionId order.
nlohmann::json tool_schemas(const std::set<FunctionId>& members);

} // namespace kgq
