#pragma once

// JSON forms of the symbolic types. Readers are strict: unknown keys and
// wrong types raise ConfigError.

#include "json.hpp"

#include "genvp/puzzle.hpp"

namespace genvp {

using Json = nlohmann::json;

Json to_json(const AttributeConfig& attribute);
AttributeConfig attribute_from_json(const Json& j);

Json to_json(const GenerationConfig& config);
// Parses and validates.
GenerationConfig generation_config_from_json(const Json& j);

Json to_json(const RuleMatrix& rules);
RuleMatrix rule_matrix_from_json(const Json& j);

Json to_json(const RuleSpec& spec);
RuleSpec rule_spec_from_json(const Json& j);

Json to_json(const PanelSymbolic& panel);
PanelSymbolic panel_from_json(const Json& j);

Json to_json(const PuzzleSymbolic& puzzle);
PuzzleSymbolic puzzle_from_json(const Json& j);

Json to_json(const ChoiceList& choices);
ChoiceList choice_list_from_json(const Json& j);

// Rejects keys outside `allowed`; `where` names the object in the message.
void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where);

// Stable 64-bit FNV-1a digest of a JSON document's compact dump.
std::uint64_t json_hash(const Json& j);
std::string hex64(std::uint64_t v);

}  // namespace genvp
