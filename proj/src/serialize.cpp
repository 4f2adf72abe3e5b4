#include "genvp/serialize.hpp"

#include <algorithm>
#include <cstdio>

#include "genvp/error.hpp"

namespace genvp {

namespace {

template <typename T>
T get(const Json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) {
    throw ConfigError(std::string(where) + ": missing key '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, std::string_view where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

std::uint64_t json_hash(const Json& j) { return fnv1a(j.dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json to_json(const AttributeConfig& a) {
  Json rules = Json::array();
  for (RuleKind k : a.allowed_rules) rules.push_back(std::string(to_string(k)));
  Json j = {{"name", a.domain.name},
            {"role", a.domain.role == AttributeRole::kRelevant ? "relevant" : "distractor"},
            {"values", a.domain.values},
            {"rules", rules}};
  if (!a.domain.labels.empty()) j["labels"] = a.domain.labels;
  return j;
}

AttributeConfig attribute_from_json(const Json& j) {
  check_keys(j, {"name", "role", "values", "labels", "rules"}, "attribute");
  AttributeConfig a;
  a.domain.name = get<std::string>(j, "name", "attribute");
  const std::string where = "attribute " + a.domain.name;
  a.domain.id = parse_attribute_id(a.domain.name);
  const auto role = get<std::string>(j, "role", where);
  if (role == "relevant") {
    a.domain.role = AttributeRole::kRelevant;
  } else if (role == "distractor") {
    a.domain.role = AttributeRole::kDistractor;
  } else {
    throw ConfigError(where + ": role must be 'relevant' or 'distractor'");
  }
  a.domain.values = get<std::vector<double>>(j, "values", where);
  a.domain.labels = get_or<std::vector<std::string>>(j, "labels", {}, where);
  const auto rules = get_or<std::vector<std::string>>(j, "rules", {"random"}, where);
  for (const auto& r : rules) a.allowed_rules.push_back(parse_rule_kind(r));
  return a;
}

Json to_json(const GenerationConfig& c) {
  Json attrs = Json::array();
  for (const auto& a : c.attributes) attrs.push_back(to_json(a));
  return {{"layout", std::string(to_string(c.layout))},
          {"rows", c.rows},
          {"cols", c.cols},
          {"negatives", c.negatives},
          {"seed", c.seed},
          {"max_attempts", c.max_attempts},
          {"attributes", attrs}};
}

GenerationConfig generation_config_from_json(const Json& j) {
  constexpr std::string_view w = "generation";
  check_keys(j, {"layout", "rows", "cols", "negatives", "seed", "max_attempts", "attributes"}, w);
  GenerationConfig c;
  c.layout = parse_layout_id(get<std::string>(j, "layout", w));
  c.rows = get_or<int>(j, "rows", 3, w);
  c.cols = get_or<int>(j, "cols", 3, w);
  c.negatives = get_or<int>(j, "negatives", 7, w);
  c.seed = get_or<std::uint64_t>(j, "seed", 0, w);
  c.max_attempts = get_or<int>(j, "max_attempts", 100, w);
  const Json& attrs = j.at("attributes");
  if (!attrs.is_array()) throw ConfigError("generation.attributes must be an array");
  for (const auto& a : attrs) c.attributes.push_back(attribute_from_json(a));
  c.validate();
  return c;
}

Json to_json(const RuleMatrix& r) {
  Json kinds = Json::array();
  for (RuleKind k : r.kinds()) kinds.push_back(std::string(to_string(k)));
  return {{"attributes", r.attributes()}, {"kinds", kinds}};
}

RuleMatrix rule_matrix_from_json(const Json& j) {
  check_keys(j, {"attributes", "kinds"}, "rule matrix");
  auto names = get<std::vector<std::string>>(j, "attributes", "rule matrix");
  std::vector<RuleKind> kinds;
  for (const auto& k : get<std::vector<std::string>>(j, "kinds", "rule matrix")) {
    kinds.push_back(parse_rule_kind(k));
  }
  if (kinds.size() != names.size()) throw ConfigError("rule matrix: row count mismatch");
  return RuleMatrix(std::move(names), std::move(kinds));
}

Json to_json(const RuleSpec& s) {
  return {{"attribute", s.attribute},
          {"kind", std::string(to_string(s.kind))},
          {"step", s.step},
          {"sign", s.sign},
          {"triple", s.triple}};
}

RuleSpec rule_spec_from_json(const Json& j) {
  constexpr std::string_view w = "rule spec";
  check_keys(j, {"attribute", "kind", "step", "sign", "triple"}, w);
  RuleSpec s;
  s.attribute = get<std::string>(j, "attribute", w);
  s.kind = parse_rule_kind(get<std::string>(j, "kind", w));
  s.step = get_or<int>(j, "step", 0, w);
  s.sign = get_or<int>(j, "sign", 0, w);
  s.triple = get_or<std::array<int, 3>>(j, "triple", {0, 0, 0}, w);
  return s;
}

Json to_json(const PanelSymbolic& p) {
  Json slots = Json::array();
  for (const auto& s : p.slots) {
    if (s) {
      slots.push_back({s->type, s->size, s->color, s->angle});
    } else {
      slots.push_back(nullptr);
    }
  }
  return {{"slots", slots}, {"uniformity", p.uniformity}};
}

PanelSymbolic panel_from_json(const Json& j) {
  check_keys(j, {"slots", "uniformity"}, "panel");
  PanelSymbolic p;
  p.uniformity = get_or<int>(j, "uniformity", -1, "panel");
  for (const auto& s : j.at("slots")) {
    if (s.is_null()) {
      p.slots.emplace_back(std::nullopt);
      continue;
    }
    const auto v = s.get<std::array<int, 4>>();
    p.slots.emplace_back(Object{v[0], v[1], v[2], v[3]});
  }
  return p;
}

Json to_json(const PuzzleSymbolic& p) {
  Json grid = Json::array();
  for (const auto& panel : p.grid) grid.push_back(to_json(panel));
  Json params = Json::array();
  for (const auto& s : p.rule_params) params.push_back(to_json(s));
  return {{"rows", p.rows},         {"cols", p.cols},         {"grid", grid},
          {"rules", to_json(p.rules)}, {"rule_params", params}, {"seed", p.seed}};
}

PuzzleSymbolic puzzle_from_json(const Json& j) {
  constexpr std::string_view w = "puzzle";
  check_keys(j, {"rows", "cols", "grid", "rules", "rule_params", "seed"}, w);
  PuzzleSymbolic p;
  p.rows = get<int>(j, "rows", w);
  p.cols = get<int>(j, "cols", w);
  for (const auto& panel : j.at("grid")) p.grid.push_back(panel_from_json(panel));
  if (static_cast<int>(p.grid.size()) != p.rows * p.cols) {
    throw ConfigError("puzzle: grid size does not match rows x cols");
  }
  p.rules = rule_matrix_from_json(j.at("rules"));
  for (const auto& s : j.at("rule_params")) p.rule_params.push_back(rule_spec_from_json(s));
  p.seed = get<std::uint64_t>(j, "seed", w);
  return p;
}

Json to_json(const ChoiceList& c) {
  Json cands = Json::array();
  for (const auto& p : c.candidates) cands.push_back(to_json(p));
  Json perturbed = Json::array();
  for (const auto& r : c.perturbed_rules) perturbed.push_back(to_json(r));
  return {{"candidates", cands},
          {"target", c.target},
          {"perturbed_rules", perturbed},
          {"perturbed_attributes", c.perturbed_attributes}};
}

ChoiceList choice_list_from_json(const Json& j) {
  constexpr std::string_view w = "choices";
  check_keys(j, {"candidates", "target", "perturbed_rules", "perturbed_attributes"}, w);
  ChoiceList c;
  for (const auto& p : j.at("candidates")) c.candidates.push_back(panel_from_json(p));
  c.target = get<int>(j, "target", w);
  for (const auto& r : j.at("perturbed_rules")) c.perturbed_rules.push_back(rule_matrix_from_json(r));
  c.perturbed_attributes = get<std::vector<std::string>>(j, "perturbed_attributes", w);
  if (c.target < 0 || c.target >= static_cast<int>(c.candidates.size()) ||
      c.perturbed_rules.size() + 1 != c.candidates.size()) {
    throw ConfigError("choices: inconsistent target or negative count");
  }
  return c;
}

}  // namespace genvp
