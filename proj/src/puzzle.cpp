#include "genvp/puzzle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <set>

#include "genvp/error.hpp"
#include "genvp/rules.hpp"

namespace genvp {

namespace {

constexpr double kValueTolerance = 1e-9;

constexpr std::array<std::string_view, kNumRuleKinds> kRuleNames = {
    "constant", "progression", "arithmetic", "distribute_three", "random"};

constexpr std::array<std::string_view, 7> kAttributeNames = {
    "Number", "Position", "Type", "Size", "Color", "Angle", "Uniformity"};

constexpr std::array<std::string_view, 3> kLayoutNames = {"center_single", "left_right",
                                                          "grid_2x2"};

Layout make_layout(LayoutId id) {
  Layout l;
  l.id = id;
  switch (id) {
    case LayoutId::kCenterSingle:
      l.slots = {{0.5, 0.5, 0.5}};
      l.mirror_horizontal = {0};
      l.mirror_vertical = {0};
      break;
    case LayoutId::kLeftRight:
      l.slots = {{0.25, 0.5, 0.25}, {0.75, 0.5, 0.25}};
      l.mirror_horizontal = {1, 0};
      l.mirror_vertical = {0, 1};
      break;
    case LayoutId::kGrid2x2:
      l.slots = {{0.25, 0.25, 0.25}, {0.75, 0.25, 0.25}, {0.25, 0.75, 0.25}, {0.75, 0.75, 0.25}};
      l.mirror_horizontal = {1, 0, 3, 2};
      l.mirror_vertical = {2, 3, 0, 1};
      break;
  }
  return l;
}

}  // namespace

std::string_view to_string(RuleKind kind) { return kRuleNames[static_cast<std::size_t>(kind)]; }

RuleKind parse_rule_kind(std::string_view name) {
  for (std::size_t i = 0; i < kRuleNames.size(); ++i) {
    if (kRuleNames[i] == name) return static_cast<RuleKind>(i);
  }
  if (name == "distribute-three") return RuleKind::kDistributeThree;
  throw ConfigError("unknown rule kind '" + std::string(name) + "'");
}

std::string_view to_string(AttributeId id) {
  return kAttributeNames[static_cast<std::size_t>(id)];
}

AttributeId parse_attribute_id(std::string_view name) {
  for (std::size_t i = 0; i < kAttributeNames.size(); ++i) {
    if (kAttributeNames[i] == name) return static_cast<AttributeId>(i);
  }
  throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

std::string_view to_string(LayoutId id) { return kLayoutNames[static_cast<std::size_t>(id)]; }

LayoutId parse_layout_id(std::string_view name) {
  for (std::size_t i = 0; i < kLayoutNames.size(); ++i) {
    if (kLayoutNames[i] == name) return static_cast<LayoutId>(i);
  }
  throw ConfigError("unknown layout '" + std::string(name) + "'");
}

const Layout& layout_for(LayoutId id) {
  static const std::array<Layout, 3> layouts = {make_layout(LayoutId::kCenterSingle),
                                                make_layout(LayoutId::kLeftRight),
                                                make_layout(LayoutId::kGrid2x2)};
  return layouts[static_cast<std::size_t>(id)];
}

std::optional<int> AttributeDomain::index_of(double v) const {
  for (int i = 0; i < size(); ++i) {
    if (std::abs(values[static_cast<std::size_t>(i)] - v) <= kValueTolerance) return i;
  }
  return std::nullopt;
}

void AttributeDomain::validate() const {
  if (values.empty()) throw ConfigError("attribute '" + name + "' has an empty legend");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1] + kValueTolerance)) {
      throw ConfigError("attribute '" + name + "' legend must be strictly increasing");
    }
  }
  if (!labels.empty() && labels.size() != values.size()) {
    throw ConfigError("attribute '" + name + "' label count differs from value count");
  }
}

std::vector<RuleKind> supported_rule_kinds(AttributeId id) {
  using enum RuleKind;
  switch (id) {
    case AttributeId::kNumber:
    case AttributeId::kSize:
    case AttributeId::kColor:
      return {kConstant, kProgression, kArithmetic, kDistributeThree, kRandom};
    case AttributeId::kType:
      return {kConstant, kProgression, kDistributeThree, kRandom};
    case AttributeId::kPosition:
      return {kConstant, kDistributeThree, kRandom};
    case AttributeId::kAngle:
    case AttributeId::kUniformity:
      return {kRandom};
  }
  return {kRandom};
}

RuleMatrix::RuleMatrix(std::vector<std::string> attributes, std::vector<RuleKind> kinds)
    : attributes_(std::move(attributes)), kinds_(std::move(kinds)) {
  if (attributes_.size() != kinds_.size()) {
    throw ContractError("rule matrix attribute/row count mismatch");
  }
}

RuleMatrix RuleMatrix::from_one_hot(std::vector<std::string> attributes,
                                    const std::vector<double>& entries) {
  const std::size_t rows = attributes.size();
  if (entries.size() != rows * kNumRuleKinds) {
    throw ContractError("rule matrix has " + std::to_string(entries.size()) +
                        " entries, expected " + std::to_string(rows * kNumRuleKinds));
  }
  std::vector<RuleKind> kinds(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    int hot = -1;
    for (int c = 0; c < kNumRuleKinds; ++c) {
      const double e = entries[r * kNumRuleKinds + static_cast<std::size_t>(c)];
      if (e == 1.0) {
        if (hot >= 0) throw ContractError("rule matrix row is not one-hot");
        hot = c;
      } else if (e != 0.0) {
        throw ContractError("rule matrix entries must be 0 or 1");
      }
    }
    if (hot < 0) throw ContractError("rule matrix row is not one-hot");
    kinds[r] = static_cast<RuleKind>(hot);
  }
  return RuleMatrix(std::move(attributes), std::move(kinds));
}

int RuleMatrix::row_of(std::string_view attribute) const {
  for (int r = 0; r < rows(); ++r) {
    if (attributes_[static_cast<std::size_t>(r)] == attribute) return r;
  }
  return -1;
}

std::vector<double> RuleMatrix::one_hot() const {
  std::vector<double> out(kinds_.size() * kNumRuleKinds, 0.0);
  for (std::size_t r = 0; r < kinds_.size(); ++r) {
    out[r * kNumRuleKinds + static_cast<std::size_t>(kinds_[r])] = 1.0;
  }
  return out;
}

int RuleMatrix::active_count() const {
  return static_cast<int>(
      std::count_if(kinds_.begin(), kinds_.end(), [](RuleKind k) { return k != RuleKind::kRandom; }));
}

int PanelSymbolic::object_count() const {
  return static_cast<int>(
      std::count_if(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); }));
}

unsigned PanelSymbolic::occupancy_mask() const {
  unsigned mask = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) mask |= 1u << i;
  }
  return mask;
}

const AttributeConfig* GenerationConfig::find(AttributeId id) const {
  for (const auto& a : attributes) {
    if (a.domain.id == id) return &a;
  }
  return nullptr;
}

const AttributeDomain* GenerationConfig::domain(AttributeId id) const {
  const auto* a = find(id);
  return a ? &a->domain : nullptr;
}

std::vector<const AttributeConfig*> GenerationConfig::relevant() const {
  std::vector<const AttributeConfig*> out;
  for (const auto& a : attributes) {
    if (a.domain.role == AttributeRole::kRelevant) out.push_back(&a);
  }
  return out;
}

std::vector<std::string> GenerationConfig::relevant_names() const {
  std::vector<std::string> out;
  for (const auto* a : relevant()) out.push_back(a->domain.name);
  return out;
}

void GenerationConfig::validate() const {
  if (cols != 3) throw ConfigError("row rules are defined on triples; N must be 3");
  if (rows < 2) throw ConfigError("M must be at least 2");
  if (negatives < 0) throw ConfigError("A must be non-negative");
  if (max_attempts < 1) throw ConfigError("max_attempts must be positive");

  const Layout& layout = layout_for(this->layout);
  std::set<AttributeId> seen;
  for (const auto& a : attributes) {
    a.domain.validate();
    if (!seen.insert(a.domain.id).second) {
      throw ConfigError("attribute '" + a.domain.name + "' configured twice");
    }
    if (a.domain.name != to_string(a.domain.id)) {
      throw ConfigError("attribute name '" + a.domain.name + "' does not match its semantics");
    }
    const bool relevant = a.domain.role == AttributeRole::kRelevant;
    if (a.domain.id == AttributeId::kAngle || a.domain.id == AttributeId::kUniformity) {
      if (relevant) throw ConfigError(a.domain.name + " can only be a distractor");
    }
    if ((a.domain.id == AttributeId::kNumber || a.domain.id == AttributeId::kPosition) &&
        layout.slot_count() < 2) {
      throw ConfigError(a.domain.name + " requires a multi-slot layout");
    }
    if (a.domain.id == AttributeId::kNumber) {
      for (double v : a.domain.values) {
        if (v < 1 || v > layout.slot_count() || v != std::floor(v)) {
          throw ConfigError("Number legend values must be integers in [1, slots]");
        }
      }
    }
    if (a.domain.id == AttributeId::kPosition) {
      for (double v : a.domain.values) {
        const auto m = static_cast<unsigned>(v);
        if (v != std::floor(v) || m == 0 || m >= (1u << layout.slot_count())) {
          throw ConfigError("Position legend values must be non-empty slot masks");
        }
      }
    }
    if (a.domain.id == AttributeId::kType) {
      if (a.domain.labels.empty()) throw ConfigError("Type legend needs shape labels");
    }
    if (a.domain.id == AttributeId::kUniformity) {
      if (a.domain.values != std::vector<double>{0.0, 1.0}) {
        throw ConfigError("Uniformity legend must be [0, 1]");
      }
    }
    if (!relevant) {
      for (RuleKind k : a.allowed_rules) {
        if (k != RuleKind::kRandom) {
          throw ConfigError("distractor '" + a.domain.name + "' cannot carry a non-random rule");
        }
      }
      continue;
    }
    if (a.allowed_rules.empty()) {
      throw ConfigError("relevant attribute '" + a.domain.name + "' has no allowed rules");
    }
    const auto supported = supported_rule_kinds(a.domain.id);
    for (RuleKind k : a.allowed_rules) {
      if (std::find(supported.begin(), supported.end(), k) == supported.end()) {
        throw ConfigError("rule '" + std::string(to_string(k)) + "' is not supported on " +
                          a.domain.name);
      }
      if (!rule_kind_feasible(k, a.domain)) {
        throw ConfigError("rule '" + std::string(to_string(k)) + "' cannot be realized on " +
                          a.domain.name + "'s legend");
      }
      if (a.domain.id == AttributeId::kPosition && k == RuleKind::kDistributeThree) {
        std::map<int, int> by_count;
        for (double v : a.domain.values) ++by_count[std::popcount(static_cast<unsigned>(v))];
        if (std::none_of(by_count.begin(), by_count.end(),
                         [](const auto& kv) { return kv.second >= 3; })) {
          throw ConfigError("Position distribute-three needs three masks of equal count");
        }
      }
    }
  }
  for (AttributeId required : {AttributeId::kType, AttributeId::kSize, AttributeId::kColor}) {
    if (!seen.contains(required)) {
      throw ConfigError("attribute '" + std::string(to_string(required)) + "' is required");
    }
  }
  if (layout.slot_count() > 1 && (!seen.contains(AttributeId::kNumber) ||
                                  !seen.contains(AttributeId::kPosition))) {
    throw ConfigError("multi-slot layouts need Number and Position legends");
  }
  if (relevant().empty()) throw ConfigError("configuration names no relevant attribute");
}

std::optional<int> panel_value(const PanelSymbolic& panel, const AttributeDomain& domain) {
  switch (domain.id) {
    case AttributeId::kNumber: {
      const int n = panel.object_count();
      if (n == 0) return std::nullopt;
      return domain.index_of(static_cast<double>(n));
    }
    case AttributeId::kPosition: {
      const unsigned m = panel.occupancy_mask();
      if (m == 0) return std::nullopt;
      return domain.index_of(static_cast<double>(m));
    }
    case AttributeId::kUniformity:
      return panel.uniformity >= 0 ? std::optional<int>(panel.uniformity) : std::nullopt;
    default:
      break;
  }
  std::optional<int> shared;
  for (const auto& slot : panel.slots) {
    if (!slot) continue;
    int v = -1;
    switch (domain.id) {
      case AttributeId::kType: v = slot->type; break;
      case AttributeId::kSize: v = slot->size; break;
      case AttributeId::kColor: v = slot->color; break;
      case AttributeId::kAngle: v = slot->angle; break;
      default: break;
    }
    if (v < 0) return std::nullopt;
    if (shared && *shared != v) return std::nullopt;
    shared = v;
  }
  return shared;
}

}  // namespace genvp
