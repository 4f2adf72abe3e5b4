#pragma once

// Symbolic data model for Raven-style progressive matrices: attribute
// legends, rule kinds and parameters, rule matrices, panels, puzzles and
// choice lists.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genvp {

enum class RuleKind : int {
  kConstant = 0,
  kProgression = 1,
  kArithmetic = 2,
  kDistributeThree = 3,
  kRandom = 4,
};

inline constexpr int kNumRuleKinds = 5;
inline constexpr int kRandomColumn = static_cast<int>(RuleKind::kRandom);

// Deterministic tie-break order used by the oracle when several kinds hold.
inline constexpr std::array<RuleKind, 4> kRulePriority = {
    RuleKind::kConstant, RuleKind::kProgression, RuleKind::kArithmetic,
    RuleKind::kDistributeThree};

std::string_view to_string(RuleKind kind);
RuleKind parse_rule_kind(std::string_view name);

enum class AttributeRole { kRelevant, kDistractor };

// Attribute semantics are keyed by name; the legend supplies the values.
enum class AttributeId { kNumber, kPosition, kType, kSize, kColor, kAngle, kUniformity };

std::string_view to_string(AttributeId id);
AttributeId parse_attribute_id(std::string_view name);

struct AttributeDomain {
  std::string name;
  AttributeId id = AttributeId::kType;
  // Legend values in strictly increasing order. Rules work on indices into
  // this list (progression) or on the values themselves (arithmetic).
  std::vector<double> values;
  // Optional display names; Type uses them to pick the rendered shape.
  std::vector<std::string> labels;
  AttributeRole role = AttributeRole::kRelevant;

  int size() const { return static_cast<int>(values.size()); }
  double value(int index) const { return values[static_cast<std::size_t>(index)]; }
  std::optional<int> index_of(double v) const;

  // Throws ConfigError when the invariants (non-empty, strictly increasing)
  // do not hold.
  void validate() const;
};

// Rule kinds an attribute can carry at all; Position is restricted to
// constant and distribute-three, Type has no arithmetic.
std::vector<RuleKind> supported_rule_kinds(AttributeId id);

struct RuleSpec {
  std::string attribute;
  RuleKind kind = RuleKind::kRandom;
  int step = 0;                         // progression, in index space
  int sign = 0;                         // arithmetic, +1 or -1
  std::array<int, 3> triple{0, 0, 0};   // distribute-three, value indices

  bool operator==(const RuleSpec&) const = default;
};

using Triple = std::array<int, 3>;

// One rule kind per governed attribute; the one-hot matrix form is derived.
class RuleMatrix {
 public:
  RuleMatrix() = default;
  RuleMatrix(std::vector<std::string> attributes, std::vector<RuleKind> kinds);

  // Builds from a dense K_R x N_R 0/1 matrix (row-major); throws
  // ContractError unless every row is one-hot.
  static RuleMatrix from_one_hot(std::vector<std::string> attributes,
                                 const std::vector<double>& entries);

  int rows() const { return static_cast<int>(kinds_.size()); }
  static constexpr int cols() { return kNumRuleKinds; }

  RuleKind kind(int row) const { return kinds_[static_cast<std::size_t>(row)]; }
  void set_kind(int row, RuleKind k) { kinds_[static_cast<std::size_t>(row)] = k; }
  const std::vector<RuleKind>& kinds() const { return kinds_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  int row_of(std::string_view attribute) const;

  double entry(int row, int col) const {
    return static_cast<int>(kind(row)) == col ? 1.0 : 0.0;
  }
  std::vector<double> one_hot() const;

  // Number of rows whose rule is not random.
  int active_count() const;

  bool operator==(const RuleMatrix&) const = default;

 private:
  std::vector<std::string> attributes_;
  std::vector<RuleKind> kinds_;
};

enum class LayoutId { kCenterSingle, kLeftRight, kGrid2x2 };

std::string_view to_string(LayoutId id);
LayoutId parse_layout_id(std::string_view name);

// Slot geometry in unit panel coordinates.
struct SlotBox {
  double cx;
  double cy;
  double half;
};

struct Layout {
  LayoutId id = LayoutId::kCenterSingle;
  std::vector<SlotBox> slots;
  std::vector<int> mirror_horizontal;  // slot index after a left-right flip
  std::vector<int> mirror_vertical;

  int slot_count() const { return static_cast<int>(slots.size()); }
};

const Layout& layout_for(LayoutId id);

// An object occupying a slot; fields are indices into the matching legend
// (-1 when the attribute is not configured).
struct Object {
  int type = -1;
  int size = -1;
  int color = -1;
  int angle = -1;

  bool operator==(const Object&) const = default;
};

struct PanelSymbolic {
  std::vector<std::optional<Object>> slots;
  int uniformity = -1;  // legend index of the Uniformity distractor, -1 if absent

  int object_count() const;
  unsigned occupancy_mask() const;
  bool operator==(const PanelSymbolic&) const = default;
};

struct AttributeConfig {
  AttributeDomain domain;
  std::vector<RuleKind> allowed_rules;  // relevant attributes only
};

struct GenerationConfig {
  LayoutId layout = LayoutId::kCenterSingle;
  int rows = 3;     // M
  int cols = 3;     // N
  int negatives = 7;  // A
  std::uint64_t seed = 0;
  int max_attempts = 100;
  std::vector<AttributeConfig> attributes;

  // Throws ConfigError on any inconsistency.
  void validate() const;

  const AttributeConfig* find(AttributeId id) const;
  const AttributeDomain* domain(AttributeId id) const;
  // Governed attributes in legend order; their count is K_R.
  std::vector<const AttributeConfig*> relevant() const;
  std::vector<std::string> relevant_names() const;
  int rule_rows() const { return static_cast<int>(relevant().size()); }
  int panels() const { return rows * cols; }
};

struct PuzzleSymbolic {
  int rows = 3;
  int cols = 3;
  std::vector<PanelSymbolic> grid;  // row-major, M*N panels, answer included
  RuleMatrix rules;
  std::vector<RuleSpec> rule_params;  // aligned with the rule matrix rows
  std::uint64_t seed = 0;

  const PanelSymbolic& at(int r, int c) const {
    return grid[static_cast<std::size_t>(r * cols + c)];
  }
  PanelSymbolic& at(int r, int c) { return grid[static_cast<std::size_t>(r * cols + c)]; }
  const PanelSymbolic& answer() const { return grid.back(); }
};

struct ChoiceList {
  std::vector<PanelSymbolic> candidates;  // A + 1 entries
  int target = 0;
  // One entry per negative, in candidate order with the target skipped.
  std::vector<RuleMatrix> perturbed_rules;
  std::vector<std::string> perturbed_attributes;

  int negative_count() const { return static_cast<int>(perturbed_rules.size()); }
  // Candidate index of the i-th negative.
  int negative_candidate(int i) const { return i < target ? i : i + 1; }
};

// Panel-level value of an attribute as a legend index, or nullopt when the
// panel carries no single value (empty panel, mixed objects).
std::optional<int> panel_value(const PanelSymbolic& panel, const AttributeDomain& domain);

}  // namespace genvp
