#include "genvp/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "genvp/error.hpp"
#include "genvp/oracle.hpp"
#include "genvp/rng.hpp"

namespace genvp {

namespace {

constexpr std::array<std::string_view, 5> kNames = {"swap_rows", "shuffle_rows",
                                                    "horizontal_flip", "vertical_flip",
                                                    "roll_columns"};

// Angles live on a circle; normalized to (-180, 180].
double wrap_degrees(double a) {
  double r = std::fmod(a, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

int mirror_angle(int index, AugmentKind kind, const AttributeDomain& d) {
  const double a = d.value(index);
  const double m = kind == AugmentKind::kHorizontalFlip ? -a : 180.0 - a;
  const double w = wrap_degrees(m);
  for (int i = 0; i < d.size(); ++i) {
    if (std::abs(wrap_degrees(d.value(i)) - w) < 1e-9) return i;
  }
  throw InvalidAugmentation("mirrored angle " + std::to_string(w) + " is not in the legend");
}

bool is_active(const PuzzleSymbolic& p, AttributeId id) {
  const int row = p.rules.row_of(to_string(id));
  return row >= 0 && p.rules.kind(row) != RuleKind::kRandom;
}

}  // namespace

std::string_view to_string(AugmentKind kind) { return kNames[static_cast<std::size_t>(kind)]; }

AugmentKind parse_augment_kind(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<AugmentKind>(i);
  }
  throw ConfigError("unknown augmentation '" + std::string(name) + "'");
}

bool augmentation_allowed(const PuzzleSymbolic& puzzle, AugmentKind kind,
                          const GenerationConfig& config) {
  (void)config;
  switch (kind) {
    case AugmentKind::kSwapRows:
    case AugmentKind::kShuffleRows:
      return true;
    case AugmentKind::kHorizontalFlip:
    case AugmentKind::kVerticalFlip:
      return !is_active(puzzle, AttributeId::kPosition);
    case AugmentKind::kRollColumns:
      return std::all_of(puzzle.rules.kinds().begin(), puzzle.rules.kinds().end(),
                         [](RuleKind k) {
                           return k == RuleKind::kConstant || k == RuleKind::kDistributeThree ||
                                  k == RuleKind::kRandom;
                         });
  }
  return false;
}

PanelSymbolic flip_panel(const PanelSymbolic& panel, AugmentKind kind,
                         const GenerationConfig& config) {
  if (kind != AugmentKind::kHorizontalFlip && kind != AugmentKind::kVerticalFlip) {
    throw ContractError("flip_panel needs a flip kind");
  }
  const Layout& layout = layout_for(config.layout);
  const auto& map =
      kind == AugmentKind::kHorizontalFlip ? layout.mirror_horizontal : layout.mirror_vertical;
  const AttributeDomain* angle = config.domain(AttributeId::kAngle);
  PanelSymbolic out = panel;
  for (std::size_t s = 0; s < panel.slots.size(); ++s) {
    auto obj = panel.slots[s];
    if (obj && angle && obj->angle >= 0) obj->angle = mirror_angle(obj->angle, kind, *angle);
    out.slots[static_cast<std::size_t>(map[s])] = obj;
  }
  return out;
}

PuzzleSymbolic augment_puzzle(const PuzzleSymbolic& puzzle, AugmentKind kind,
                              const GenerationConfig& config, std::uint64_t seed) {
  if (!augmentation_allowed(puzzle, kind, config)) {
    throw InvalidAugmentation(std::string(to_string(kind)) + " is not rule-invariant here");
  }
  Rng rng(derive_seed(seed, {0x617567u, static_cast<std::uint64_t>(kind)}));
  const int M = puzzle.rows;
  PuzzleSymbolic out = puzzle;
  auto copy_row = [&](int dst, int src) {
    for (int c = 0; c < 3; ++c) out.at(dst, c) = puzzle.at(src, c);
  };
  switch (kind) {
    case AugmentKind::kSwapRows: {
      const int a = rng.uniform(M);
      const int b = (a + 1 + rng.uniform(M - 1)) % M;
      copy_row(a, b);
      copy_row(b, a);
      break;
    }
    case AugmentKind::kShuffleRows: {
      std::vector<int> perm(static_cast<std::size_t>(M));
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (int r = 0; r < M; ++r) copy_row(r, perm[static_cast<std::size_t>(r)]);
      break;
    }
    case AugmentKind::kHorizontalFlip:
    case AugmentKind::kVerticalFlip:
      for (auto& p : out.grid) p = flip_panel(p, kind, config);
      break;
    case AugmentKind::kRollColumns: {
      const int shift = 1 + rng.uniform(2);
      for (int r = 0; r < M; ++r) {
        for (int c = 0; c < 3; ++c) out.at(r, (c + shift) % 3) = puzzle.at(r, c);
      }
      break;
    }
  }
  if (infer_rules_oracle(out, config) != puzzle.rules) {
    throw InvalidAugmentation(std::string(to_string(kind)) + " changed the rule matrix");
  }
  return out;
}

}  // namespace genvp
