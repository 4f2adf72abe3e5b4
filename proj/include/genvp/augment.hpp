#pragma once

#include <cstdint>
#include <string_view>

#include "genvp/puzzle.hpp"

namespace genvp {

enum class AugmentKind { kSwapRows, kShuffleRows, kHorizontalFlip, kVerticalFlip, kRollColumns };

std::string_view to_string(AugmentKind kind);
AugmentKind parse_augment_kind(std::string_view name);

// Whether `kind` is rule-invariant for this puzzle by construction:
//   flips        no active Position rule
//   roll columns every active rule is order-free (constant, distribute-three)
//   row moves    always
bool augmentation_allowed(const PuzzleSymbolic& puzzle, AugmentKind kind,
                          const GenerationConfig& config);

// Applies the augmentation and re-derives the oracle rules of the result;
// throws InvalidAugmentation when the kind is not allowed or the oracle
// matrix changed (e.g. a random row that became a progression after a roll).
// Seeds pick the rows swapped, the permutation, or the roll shift.
PuzzleSymbolic augment_puzzle(const PuzzleSymbolic& puzzle, AugmentKind kind,
                              const GenerationConfig& config, std::uint64_t seed);

// Mirror of a single panel (slots and Angle); used on choice candidates so
// they stay consistent with a flipped grid.
PanelSymbolic flip_panel(const PanelSymbolic& panel, AugmentKind kind,
                         const GenerationConfig& config);

}  // namespace genvp
