#pragma once

#include <cstdint>
#include <vector>

#include "genvp/puzzle.hpp"
#include "genvp/rng.hpp"

namespace genvp {

struct SampledRules {
  RuleMatrix matrix;
  std::vector<RuleSpec> params;
};

// Draws one rule kind per governed attribute, uniformly over the allowed
// kinds, plus feasible parameters. When Position carries a non-random rule
// the Number row is pinned to constant (the occupancy sets fix the counts).
// Deterministic in (config, seed).
SampledRules sample_rule_matrix(const GenerationConfig& config, std::uint64_t seed);

// Fresh parameters for the kinds already fixed in `rules`.
std::vector<RuleSpec> sample_rule_params(const GenerationConfig& config, const RuleMatrix& rules,
                                         Rng& rng);

// Full puzzle with its planted rules; the oracle recovers the planted matrix
// exactly. Throws InfeasibleError after `config.max_attempts` failed
// instantiations.
PuzzleSymbolic generate_puzzle(const GenerationConfig& config, std::uint64_t seed);

// Same, with the rule kinds given (parameters are sampled).
PuzzleSymbolic generate_puzzle_with_rules(const GenerationConfig& config, const RuleMatrix& rules,
                                          std::uint64_t seed);

// A hard-negative choice list: each negative re-samples one active attribute
// of the answer, and its perturbed rule matrix marks that row random. The
// oracle rule matrix of every negative-completed grid equals its perturbed
// matrix, so the answer strictly dominates in active-rule count.
ChoiceList generate_choice_list(const PuzzleSymbolic& puzzle, const GenerationConfig& config,
                                int negatives, std::uint64_t seed);

struct SymbolicSample {
  PuzzleSymbolic puzzle;
  ChoiceList choices;
};

// A puzzle plus `config.negatives` hard negatives. Puzzles that admit no
// such choice list (no active rule, or too few distinct rule-breaking
// values) are redrawn from derived seeds; `puzzle.seed` records the seed that
// succeeded so generate_puzzle(config, puzzle.seed) reproduces it.
SymbolicSample generate_sample(const GenerationConfig& config, std::uint64_t seed);

// Replaces the answer panel's value of one attribute; exposed for tests.
PanelSymbolic perturb_panel(const PanelSymbolic& panel, const AttributeConfig& attribute,
                            int new_value, const GenerationConfig& config, Rng& rng);

}  // namespace genvp
