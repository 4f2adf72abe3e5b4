#pragma once

#include <span>
#include <vector>

#include "genvp/puzzle.hpp"

namespace genvp {

// Brute-force rule recovery on a complete symbolic grid (row-major,
// rows x 3). For each governed attribute, the highest-priority kind that
// every row satisfies with shared parameters; random when none holds.
RuleMatrix infer_rules_oracle(std::span<const PanelSymbolic> grid, int rows,
                              const GenerationConfig& config);
RuleMatrix infer_rules_oracle(const PuzzleSymbolic& puzzle, const GenerationConfig& config);

struct OracleSolution {
  int index = 0;
  std::vector<int> active_counts;  // one per candidate
};

// Completes the context (all panels but the bottom-right) with each
// candidate and picks the one with the most active oracle rules; ties go to
// the lowest index.
OracleSolution oracle_solve(std::span<const PanelSymbolic> context,
                            std::span<const PanelSymbolic> candidates, int rows,
                            const GenerationConfig& config);

// Context panels of a complete puzzle (answer dropped).
std::vector<PanelSymbolic> context_of(const PuzzleSymbolic& puzzle);

// Context plus `candidate` in the bottom-right slot.
std::vector<PanelSymbolic> complete_with(std::span<const PanelSymbolic> context,
                                         const PanelSymbolic& candidate);

}  // namespace genvp
