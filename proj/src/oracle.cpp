#include "genvp/oracle.hpp"

#include <algorithm>

#include "genvp/error.hpp"
#include "genvp/rules.hpp"

namespace genvp {

RuleMatrix infer_rules_oracle(std::span<const PanelSymbolic> grid, int rows,
                              const GenerationConfig& config) {
  if (static_cast<int>(grid.size()) != rows * 3) {
    throw ContractError("oracle needs a complete " + std::to_string(rows) + "x3 grid");
  }
  const auto relevant = config.relevant();
  std::vector<std::string> names;
  std::vector<RuleKind> kinds;
  for (const auto* attr : relevant) {
    const AttributeDomain& d = attr->domain;
    std::vector<std::optional<Triple>> row_values;
    for (int r = 0; r < rows; ++r) {
      Triple t{};
      bool defined = true;
      for (int c = 0; c < 3; ++c) {
        const auto v = panel_value(grid[static_cast<std::size_t>(r * 3 + c)], d);
        if (!v) {
          defined = false;
          break;
        }
        t[static_cast<std::size_t>(c)] = *v;
      }
      row_values.push_back(defined ? std::optional<Triple>(t) : std::nullopt);
    }
    RuleKind found = RuleKind::kRandom;
    const auto supported = supported_rule_kinds(d.id);
    for (RuleKind k : kRulePriority) {
      if (std::find(supported.begin(), supported.end(), k) == supported.end()) continue;
      if (rows_satisfy(k, row_values, d)) {
        found = k;
        break;
      }
    }
    names.push_back(d.name);
    kinds.push_back(found);
  }
  return RuleMatrix(std::move(names), std::move(kinds));
}

RuleMatrix infer_rules_oracle(const PuzzleSymbolic& puzzle, const GenerationConfig& config) {
  return infer_rules_oracle(puzzle.grid, puzzle.rows, config);
}

std::vector<PanelSymbolic> context_of(const PuzzleSymbolic& puzzle) {
  return {puzzle.grid.begin(), puzzle.grid.end() - 1};
}

std::vector<PanelSymbolic> complete_with(std::span<const PanelSymbolic> context,
                                         const PanelSymbolic& candidate) {
  std::vector<PanelSymbolic> grid(context.begin(), context.end());
  grid.push_back(candidate);
  return grid;
}

OracleSolution oracle_solve(std::span<const PanelSymbolic> context,
                            std::span<const PanelSymbolic> candidates, int rows,
                            const GenerationConfig& config) {
  if (static_cast<int>(context.size()) != rows * 3 - 1) {
    throw ContractError("context must hold all panels but the last");
  }
  OracleSolution out;
  int best = -1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto grid = complete_with(context, candidates[i]);
    const int count = infer_rules_oracle(grid, rows, config).active_count();
    out.active_counts.push_back(count);
    if (count > best) {
      best = count;
      out.index = static_cast<int>(i);
    }
  }
  return out;
}

}  // namespace genvp
