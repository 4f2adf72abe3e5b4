#pragma once

#include <cstdint>
#include <vector>

#include "genvp/puzzle.hpp"
#include "genvp/rng.hpp"

namespace genvp {

// Executable definition of each rule kind on one row triple of legend
// indices:
//   constant          v1 = v2 = v3
//   progression(d)    v2 = v1 + d, v3 = v2 + d       (index space)
//   arithmetic(s)     val(v3) = val(v1) + s*val(v2)  (value space)
//   distribute-three  {v1,v2,v3} is a permutation of the spec's 3-set
//   random            always true
// Precondition: all indices valid for the domain.
bool verify_rule(const Triple& values, const RuleSpec& spec, const AttributeDomain& domain);

// Realizes one row under `spec`. Throws ContractError when a non-random
// rule targets a distractor and InfeasibleError when the domain is too
// small for the parameters.
Triple apply_rule_row(const RuleSpec& spec, const AttributeDomain& domain, std::uint64_t seed);
Triple apply_rule_row(const RuleSpec& spec, const AttributeDomain& domain, Rng& rng);

// Parameter values of a kind that admit at least one row on the domain.
std::vector<int> feasible_progression_steps(const AttributeDomain& domain);
std::vector<int> feasible_arithmetic_signs(const AttributeDomain& domain);
bool rule_kind_feasible(RuleKind kind, const AttributeDomain& domain);

// Whether every row satisfies `kind` with one shared parameter. Rows given
// as nullopt (panel has no single value) only satisfy random.
bool rows_satisfy(RuleKind kind, const std::vector<std::optional<Triple>>& rows,
                  const AttributeDomain& domain);

}  // namespace genvp
