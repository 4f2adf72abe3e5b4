#pragma once

#include <string>
#include <utility>
#include <vector>

#include "genvp/puzzle.hpp"

namespace genvp {

enum class OodMode { kValueInterpolation, kValueExtrapolation, kRuleHeldOut };

OodMode parse_ood_mode(std::string_view name);
std::string_view to_string(OodMode mode);

struct OodParams {
  std::string attribute;       // value modes
  std::vector<double> values;  // test legend; defaults to midpoints for interpolation
  std::vector<std::pair<std::string, RuleKind>> held_out;  // rule-held-out
};

struct OodSplit {
  GenerationConfig train;
  GenerationConfig test;
};

// value-interpolation: the test legend holds values strictly between
//   consecutive training values (midpoints by default, wrapping around the
//   circle for Angle; integer legends truncate toward zero).
// value-extrapolation: the test legend is `values`, which must reach beyond
//   the training range.
// rule-held-out: the listed (attribute, rule) pairs are removed from the
//   training sampler only.
// Rule kinds that a new legend cannot realize are dropped from the test
// sampler. Throws ConfigError on incompatible parameters, including a
// held-out list that empties an attribute's rule set.
OodSplit build_ood_split(const GenerationConfig& config, OodMode mode, const OodParams& params);

}  // namespace genvp
