#include "genvp/rules.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "genvp/error.hpp"

namespace genvp {

namespace {

constexpr std::array<int, 4> kSteps = {-2, -1, 1, 2};
constexpr std::array<int, 2> kSigns = {1, -1};
constexpr double kTol = 1e-9;

bool in_range(int i, const AttributeDomain& d) { return i >= 0 && i < d.size(); }

bool arithmetic_holds(const Triple& t, int sign, const AttributeDomain& d) {
  return std::abs(d.value(t[2]) - (d.value(t[0]) + sign * d.value(t[1]))) <= kTol;
}

bool is_permutation_of(const Triple& t, const Triple& set) {
  Triple a = t;
  Triple b = set;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

bool distinct(const Triple& t) { return t[0] != t[1] && t[1] != t[2] && t[0] != t[2]; }

std::vector<std::pair<int, int>> arithmetic_pairs(const AttributeDomain& d, int sign) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < d.size(); ++i) {
    for (int j = 0; j < d.size(); ++j) {
      if (d.index_of(d.value(i) + sign * d.value(j))) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace

bool verify_rule(const Triple& values, const RuleSpec& spec, const AttributeDomain& domain) {
  switch (spec.kind) {
    case RuleKind::kConstant:
      return values[0] == values[1] && values[1] == values[2];
    case RuleKind::kProgression:
      return spec.step != 0 && values[1] == values[0] + spec.step &&
             values[2] == values[1] + spec.step;
    case RuleKind::kArithmetic:
      return (spec.sign == 1 || spec.sign == -1) && arithmetic_holds(values, spec.sign, domain);
    case RuleKind::kDistributeThree:
      return distinct(spec.triple) && is_permutation_of(values, spec.triple);
    case RuleKind::kRandom:
      return true;
  }
  return false;
}

std::vector<int> feasible_progression_steps(const AttributeDomain& domain) {
  std::vector<int> out;
  for (int d : kSteps) {
    if (domain.size() > 2 * std::abs(d)) out.push_back(d);
  }
  return out;
}

std::vector<int> feasible_arithmetic_signs(const AttributeDomain& domain) {
  std::vector<int> out;
  for (int s : kSigns) {
    if (!arithmetic_pairs(domain, s).empty()) out.push_back(s);
  }
  return out;
}

bool rule_kind_feasible(RuleKind kind, const AttributeDomain& domain) {
  switch (kind) {
    case RuleKind::kConstant:
    case RuleKind::kRandom:
      return domain.size() >= 1;
    case RuleKind::kProgression:
      return !feasible_progression_steps(domain).empty();
    case RuleKind::kArithmetic:
      return !feasible_arithmetic_signs(domain).empty();
    case RuleKind::kDistributeThree:
      return domain.size() >= 3;
  }
  return false;
}

Triple apply_rule_row(const RuleSpec& spec, const AttributeDomain& domain, std::uint64_t seed) {
  Rng rng(seed);
  return apply_rule_row(spec, domain, rng);
}

Triple apply_rule_row(const RuleSpec& spec, const AttributeDomain& domain, Rng& rng) {
  if (spec.kind != RuleKind::kRandom && domain.role != AttributeRole::kRelevant) {
    throw ContractError("non-random rule on distractor '" + domain.name + "'");
  }
  const int n = domain.size();
  switch (spec.kind) {
    case RuleKind::kConstant: {
      const int v = rng.uniform(n);
      return {v, v, v};
    }
    case RuleKind::kProgression: {
      const int lo = std::max(0, -2 * spec.step);
      const int hi = n - 1 - std::max(0, 2 * spec.step);
      if (spec.step == 0 || hi < lo) {
        throw InfeasibleError("progression step " + std::to_string(spec.step) +
                              " does not fit '" + domain.name + "'");
      }
      const int start = lo + rng.uniform(hi - lo + 1);
      return {start, start + spec.step, start + 2 * spec.step};
    }
    case RuleKind::kArithmetic: {
      const auto pairs = arithmetic_pairs(domain, spec.sign);
      if ((spec.sign != 1 && spec.sign != -1) || pairs.empty()) {
        throw InfeasibleError("arithmetic has no solution on '" + domain.name + "'");
      }
      const auto [a, b] = rng.pick(pairs);
      return {a, b, *domain.index_of(domain.value(a) + spec.sign * domain.value(b))};
    }
    case RuleKind::kDistributeThree: {
      const Triple& t = spec.triple;
      if (!distinct(t) || !in_range(t[0], domain) || !in_range(t[1], domain) ||
          !in_range(t[2], domain)) {
        throw InfeasibleError("distribute-three needs three distinct values of '" +
                              domain.name + "'");
      }
      const int shift = rng.uniform(3);
      return {t[static_cast<std::size_t>(shift)], t[static_cast<std::size_t>((shift + 1) % 3)],
              t[static_cast<std::size_t>((shift + 2) % 3)]};
    }
    case RuleKind::kRandom:
      return {rng.uniform(n), rng.uniform(n), rng.uniform(n)};
  }
  throw ContractError("unknown rule kind");
}

bool rows_satisfy(RuleKind kind, const std::vector<std::optional<Triple>>& rows,
                  const AttributeDomain& domain) {
  if (kind == RuleKind::kRandom) return true;
  if (rows.empty()) return false;
  for (const auto& r : rows) {
    if (!r) return false;
  }
  auto all = [&](auto pred) {
    return std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return pred(*r); });
  };
  switch (kind) {
    case RuleKind::kConstant:
      return all([](const Triple& t) { return t[0] == t[1] && t[1] == t[2]; });
    case RuleKind::kProgression:
      return std::any_of(kSteps.begin(), kSteps.end(), [&](int d) {
        return all([&](const Triple& t) { return t[1] == t[0] + d && t[2] == t[1] + d; });
      });
    case RuleKind::kArithmetic:
      return std::any_of(kSigns.begin(), kSigns.end(), [&](int s) {
        return all([&](const Triple& t) { return arithmetic_holds(t, s, domain); });
      });
    case RuleKind::kDistributeThree: {
      const Triple& first = *rows.front();
      if (!distinct(first)) return false;
      return all([&](const Triple& t) { return is_permutation_of(t, first); });
    }
    case RuleKind::kRandom:
      return true;
  }
  return false;
}

}  // namespace genvp
