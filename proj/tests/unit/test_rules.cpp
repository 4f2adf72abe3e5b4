#include <set>

#include "doctest.h"
#include "genvp/error.hpp"
#include "genvp/rules.hpp"

using namespace genvp;

namespace {

AttributeDomain integer_domain(int n, int start = 0) {
  AttributeDomain d;
  d.name = "Color";
  d.id = AttributeId::kColor;
  for (int i = 0; i < n; ++i) d.values.push_back(start + i);
  return d;
}

// Satisfying triples built straight from the rule definitions.
std::set<Triple> enumerate(const RuleSpec& spec, const AttributeDomain& d) {
  std::set<Triple> out;
  const int n = d.size();
  switch (spec.kind) {
    case RuleKind::kConstant:
      for (int v = 0; v < n; ++v) out.insert({v, v, v});
      break;
    case RuleKind::kProgression:
      for (int v = 0; v < n; ++v) {
        const int b = v + spec.step, c = v + 2 * spec.step;
        if (b >= 0 && b < n && c >= 0 && c < n) out.insert({v, b, c});
      }
      break;
    case RuleKind::kArithmetic:
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          const long target = std::lround(d.values[a] + spec.sign * d.values[b]);
          for (int c = 0; c < n; ++c) {
            if (std::lround(d.values[c]) == target) out.insert({a, b, c});
          }
        }
      }
      break;
    case RuleKind::kDistributeThree: {
      Triple t = spec.triple;
      std::sort(t.begin(), t.end());
      do out.insert(t);
      while (std::next_permutation(t.begin(), t.end()));
      break;
    }
    case RuleKind::kRandom:
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) out.insert({a, b, c});
      break;
  }
  return out;
}

std::vector<RuleSpec> all_specs(int n) {
  std::vector<RuleSpec> out;
  out.push_back({"Color", RuleKind::kConstant});
  out.push_back({"Color", RuleKind::kRandom});
  for (int d : {-2, -1, 1, 2}) out.push_back({"Color", RuleKind::kProgression, d});
  for (int s : {1, -1}) out.push_back({"Color", RuleKind::kArithmetic, 0, s});
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c)
        out.push_back({"Color", RuleKind::kDistributeThree, 0, 0, {c, a, b}});
  return out;
}

}  // namespace

TEST_CASE("verify_rule examples") {
  const auto num = [] {
    AttributeDomain d = integer_domain(9, 1);
    d.name = "Number";
    d.id = AttributeId::kNumber;
    return d;
  }();
  CHECK(verify_rule({2, 2, 2}, {"Number", RuleKind::kConstant}, num));
  // Number legend starts at 1, so indices are value - 1.
  CHECK_FALSE(verify_rule({2, 1, 3}, {"Number", RuleKind::kArithmetic, 0, 1}, num));
  CHECK(verify_rule({2, 1, 4}, {"Number", RuleKind::kArithmetic, 0, 1}, num));
  const auto d = integer_domain(10);
  CHECK(verify_rule({2, 4, 6}, {"Color", RuleKind::kProgression, 2}, d));
  CHECK_FALSE(verify_rule({2, 4, 7}, {"Color", RuleKind::kProgression, 2}, d));
  CHECK(verify_rule({7, 1, 3}, {"Color", RuleKind::kRandom}, d));
}

TEST_CASE("verify_rule matches exhaustive enumeration on small domains") {
  for (int n = 1; n <= 10; ++n) {
    for (int start : {0, 1}) {
      const auto d = integer_domain(n, start);
      for (const auto& spec : all_specs(n)) {
        const auto sat = enumerate(spec, d);
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
              const Triple t{a, b, c};
              REQUIRE(verify_rule(t, spec, d) == sat.contains(t));
            }
      }
    }
  }
}

TEST_CASE("apply_rule_row output satisfies its rule") {
  const auto d = integer_domain(6);
  for (const auto& spec : all_specs(6)) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Triple t = apply_rule_row(spec, d, seed);
      for (int v : t) CHECK((v >= 0 && v < 6));
      CHECK(verify_rule(t, spec, d));
    }
  }
}

TEST_CASE("arithmetic(+) on Number 1..9 can produce (1,2,3)") {
  AttributeDomain d = integer_domain(9, 1);
  d.name = "Number";
  d.id = AttributeId::kNumber;
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 5000 && !seen; ++seed) {
    const Triple t = apply_rule_row({"Number", RuleKind::kArithmetic, 0, 1}, d, seed);
    seen = t == Triple{0, 1, 2};
  }
  CHECK(seen);
}

TEST_CASE("progression(+1) on a 6-value domain starts at index <= 3") {
  AttributeDomain d;
  d.name = "Size";
  d.id = AttributeId::kSize;
  d.values = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto valid = enumerate({"Size", RuleKind::kProgression, 1}, integer_domain(6));
  std::set<int> starts;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Triple t = apply_rule_row({"Size", RuleKind::kProgression, 1}, d, seed);
    CHECK(valid.contains(t));
    starts.insert(t[0]);
  }
  CHECK(starts == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("apply_rule_row errors") {
  AttributeDomain angle;
  angle.name = "Angle";
  angle.id = AttributeId::kAngle;
  angle.values = {0, 45, 90};
  angle.role = AttributeRole::kDistractor;
  CHECK_THROWS_AS(apply_rule_row({"Angle", RuleKind::kConstant}, angle, 1), ContractError);
  CHECK_NOTHROW(apply_rule_row({"Angle", RuleKind::kRandom}, angle, 1));
  CHECK_THROWS_AS(apply_rule_row({"Color", RuleKind::kProgression, 2}, integer_domain(4), 1),
                  InfeasibleError);
  CHECK_THROWS_AS(
      apply_rule_row({"Color", RuleKind::kDistributeThree, 0, 0, {0, 0, 1}}, integer_domain(4), 1),
      InfeasibleError);
}

TEST_CASE("rows_satisfy needs one shared parameter") {
  const auto d = integer_domain(8);
  CHECK(rows_satisfy(RuleKind::kProgression, {Triple{0, 1, 2}, Triple{3, 4, 5}}, d));
  CHECK_FALSE(rows_satisfy(RuleKind::kProgression, {Triple{0, 1, 2}, Triple{4, 2, 0}}, d));
  CHECK(rows_satisfy(RuleKind::kDistributeThree, {Triple{0, 1, 2}, Triple{2, 0, 1}}, d));
  CHECK_FALSE(rows_satisfy(RuleKind::kDistributeThree, {Triple{0, 1, 2}, Triple{0, 1, 3}}, d));
  CHECK_FALSE(rows_satisfy(RuleKind::kConstant, {Triple{1, 1, 1}, std::nullopt}, d));
  CHECK(rows_satisfy(RuleKind::kRandom, {std::nullopt}, d));
}
