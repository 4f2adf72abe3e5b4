#include "genvp/generator.hpp"

#include <algorithm>
#include <bit>

#include "genvp/error.hpp"
#include "genvp/oracle.hpp"
#include "genvp/rules.hpp"

namespace genvp {

namespace {

// Mask legend indices grouped by popcount, keeping only groups that can host
// a distribute-three triple.
std::vector<std::vector<int>> mask_groups(const AttributeDomain& d, std::size_t min_size) {
  std::vector<std::vector<int>> by_count(33);
  for (int i = 0; i < d.size(); ++i) {
    by_count[static_cast<std::size_t>(std::popcount(static_cast<unsigned>(d.value(i))))]
        .push_back(i);
  }
  std::vector<std::vector<int>> out;
  for (auto& g : by_count) {
    if (g.size() >= min_size) out.push_back(std::move(g));
  }
  return out;
}

Triple pick_three(std::vector<int> pool, Rng& rng) {
  rng.shuffle(pool);
  return {pool[0], pool[1], pool[2]};
}

RuleSpec sample_params(const AttributeConfig& attr, RuleKind kind, Rng& rng) {
  const AttributeDomain& d = attr.domain;
  RuleSpec spec;
  spec.attribute = d.name;
  spec.kind = kind;
  switch (kind) {
    case RuleKind::kProgression: {
      const auto steps = feasible_progression_steps(d);
      if (steps.empty()) throw InfeasibleError("no progression step fits " + d.name);
      spec.step = rng.pick(steps);
      break;
    }
    case RuleKind::kArithmetic: {
      const auto signs = feasible_arithmetic_signs(d);
      if (signs.empty()) throw InfeasibleError("arithmetic has no solution on " + d.name);
      spec.sign = rng.pick(signs);
      break;
    }
    case RuleKind::kDistributeThree: {
      if (d.id == AttributeId::kPosition) {
        const auto groups = mask_groups(d, 3);
        if (groups.empty()) throw InfeasibleError("no three equal-count masks in Position");
        spec.triple = pick_three(rng.pick(groups), rng);
      } else {
        if (d.size() < 3) throw InfeasibleError("distribute-three needs 3 values of " + d.name);
        std::vector<int> all(static_cast<std::size_t>(d.size()));
        for (int i = 0; i < d.size(); ++i) all[static_cast<std::size_t>(i)] = i;
        spec.triple = pick_three(std::move(all), rng);
      }
      break;
    }
    default:
      break;
  }
  return spec;
}

// Row values for one attribute. Constant holds one value over the whole grid;
// distribute-three rows form a Latin square so that no row repeats the
// previous one's order.
std::vector<Triple> realize_rows(const RuleSpec& spec, const AttributeDomain& d, int rows,
                                 Rng& rng) {
  std::vector<Triple> out;
  if (spec.kind == RuleKind::kDistributeThree) {
    const int base = rng.uniform(3);
    const int dir = rng.bernoulli(0.5) ? 1 : 2;
    for (int r = 0; r < rows; ++r) {
      const int s = (base + dir * r) % 3;
      out.push_back({spec.triple[static_cast<std::size_t>(s)],
                     spec.triple[static_cast<std::size_t>((s + 1) % 3)],
                     spec.triple[static_cast<std::size_t>((s + 2) % 3)]});
    }
    return out;
  }
  if (spec.kind == RuleKind::kConstant) {
    out.assign(static_cast<std::size_t>(rows), apply_rule_row(spec, d, rng));
    return out;
  }
  for (int r = 0; r < rows; ++r) out.push_back(apply_rule_row(spec, d, rng));
  return out;
}

int& object_field(Object& o, AttributeId id) {
  switch (id) {
    case AttributeId::kType: return o.type;
    case AttributeId::kSize: return o.size;
    case AttributeId::kColor: return o.color;
    case AttributeId::kAngle: return o.angle;
    default: break;
  }
  throw ContractError("attribute has no per-object field");
}

constexpr std::array<AttributeId, 3> kObjectAttrs = {AttributeId::kType, AttributeId::kSize,
                                                     AttributeId::kColor};

unsigned random_mask(int slots, int count, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(slots));
  for (int i = 0; i < slots; ++i) idx[static_cast<std::size_t>(i)] = i;
  rng.shuffle(idx);
  unsigned m = 0;
  for (int i = 0; i < count; ++i) m |= 1u << idx[static_cast<std::size_t>(i)];
  return m;
}

std::vector<PanelSymbolic> realize(const GenerationConfig& config, const RuleMatrix& rules,
                                   const std::vector<RuleSpec>& params, Rng& rng) {
  const int M = config.rows;
  const int P = M * 3;
  const Layout& layout = layout_for(config.layout);
  const int S = layout.slot_count();

  // Per-panel legend indices drawn under the attribute's rule; empty for
  // attributes outside the rule matrix.
  auto governed = [&](AttributeId id) -> std::vector<int> {
    const auto* attr = config.find(id);
    if (!attr || attr->domain.role != AttributeRole::kRelevant) return {};
    const int row = rules.row_of(attr->domain.name);
    const RuleSpec& spec = params[static_cast<std::size_t>(row)];
    std::vector<int> out(static_cast<std::size_t>(P));
    const auto triples = realize_rows(spec, attr->domain, M, rng);
    for (int r = 0; r < M; ++r) {
      for (int c = 0; c < 3; ++c) {
        out[static_cast<std::size_t>(r * 3 + c)] =
            triples[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
    }
    return out;
  };
  auto is_ruled = [&](AttributeId id) {
    const auto* attr = config.find(id);
    if (!attr || attr->domain.role != AttributeRole::kRelevant) return false;
    return rules.kind(rules.row_of(attr->domain.name)) != RuleKind::kRandom;
  };

  std::vector<PanelSymbolic> grid(static_cast<std::size_t>(P));
  std::vector<unsigned> masks(static_cast<std::size_t>(P), 1u);
  if (S > 1) {
    const AttributeDomain& pos = *config.domain(AttributeId::kPosition);
    const AttributeDomain& num = *config.domain(AttributeId::kNumber);
    if (is_ruled(AttributeId::kPosition)) {
      const auto v = governed(AttributeId::kPosition);
      for (int p = 0; p < P; ++p) {
        masks[static_cast<std::size_t>(p)] =
            static_cast<unsigned>(pos.value(v[static_cast<std::size_t>(p)]));
      }
    } else {
      std::vector<int> counts = governed(AttributeId::kNumber);
      if (counts.empty()) {
        counts.resize(static_cast<std::size_t>(P));
        for (auto& c : counts) c = rng.uniform(num.size());
      }
      for (int p = 0; p < P; ++p) {
        const int n = static_cast<int>(num.value(counts[static_cast<std::size_t>(p)]));
        masks[static_cast<std::size_t>(p)] = random_mask(S, n, rng);
      }
    }
  }

  const AttributeDomain* uni = config.domain(AttributeId::kUniformity);
  const AttributeDomain* angle = config.domain(AttributeId::kAngle);
  std::array<std::vector<int>, 3> values;
  for (std::size_t a = 0; a < kObjectAttrs.size(); ++a) values[a] = governed(kObjectAttrs[a]);

  for (int p = 0; p < P; ++p) {
    PanelSymbolic& panel = grid[static_cast<std::size_t>(p)];
    panel.slots.assign(static_cast<std::size_t>(S), std::nullopt);
    panel.uniformity = uni ? rng.uniform(uni->size()) : -1;
    const bool uniform = !uni || uni->value(panel.uniformity) > 0.5;
    std::array<int, 3> shared{};
    for (std::size_t a = 0; a < kObjectAttrs.size(); ++a) {
      shared[a] = values[a].empty() ? rng.uniform(config.domain(kObjectAttrs[a])->size())
                                    : values[a][static_cast<std::size_t>(p)];
    }
    for (int s = 0; s < S; ++s) {
      if (!(masks[static_cast<std::size_t>(p)] >> s & 1u)) continue;
      Object o;
      for (std::size_t a = 0; a < kObjectAttrs.size(); ++a) {
        const AttributeId id = kObjectAttrs[a];
        const bool fixed = is_ruled(id) || uniform;
        object_field(o, id) = fixed ? shared[a] : rng.uniform(config.domain(id)->size());
      }
      if (angle) o.angle = rng.uniform(angle->size());
      panel.slots[static_cast<std::size_t>(s)] = o;
    }
  }
  return grid;
}

PuzzleSymbolic build_puzzle(const GenerationConfig& config, const RuleMatrix& rules,
                            std::vector<RuleSpec> first_params, std::uint64_t seed) {
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, {0x7061u, static_cast<std::uint64_t>(attempt)}));
    std::vector<RuleSpec> params =
        attempt == 0 && !first_params.empty() ? first_params
                                              : sample_rule_params(config, rules, rng);
    std::vector<PanelSymbolic> grid;
    try {
      grid = realize(config, rules, params, rng);
    } catch (const InfeasibleError&) {
      continue;
    }
    if (infer_rules_oracle(grid, config.rows, config) != rules) continue;
    PuzzleSymbolic out;
    out.rows = config.rows;
    out.cols = config.cols;
    out.grid = std::move(grid);
    out.rules = rules;
    out.rule_params = std::move(params);
    out.seed = seed;
    return out;
  }
  throw InfeasibleError("no puzzle realizes the rules within " +
                        std::to_string(config.max_attempts) + " attempts");
}

}  // namespace

std::vector<RuleSpec> sample_rule_params(const GenerationConfig& config, const RuleMatrix& rules,
                                         Rng& rng) {
  std::vector<RuleSpec> out;
  for (int r = 0; r < rules.rows(); ++r) {
    const std::string& name = rules.attributes()[static_cast<std::size_t>(r)];
    const AttributeConfig* attr = config.find(parse_attribute_id(name));
    if (!attr || attr->domain.role != AttributeRole::kRelevant) {
      throw ContractError("rule row '" + name + "' is not a relevant attribute");
    }
    out.push_back(sample_params(*attr, rules.kind(r), rng));
  }
  return out;
}

SampledRules sample_rule_matrix(const GenerationConfig& config, std::uint64_t seed) {
  const auto relevant = config.relevant();
  if (relevant.empty()) throw ConfigError("configuration names no relevant attribute");
  Rng rng(derive_seed(seed, {0x72756cu}));
  std::vector<std::string> names;
  std::vector<RuleKind> kinds;
  for (const auto* attr : relevant) {
    names.push_back(attr->domain.name);
    kinds.push_back(rng.pick(attr->allowed_rules));
  }
  RuleMatrix matrix(names, kinds);
  const int pos = matrix.row_of(to_string(AttributeId::kPosition));
  const int num = matrix.row_of(to_string(AttributeId::kNumber));
  if (pos >= 0 && num >= 0 && matrix.kind(pos) != RuleKind::kRandom) {
    matrix.set_kind(num, RuleKind::kConstant);
  }
  auto params = sample_rule_params(config, matrix, rng);
  return {std::move(matrix), std::move(params)};
}

PuzzleSymbolic generate_puzzle(const GenerationConfig& config, std::uint64_t seed) {
  auto sampled = sample_rule_matrix(config, seed);
  return build_puzzle(config, sampled.matrix, std::move(sampled.params), seed);
}

PuzzleSymbolic generate_puzzle_with_rules(const GenerationConfig& config, const RuleMatrix& rules,
                                          std::uint64_t seed) {
  if (rules.attributes() != config.relevant_names()) {
    throw ContractError("rule matrix rows do not match the configured attributes");
  }
  return build_puzzle(config, rules, {}, seed);
}

PanelSymbolic perturb_panel(const PanelSymbolic& panel, const AttributeConfig& attribute,
                            int new_value, const GenerationConfig& config, Rng& rng) {
  const AttributeDomain& d = attribute.domain;
  PanelSymbolic out = panel;
  const int S = static_cast<int>(panel.slots.size());
  switch (d.id) {
    case AttributeId::kPosition: {
      const auto mask = static_cast<unsigned>(d.value(new_value));
      std::vector<Object> objects;
      for (const auto& s : panel.slots) {
        if (s) objects.push_back(*s);
      }
      if (std::popcount(mask) != static_cast<int>(objects.size())) {
        throw ContractError("Position perturbation must keep the object count");
      }
      out.slots.assign(static_cast<std::size_t>(S), std::nullopt);
      std::size_t next = 0;
      for (int s = 0; s < S; ++s) {
        if (mask >> s & 1u) out.slots[static_cast<std::size_t>(s)] = objects[next++];
      }
      return out;
    }
    case AttributeId::kNumber: {
      const int target = static_cast<int>(d.value(new_value));
      std::vector<int> occupied;
      std::vector<int> empty;
      for (int s = 0; s < S; ++s) {
        (panel.slots[static_cast<std::size_t>(s)] ? occupied : empty).push_back(s);
      }
      if (target > S || occupied.empty()) throw ContractError("Number perturbation out of range");
      const Object templ = *panel.slots[static_cast<std::size_t>(occupied.front())];
      rng.shuffle(occupied);
      rng.shuffle(empty);
      for (int i = target; i < static_cast<int>(occupied.size()); ++i) {
        out.slots[static_cast<std::size_t>(occupied[static_cast<std::size_t>(i)])].reset();
      }
      for (int i = static_cast<int>(occupied.size()); i < target; ++i) {
        Object o = templ;
        // Attributes shared across the panel carry over; mixed ones are drawn.
        for (AttributeId id : kObjectAttrs) {
          const AttributeDomain& ad = *config.domain(id);
          if (!panel_value(panel, ad)) object_field(o, id) = rng.uniform(ad.size());
        }
        if (const AttributeDomain* ang = config.domain(AttributeId::kAngle)) {
          o.angle = rng.uniform(ang->size());
        }
        out.slots[static_cast<std::size_t>(empty[static_cast<std::size_t>(
            i - static_cast<int>(occupied.size()))])] = o;
      }
      return out;
    }
    case AttributeId::kType:
    case AttributeId::kSize:
    case AttributeId::kColor:
      for (auto& s : out.slots) {
        if (s) object_field(*s, d.id) = new_value;
      }
      return out;
    default:
      throw ContractError("attribute '" + d.name + "' cannot be perturbed");
  }
}

ChoiceList generate_choice_list(const PuzzleSymbolic& puzzle, const GenerationConfig& config,
                                int negatives, std::uint64_t seed) {
  if (negatives < 1) throw ContractError("choice list needs at least one negative");
  std::vector<int> active;
  for (int r = 0; r < puzzle.rules.rows(); ++r) {
    if (puzzle.rules.kind(r) != RuleKind::kRandom) active.push_back(r);
  }
  if (active.empty()) throw InfeasibleError("no active rule to perturb");

  Rng rng(derive_seed(seed, {0x63686fu}));
  const auto context = context_of(puzzle);
  const PanelSymbolic& answer = puzzle.answer();
  std::vector<PanelSymbolic> found;
  std::vector<RuleMatrix> found_rules;
  std::vector<std::string> found_attrs;
  const int budget = config.max_attempts * std::max(negatives, 1);
  for (int attempt = 0; attempt < budget && static_cast<int>(found.size()) < negatives;
       ++attempt) {
    const int row = rng.pick(active);
    const std::string& name = puzzle.rules.attributes()[static_cast<std::size_t>(row)];
    const AttributeConfig& attr = *config.find(parse_attribute_id(name));
    const AttributeDomain& d = attr.domain;
    const auto current = panel_value(answer, d);
    if (!current) continue;
    std::vector<int> options;
    for (int v = 0; v < d.size(); ++v) {
      if (v == *current) continue;
      if (d.id == AttributeId::kPosition &&
          std::popcount(static_cast<unsigned>(d.value(v))) != answer.object_count()) {
        continue;
      }
      if (d.id == AttributeId::kNumber &&
          static_cast<int>(d.value(v)) > static_cast<int>(answer.slots.size())) {
        continue;
      }
      options.push_back(v);
    }
    if (options.empty()) continue;
    PanelSymbolic neg = perturb_panel(answer, attr, rng.pick(options), config, rng);
    if (neg == answer || std::find(found.begin(), found.end(), neg) != found.end()) continue;
    RuleMatrix perturbed = puzzle.rules;
    perturbed.set_kind(row, RuleKind::kRandom);
    if (infer_rules_oracle(complete_with(context, neg), puzzle.rows, config) != perturbed) {
      continue;
    }
    found.push_back(std::move(neg));
    found_rules.push_back(std::move(perturbed));
    found_attrs.push_back(name);
  }
  if (static_cast<int>(found.size()) < negatives) {
    throw InfeasibleError("could not build " + std::to_string(negatives) + " distinct negatives");
  }

  ChoiceList out;
  out.target = rng.uniform(negatives + 1);
  for (int i = 0, n = 0; i <= negatives; ++i) {
    if (i == out.target) {
      out.candidates.push_back(answer);
    } else {
      out.candidates.push_back(found[static_cast<std::size_t>(n++)]);
    }
  }
  out.perturbed_rules = std::move(found_rules);
  out.perturbed_attributes = std::move(found_attrs);
  return out;
}

SymbolicSample generate_sample(const GenerationConfig& config, std::uint64_t seed) {
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    const std::uint64_t sub =
        attempt == 0 ? seed : derive_seed(seed, {0x726574u, static_cast<std::uint64_t>(attempt)});
    PuzzleSymbolic puzzle = generate_puzzle(config, sub);
    if (puzzle.rules.active_count() == 0) continue;
    try {
      ChoiceList choices = generate_choice_list(puzzle, config, config.negatives, sub);
      return {std::move(puzzle), std::move(choices)};
    } catch (const InfeasibleError&) {
    }
  }
  throw InfeasibleError("no sample with a valid choice list from seed " + std::to_string(seed));
}

}  // namespace genvp
