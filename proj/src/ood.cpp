#include "genvp/ood.hpp"

#include <algorithm>
#include <cmath>

#include "genvp/error.hpp"
#include "genvp/rules.hpp"

namespace genvp {

namespace {

AttributeConfig& find_attr(GenerationConfig& c, const std::string& name) {
  for (auto& a : c.attributes) {
    if (a.domain.name == name) return a;
  }
  throw ConfigError("attribute '" + name + "' is not configured");
}

bool all_integer(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == std::trunc(x); });
}

std::vector<double> midpoints(const AttributeDomain& d) {
  std::vector<double> out;
  const bool integer = all_integer(d.values);
  auto push = [&](double m) { out.push_back(integer ? std::trunc(m) : m); };
  for (int i = 0; i + 1 < d.size(); ++i) push((d.value(i) + d.value(i + 1)) / 2.0);
  if (d.id == AttributeId::kAngle && d.size() > 1) {
    double wrap = (d.value(d.size() - 1) + d.value(0) + 360.0) / 2.0;
    if (wrap > 180.0) wrap -= 360.0;
    push(wrap);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void set_legend(AttributeConfig& a, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  if (std::adjacent_find(values.begin(), values.end()) != values.end()) {
    throw ConfigError("OOD legend for " + a.domain.name + " has duplicate values");
  }
  a.domain.values = std::move(values);
  if (a.domain.id == AttributeId::kType) {
    throw ConfigError("Type values map to shapes; OOD value splits do not apply");
  }
  std::erase_if(a.allowed_rules, [&](RuleKind k) { return !rule_kind_feasible(k, a.domain); });
  if (a.domain.role == AttributeRole::kRelevant && a.allowed_rules.empty()) {
    throw ConfigError("no rule kind is realizable on the new " + a.domain.name + " legend");
  }
}

}  // namespace

OodMode parse_ood_mode(std::string_view name) {
  if (name == "value-interpolation") return OodMode::kValueInterpolation;
  if (name == "value-extrapolation") return OodMode::kValueExtrapolation;
  if (name == "rule-held-out") return OodMode::kRuleHeldOut;
  throw ConfigError("unknown OOD mode '" + std::string(name) + "'");
}

std::string_view to_string(OodMode mode) {
  switch (mode) {
    case OodMode::kValueInterpolation: return "value-interpolation";
    case OodMode::kValueExtrapolation: return "value-extrapolation";
    case OodMode::kRuleHeldOut: return "rule-held-out";
  }
  return "";
}

OodSplit build_ood_split(const GenerationConfig& config, OodMode mode, const OodParams& params) {
  config.validate();
  OodSplit out{config, config};
  switch (mode) {
    case OodMode::kValueInterpolation: {
      AttributeConfig& a = find_attr(out.test, params.attribute);
      const auto train = a.domain.values;
      auto values = params.values.empty() ? midpoints(a.domain) : params.values;
      for (double v : values) {
        if (a.domain.index_of(v)) {
          throw ConfigError("interpolation value " + std::to_string(v) + " is a training value");
        }
        const bool inside = v > train.front() && v < train.back();
        if (!inside && a.domain.id != AttributeId::kAngle) {
          throw ConfigError("interpolation value " + std::to_string(v) +
                            " lies outside the training range");
        }
      }
      set_legend(a, std::move(values));
      break;
    }
    case OodMode::kValueExtrapolation: {
      AttributeConfig& a = find_attr(out.test, params.attribute);
      if (params.values.empty()) {
        throw ConfigError("value-extrapolation needs an explicit test legend");
      }
      const double lo = a.domain.values.front();
      const double hi = a.domain.values.back();
      if (std::none_of(params.values.begin(), params.values.end(),
                       [&](double v) { return v < lo || v > hi; })) {
        throw ConfigError("extrapolation legend does not leave the training range");
      }
      set_legend(a, params.values);
      break;
    }
    case OodMode::kRuleHeldOut: {
      if (params.held_out.empty()) throw ConfigError("rule-held-out needs at least one pair");
      for (const auto& [name, kind] : params.held_out) {
        AttributeConfig& a = find_attr(out.train, name);
        if (std::find(a.allowed_rules.begin(), a.allowed_rules.end(), kind) ==
            a.allowed_rules.end()) {
          throw ConfigError(name + " does not allow rule '" + std::string(to_string(kind)) + "'");
        }
        std::erase(a.allowed_rules, kind);
        if (a.allowed_rules.empty()) {
          throw ConfigError("held-out list removes every rule of " + name);
        }
      }
      break;
    }
  }
  out.train.validate();
  out.test.validate();
  return out;
}

}  // namespace genvp
