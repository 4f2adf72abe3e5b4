#include <cmath>

#include "fixtures.hpp"
#include "genvp/error.hpp"
#include "genvp/evaluation.hpp"
#include "genvp/generator.hpp"

// After the torch headers, whose logging macros include a CHECK.
#include <doctest.h>

using namespace genvp;

namespace {

Dataset generated(int n, std::uint64_t seed, int size = 32) {
  Dataset d;
  d.config = fixtures::generation();
  d.manifest.height = size;
  d.manifest.width = size;
  d.manifest.split = "test";
  const RenderOptions r{size, size};
  for (int i = 0; i < n; ++i) d.samples.push_back(make_sample(d.config, r, seed, i));
  return d;
}

// Within k binomial standard deviations of p.
bool near_rate(const Rate& r, double p, double k) {
  const double sd = std::sqrt(p * (1 - p) / static_cast<double>(r.total));
  return std::abs(r.value() - p) <= k * sd;
}

torch::Tensor probs_with_counts(const std::vector<int>& counts) {
  auto t = torch::zeros({static_cast<long>(counts.size()), 5, 5});
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (int k = 0; k < 5; ++k) t[static_cast<long>(c)][k][k < counts[c] ? 0 : 4] = 1.0;
  }
  return t;
}

}  // namespace

TEST_CASE("select_candidate counts and tie-breaks") {
  const auto r = select_candidate(probs_with_counts({5, 3, 3, 1}));
  CHECK(r.index == 0);
  CHECK((r.active_counts == std::vector<int>{5, 3, 3, 1}));
  CHECK(select_candidate(probs_with_counts({2, 4, 4})).index == 1);
  CHECK(select_candidate(probs_with_counts({1, 1, 1})).index == 0);

  // Equal counts: the larger non-random mass wins.
  auto t = probs_with_counts({2, 2});
  t[1][4] = torch::tensor({0.1f, 0.0f, 0.0f, 0.0f, 0.9f});
  CHECK(select_candidate(t).index == 1);
  CHECK_THROWS_AS(select_candidate(torch::zeros({2, 3, 4})), ContractError);
}

TEST_CASE("oracle stub solves generated data exactly") {
  const auto data = generated(150, 21);
  OraclePredictor oracle(data.config);
  const auto s = solving_accuracy(data, oracle);
  CHECK(s.accuracy.value() == 1.0);
  CHECK(rule_prediction_accuracy(data, oracle).overall.value() == 1.0);
  for (const auto& sample : data.samples) CHECK(solve(oracle, sample).index == sample.choices.target);
}

TEST_CASE("random stub is at chance") {
  const auto data = generated(2000, 22, 8);
  RandomPredictor random(data.config.rule_rows(), 3);
  const auto s = solving_accuracy(data, random);
  CHECK(s.accuracy.total == 2000);
  CHECK(near_rate(s.accuracy, 1.0 / 8, 3));
  const auto r = rule_prediction_accuracy(data, random);
  CHECK(near_rate(r.overall, 1.0 / 5, 3));
  for (const auto& [name, rate] : r.per_attribute) {
    CHECK(rate.value() >= 0.0);
    CHECK(rate.value() <= 1.0);
  }
  CHECK_THROWS_AS(solving_accuracy(Dataset{}, random), ContractError);
}

TEST_CASE("untrained model solves near chance and reports every view") {
  const auto data = generated(300, 23, 8);
  ModelDims d;
  d.height = d.width = 8;
  d.latent = 8;
  d.object = 6;
  d.row = 6;
  d.hidden = 16;
  torch::manual_seed(4);
  GenVP model(d);
  model->eval();
  ModelPredictor predictor(model, MixtureKind::kWeightedAvg);
  const auto report = evaluate("test", data, predictor, "weighted-avg");
  CHECK(near_rate(report.solving.accuracy, 1.0 / 8, 4));
  CHECK(report.solving.per_view.size() == 14);
  CHECK(report.solving.mixtures.size() == 5);
  const auto j = report.to_json();
  CHECK(j["solving"]["per_view"].contains("prow-12"));
  CHECK(j["rule_accuracy"]["per_attribute"].contains("Color"));
  CHECK_THROWS_AS(ModelPredictor(model, MixtureKind::kLearned), ContractError);

  // Solving is a pure function of the inputs.
  const auto a = solve(predictor, data.samples[0]);
  const auto b = solve(predictor, data.samples[0]);
  CHECK(a.index == b.index);
  CHECK(a.active_mass == b.active_mass);

  train_mixer(*model, generated(20, 24, 8), MixerConfig{3, 0.05, 4.0, 0});
  CHECK(model->mixer_trained());
  ModelPredictor learned(model, MixtureKind::kLearned);
  CHECK(solving_accuracy(generated(5, 25, 8), learned).mixtures.size() == 6);
}

TEST_CASE("coherence with stub pipelines") {
  const auto config = fixtures::generation();
  const auto identity = coherence(
      config, [](const RuleMatrix& r, std::uint64_t) { return rules_to_tensor({&r})[0]; },
      [](const torch::Tensor& grid) { return grid; }, 200, 1);
  CHECK(identity.overall.value() == 1.0);
  CHECK(identity.matrix.size() == 3);
  CHECK(identity.to_json()["rate"].size() == 3);
  CHECK(identity.matrix_csv().rfind("attribute,rule,hits,total,rate\n", 0) == 0);

  auto gen = make_generator(3);
  const auto random = coherence(
      config, [](const RuleMatrix& r, std::uint64_t) { return rules_to_tensor({&r})[0]; },
      [&](const torch::Tensor&) { return torch::rand({3, 5}, gen); }, 1000, 2);
  CHECK(near_rate(random.overall, 0.2, 3));
  CHECK_THROWS_AS(coherence(
                      config, [](const RuleMatrix& r, std::uint64_t) { return rules_to_tensor({&r})[0]; },
                      [](const torch::Tensor& g) { return g; }, 0, 1),
                  ContractError);
}

TEST_CASE("Wilson interval") {
  const Rate r{50, 100};
  const auto [lo, hi] = r.wilson();
  CHECK(lo == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(hi == doctest::Approx(0.5962).epsilon(1e-3));
  const Rate all{20, 20};
  CHECK(all.wilson().second == doctest::Approx(1.0));
  CHECK(all.wilson().first < 1.0);
}
