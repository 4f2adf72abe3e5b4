#include "genvp/evaluation.hpp"

#include <cmath>
#include <sstream>

#include "genvp/error.hpp"
#include "genvp/generator.hpp"
#include "genvp/oracle.hpp"
#include "genvp/rng.hpp"
#include "genvp/trainer.hpp"

namespace genvp {

namespace {

std::uint64_t id_hash(const std::string& id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : id) h = (h ^ c) * 1099511628211ULL;
  return h;
}

torch::Tensor one_hot(const RuleMatrix& r) {
  return rules_to_tensor({&r}, torch::kFloat)[0];
}

ViewPredictions unstack(const torch::Tensor& stacked, int rows, int cols) {
  const int P = rows * cols;
  ViewPredictions v;
  v.full = stacked.select(1, 0);
  v.context = stacked.narrow(1, 1, P);
  v.prows = stacked.narrow(1, 1 + P, rows);
  v.rows = stacked.select(1, 1 + P + rows);
  const auto log = [](const torch::Tensor& t) { return t.clamp_min(1e-30).log(); };
  v.log_full = log(v.full);
  v.log_context = log(v.context);
  v.log_prows = log(v.prows);
  v.log_rows = log(v.rows);
  return v;
}

std::vector<const RasterPanel*> pointers(const std::vector<RasterPanel>& panels, std::size_t n) {
  std::vector<const RasterPanel*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&panels[i]);
  return out;
}

}  // namespace

SolveResult select_candidate(const torch::Tensor& rule_probs) {
  if (rule_probs.dim() != 3 || rule_probs.size(0) < 1 || rule_probs.size(2) != kRuleCols) {
    throw ContractError("select_candidate expects [C, K_R, 5]");
  }
  SolveResult out;
  out.moe = rule_probs;
  const auto p = rule_probs.detach().to(torch::kDouble).contiguous();
  const auto counts = p.argmax(-1).ne(kRandomColumn).sum(-1);
  const auto mass = (1.0 - p.select(2, kRandomColumn)).sum(-1);
  for (std::int64_t c = 0; c < p.size(0); ++c) {
    out.active_counts.push_back(static_cast<int>(counts[c].item<std::int64_t>()));
    out.active_mass.push_back(mass[c].item<double>());
  }
  for (std::size_t c = 1; c < out.active_counts.size(); ++c) {
    const auto best = static_cast<std::size_t>(out.index);
    if (out.active_counts[c] > out.active_counts[best] ||
        (out.active_counts[c] == out.active_counts[best] &&
         out.active_mass[c] > out.active_mass[best])) {
      out.index = static_cast<int>(c);
    }
  }
  return out;
}

ModelPredictor::ModelPredictor(GenVP model, MixtureKind kind) : model_(std::move(model)), kind_(kind) {
  if (kind_ == MixtureKind::kLearned && !model_->mixer_trained()) {
    throw ContractError("learned mixture needs a trained mixer");
  }
}

std::pair<ViewPredictions, torch::Tensor> ModelPredictor::infer(const torch::Tensor& grids) {
  torch::NoGradGuard guard;
  const auto& d = model_->dims();
  if (grids.dim() != 5 || grids.size(1) != d.panels()) {
    throw ContractError("infer expects [C, MN, 1, H, W]");
  }
  const auto C = grids.size(0);
  const auto mu = model_->encode_image(grids.reshape({C * d.panels(), 1, d.height, d.width})).mean;
  const auto z_o = split_latent(mu, d.object).first.reshape({C, d.rows, d.cols, d.object});
  const auto z_r = model_->encode_rows(z_o).mean;
  auto views = model_->predict_all(z_o, z_r);
  auto moe = model_->moe(views, kind_);
  return {std::move(views), std::move(moe)};
}

CandidatePredictions ModelPredictor::candidates(const Sample& sample) {
  torch::NoGradGuard guard;
  const auto& d = model_->dims();
  const int P = d.panels();
  const auto& raster = sample.raster;
  auto ptrs = pointers(raster.grid, static_cast<std::size_t>(P - 1));
  for (const auto& c : raster.choices) ptrs.push_back(&c);
  const auto dtype = model_->parameters().front().scalar_type();
  const auto x = panels_to_tensor(ptrs, dtype);
  const auto mu = model_->encode_image(x).mean;
  const auto z_o = split_latent(mu, d.object).first;
  const auto C = static_cast<std::int64_t>(raster.choices.size());
  const auto ctx = z_o.narrow(0, 0, P - 1).unsqueeze(0).expand({C, P - 1, d.object});
  const auto cand = z_o.narrow(0, P - 1, C).unsqueeze(1);
  const auto grid = torch::cat({ctx, cand}, 1).reshape({C, d.rows, d.cols, d.object});
  const auto z_r = model_->encode_rows(grid).mean;
  const auto views = model_->predict_all(grid, z_r);
  return {model_->moe(views, kind_).to(torch::kFloat), views.stacked().to(torch::kFloat)};
}

torch::Tensor ModelPredictor::puzzle(const Sample& sample) {
  const auto dtype = model_->parameters().front().scalar_type();
  const auto x = panels_to_tensor(pointers(sample.raster.grid, sample.raster.grid.size()), dtype);
  return infer(x.unsqueeze(0)).second[0].to(torch::kFloat);
}

std::vector<std::string> ModelPredictor::view_names() const {
  return genvp::view_names(model_->dims().rows, model_->dims().cols);
}

std::map<std::string, torch::Tensor> ModelPredictor::mixtures(const CandidatePredictions& p) {
  torch::NoGradGuard guard;
  const auto v = unstack(p.views, model_->dims().rows, model_->dims().cols);
  std::map<std::string, torch::Tensor> out;
  for (auto kind : {MixtureKind::kWeightedAvg, MixtureKind::kAvg, MixtureKind::kArgmaxAvg,
                    MixtureKind::kProd, MixtureKind::kArgmaxProd, MixtureKind::kLearned}) {
    if (kind == MixtureKind::kLearned && !model_->mixer_trained()) continue;
    if (kind == MixtureKind::kLearned) {
      const auto dtype = model_->parameters().front().scalar_type();
      out.emplace(std::string(to_string(kind)), model_->mixer(p.views.to(dtype)).to(torch::kFloat));
    } else {
      out.emplace(std::string(to_string(kind)), model_->moe(v, kind));
    }
  }
  return out;
}

CandidatePredictions OraclePredictor::candidates(const Sample& sample) {
  const auto context = context_of(sample.puzzle);
  std::vector<torch::Tensor> rows;
  for (const auto& c : sample.choices.candidates) {
    const auto grid = complete_with(context, c);
    rows.push_back(one_hot(infer_rules_oracle(grid, sample.puzzle.rows, config_)));
  }
  return {torch::stack(rows), {}};
}

torch::Tensor OraclePredictor::puzzle(const Sample& sample) {
  return one_hot(infer_rules_oracle(sample.puzzle, config_));
}

torch::Tensor RandomPredictor::draw(const Sample& sample, int count, std::uint64_t tag) const {
  auto gen = make_generator(derive_seed(seed_, {id_hash(sample.id), tag}));
  return torch::softmax(torch::randn({count, rows_, kRuleCols}, gen, torch::kFloat), -1);
}

CandidatePredictions RandomPredictor::candidates(const Sample& sample) {
  return {draw(sample, static_cast<int>(sample.choices.candidates.size()), 1), {}};
}

torch::Tensor RandomPredictor::puzzle(const Sample& sample) { return draw(sample, 1, 2)[0]; }

SolveResult solve(RulePredictor& predictor, const Sample& sample) {
  return select_candidate(predictor.candidates(sample).moe);
}

std::pair<double, double> Rate::wilson(double z) const {
  if (total == 0) return {0.0, 1.0};
  const double n = static_cast<double>(total);
  const double p = value();
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

nlohmann::json Rate::to_json() const {
  const auto [lo, hi] = wilson();
  return {{"hits", hits}, {"total", total}, {"rate", value()}, {"ci95", {lo, hi}}};
}

SolvingReport solving_accuracy(const Dataset& data, RulePredictor& predictor) {
  if (data.samples.empty()) throw ContractError("solving_accuracy needs a nonempty dataset");
  SolvingReport report;
  const auto names = predictor.view_names();
  for (const auto& n : names) report.per_view.emplace_back(n, Rate{});
  for (const auto& sample : data.samples) {
    const auto preds = predictor.candidates(sample);
    const int target = sample.choices.target;
    report.accuracy.total += 1;
    report.accuracy.hits += select_candidate(preds.moe).index == target;
    if (preds.views.defined()) {
      for (std::size_t v = 0; v < report.per_view.size(); ++v) {
        auto& rate = report.per_view[v].second;
        rate.total += 1;
        rate.hits += select_candidate(preds.views.select(1, static_cast<long>(v))).index == target;
      }
      std::size_t m = 0;
      for (const auto& [name, probs] : predictor.mixtures(preds)) {
        if (report.mixtures.size() <= m) report.mixtures.emplace_back(name, Rate{});
        auto& rate = report.mixtures[m++].second;
        rate.total += 1;
        rate.hits += select_candidate(probs).index == target;
      }
    }
  }
  return report;
}

RuleAccuracyReport rule_prediction_accuracy(const Dataset& data, RulePredictor& predictor) {
  if (data.samples.empty()) throw ContractError("rule_prediction_accuracy needs a nonempty dataset");
  RuleAccuracyReport report;
  for (const auto& name : data.samples.front().puzzle.rules.attributes()) {
    report.per_attribute.emplace_back(name, Rate{});
  }
  for (const auto& sample : data.samples) {
    const auto pred = predictor.puzzle(sample).argmax(-1);
    const auto& truth = sample.puzzle.rules;
    for (int k = 0; k < truth.rows(); ++k) {
      const bool hit = pred[k].item<std::int64_t>() == static_cast<int>(truth.kind(k));
      auto& rate = report.per_attribute[static_cast<std::size_t>(k)].second;
      rate.total += 1;
      rate.hits += hit;
      report.overall.total += 1;
      report.overall.hits += hit;
    }
  }
  return report;
}

nlohmann::json CoherenceReport::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (int r = 0; r < kNumRuleKinds; ++r) rules.push_back(to_string(static_cast<RuleKind>(r)));
  nlohmann::json rates = nlohmann::json::array();
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& row : matrix) {
    nlohmann::json rate_row = nlohmann::json::array();
    nlohmann::json count_row = nlohmann::json::array();
    for (const auto& cell : row) {
      rate_row.push_back(cell.total > 0 ? nlohmann::json(cell.value()) : nlohmann::json(nullptr));
      count_row.push_back(cell.total);
    }
    rates.push_back(rate_row);
    counts.push_back(count_row);
  }
  return {{"overall", overall.to_json()},
          {"attributes", attributes},
          {"rules", rules},
          {"rate", rates},
          {"count", counts}};
}

std::string CoherenceReport::matrix_csv() const {
  std::ostringstream out;
  out << "attribute,rule,hits,total,rate\n";
  for (std::size_t a = 0; a < attributes.size(); ++a) {
    for (int r = 0; r < kNumRuleKinds; ++r) {
      const auto& cell = matrix[a][static_cast<std::size_t>(r)];
      out << attributes[a] << ',' << to_string(static_cast<RuleKind>(r)) << ',' << cell.hits << ','
          << cell.total << ',';
      if (cell.total > 0) out << cell.value();
      out << '\n';
    }
  }
  return out.str();
}

CoherenceReport coherence(
    const GenerationConfig& config,
    const std::function<torch::Tensor(const RuleMatrix&, std::uint64_t)>& generate,
    const std::function<torch::Tensor(const torch::Tensor&)>& infer, int n_samples,
    std::uint64_t seed) {
  if (n_samples < 1) throw ContractError("coherence needs n_samples >= 1");
  CoherenceReport report;
  report.attributes = config.relevant_names();
  report.matrix.assign(report.attributes.size(),
                       std::vector<Rate>(static_cast<std::size_t>(kNumRuleKinds)));
  for (int i = 0; i < n_samples; ++i) {
    const auto s = derive_seed(seed, {0x636f68ULL, static_cast<std::uint64_t>(i)});
    const auto rules = sample_rule_matrix(config, s).matrix;
    const auto pred = infer(generate(rules, derive_seed(s, {1}))).argmax(-1);
    for (int k = 0; k < rules.rows(); ++k) {
      const bool hit = pred[k].item<std::int64_t>() == static_cast<int>(rules.kind(k));
      auto& cell = report.matrix[static_cast<std::size_t>(k)][static_cast<std::size_t>(rules.kind(k))];
      cell.total += 1;
      cell.hits += hit;
      report.overall.total += 1;
      report.overall.hits += hit;
    }
  }
  return report;
}

CoherenceReport coherence(GenVP model, const GenerationConfig& config, MixtureKind kind,
                          int n_samples, std::uint64_t seed, double temperature) {
  ModelPredictor predictor(model, kind);
  const auto dtype = model->parameters().front().scalar_type();
  return coherence(
      config,
      [&](const RuleMatrix& rules, std::uint64_t s) {
        return generate_from_rules(*model, rules_to_tensor({&rules}, dtype), s, temperature)[0];
      },
      [&](const torch::Tensor& grid) { return predictor.infer(grid.unsqueeze(0)).second[0]; },
      n_samples, seed);
}

EvalReport evaluate(const std::string& split, const Dataset& data, RulePredictor& predictor,
                    const std::string& mixture_name) {
  EvalReport report;
  report.split = split;
  report.mixture = mixture_name;
  report.solving = solving_accuracy(data, predictor);
  report.rules = rule_prediction_accuracy(data, predictor);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_view = nlohmann::json::object();
  for (const auto& [name, rate] : solving.per_view) per_view[name] = rate.to_json();
  nlohmann::json mixtures = nlohmann::json::object();
  for (const auto& [name, rate] : solving.mixtures) mixtures[name] = rate.to_json();
  nlohmann::json attrs = nlohmann::json::object();
  for (const auto& [name, rate] : rules.per_attribute) attrs[name] = rate.to_json();
  nlohmann::json j = {{"split", split},
                      {"mixture", mixture},
                      {"solving",
                       {{"accuracy", solving.accuracy.to_json()},
                        {"per_view", per_view},
                        {"mixtures", mixtures}}},
                      {"rule_accuracy", {{"overall", rules.overall.to_json()}, {"per_attribute", attrs}}}};
  if (coherence) j["coherence"] = coherence->to_json();
  return j;
}

EvalReport ood_eval(GenVP model, const Dataset& test, MixtureKind kind) {
  ModelPredictor predictor(std::move(model), kind);
  return evaluate(test.manifest.split, test, predictor, std::string(to_string(kind)));
}

nlohmann::json AblationReport::to_json() const {
  return {{"contrastive", contrastive.to_json()},
          {"no_contrast", no_contrast.to_json()},
          {"gap", contrastive.solving.accuracy.value() - no_contrast.solving.accuracy.value()}};
}

AblationReport ablation_no_contrast(const Dataset& train_data, const Dataset& test_data,
                                    const ModelDims& dims, const TrainingConfig& config) {
  AblationReport report;
  auto with = train(train_data, dims, config).model;
  report.contrastive = ood_eval(with, test_data, config.mixture);
  TrainingConfig twin = config;
  twin.beta_global = 0.0;
  twin.beta_local = 0.0;
  auto without = train(train_data, dims, twin).model;
  report.no_contrast = ood_eval(without, test_data, config.mixture);
  return report;
}

void train_mixer(GenVPImpl& model, const Dataset& data, const MixerConfig& config) {
  if (data.samples.empty()) throw ContractError("train_mixer needs a nonempty dataset");
  const auto dtype = model.parameters().front().scalar_type();
  ModelPredictor predictor(GenVP(std::shared_ptr<GenVPImpl>(&model, [](GenVPImpl*) {})),
                           MixtureKind::kWeightedAvg);
  std::vector<torch::Tensor> stacks;
  std::vector<std::int64_t> targets;
  for (const auto& sample : data.samples) {
    stacks.push_back(predictor.candidates(sample).views.to(dtype));
    targets.push_back(sample.choices.target);
  }
  const auto x = torch::stack(stacks);  // [S, C, V, K_R, 5]
  const auto y = torch::tensor(targets, torch::kLong);
  const auto S = x.size(0);
  const auto C = x.size(1);

  torch::manual_seed(config.seed);
  for (auto& p : model.mixer->parameters()) p.set_requires_grad(true);
  torch::optim::Adam opt(model.mixer->parameters(), torch::optim::AdamOptions(config.learning_rate));
  const auto flat = x.reshape({S * C, x.size(2), x.size(3), x.size(4)});
  for (int e = 0; e < config.epochs; ++e) {
    opt.zero_grad();
    const auto p = model.mixer(flat);  // [S*C, K_R, 5]
    const auto active = (1.0 - p.select(-1, kRandomColumn)).sum(-1).view({S, C});
    const auto loss = torch::nll_loss(torch::log_softmax(config.temperature * active, 1), y);
    loss.backward();
    opt.step();
  }
  for (auto& p : model.mixer->parameters()) p.set_requires_grad(false);
  model.set_mixer_trained(true);
}

}  // namespace genvp
