#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "genvp/dataset.hpp"
#include "genvp/model.hpp"
#include "genvp/objective.hpp"

namespace genvp {

struct SolveResult {
  int index = 0;
  std::vector<int> active_counts;
  std::vector<double> active_mass;  // Σ over rows of non-random probability
  torch::Tensor moe;                // [C, K_R, 5]
};

// Picks the candidate with the most active rows (argmax off the random
// column); ties go to the larger active mass, then the lower index.
SolveResult select_candidate(const torch::Tensor& rule_probs);

// Rule predictions for the candidate-completed grids of a sample and for
// its valid puzzle.
struct CandidatePredictions {
  torch::Tensor moe;    // [C, K_R, 5]
  torch::Tensor views;  // [C, V, K_R, 5]; undefined when the predictor has no views
};

class RulePredictor {
 public:
  virtual ~RulePredictor() = default;
  virtual CandidatePredictions candidates(const Sample& sample) = 0;
  virtual torch::Tensor puzzle(const Sample& sample) = 0;  // [K_R, 5]
  // Names of the view channels, empty when views are not available.
  virtual std::vector<std::string> view_names() const { return {}; }
  // Alternative mixtures computed from the same views, keyed by name.
  virtual std::map<std::string, torch::Tensor> mixtures(const CandidatePredictions&) {
    return {};
  }
};

// GenVP inference on posterior means.
class ModelPredictor : public RulePredictor {
 public:
  ModelPredictor(GenVP model, MixtureKind kind);
  CandidatePredictions candidates(const Sample& sample) override;
  torch::Tensor puzzle(const Sample& sample) override;
  std::vector<std::string> view_names() const override;
  std::map<std::string, torch::Tensor> mixtures(const CandidatePredictions& p) override;

  // Views and MoE for complete grids [C, MN, 1, H, W].
  std::pair<ViewPredictions, torch::Tensor> infer(const torch::Tensor& grids);

 private:
  GenVP model_;
  MixtureKind kind_;
};

// Symbolic oracle rules as one-hot predictions.
class OraclePredictor : public RulePredictor {
 public:
  explicit OraclePredictor(GenerationConfig config) : config_(std::move(config)) {}
  CandidatePredictions candidates(const Sample& sample) override;
  torch::Tensor puzzle(const Sample& sample) override;

 private:
  GenerationConfig config_;
};

// Independent random rule rows (uniform argmax) per call.
class RandomPredictor : public RulePredictor {
 public:
  RandomPredictor(int rule_rows, std::uint64_t seed) : rows_(rule_rows), seed_(seed) {}
  CandidatePredictions candidates(const Sample& sample) override;
  torch::Tensor puzzle(const Sample& sample) override;

 private:
  torch::Tensor draw(const Sample& sample, int count, std::uint64_t tag) const;
  int rows_;
  std::uint64_t seed_;
};

SolveResult solve(RulePredictor& predictor, const Sample& sample);

struct Rate {
  long hits = 0;
  long total = 0;
  double value() const { return total > 0 ? static_cast<double>(hits) / total : 0.0; }
  // 95% Wilson score interval.
  std::pair<double, double> wilson(double z = 1.96) const;
  nlohmann::json to_json() const;
};

struct SolvingReport {
  Rate accuracy;
  std::vector<std::pair<std::string, Rate>> per_view;   // individual predictors
  std::vector<std::pair<std::string, Rate>> mixtures;   // other MoE kinds
};

SolvingReport solving_accuracy(const Dataset& data, RulePredictor& predictor);

struct RuleAccuracyReport {
  Rate overall;
  std::vector<std::pair<std::string, Rate>> per_attribute;
};

RuleAccuracyReport rule_prediction_accuracy(const Dataset& data, RulePredictor& predictor);

// Agreement of inferred and conditioning rules, split by (attribute, rule).
struct CoherenceReport {
  Rate overall;
  std::vector<std::string> attributes;
  std::vector<std::vector<Rate>> matrix;  // [attribute][rule kind]
  nlohmann::json to_json() const;
  std::string matrix_csv() const;
};

// Rules are drawn from the generation config's rule prior; `generate` maps
// (rules, seed) to a grid [MN,1,H,W], `infer` maps the grid to [K_R,5].
CoherenceReport coherence(const GenerationConfig& config,
                          const std::function<torch::Tensor(const RuleMatrix&, std::uint64_t)>& generate,
                          const std::function<torch::Tensor(const torch::Tensor&)>& infer,
                          int n_samples, std::uint64_t seed);
CoherenceReport coherence(GenVP model, const GenerationConfig& config, MixtureKind kind,
                          int n_samples, std::uint64_t seed, double temperature = 1.0);

struct EvalReport {
  std::string split;
  std::string mixture;
  SolvingReport solving;
  RuleAccuracyReport rules;
  std::optional<CoherenceReport> coherence;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const std::string& split, const Dataset& data, RulePredictor& predictor,
                    const std::string& mixture_name);

// Solving and rule accuracy of a model (trained on an OOD train split) on
// the matching OOD test split.
EvalReport ood_eval(GenVP model, const Dataset& test, MixtureKind kind);

struct AblationReport {
  EvalReport contrastive;
  EvalReport no_contrast;
  nlohmann::json to_json() const;
};

// Trains twin models from the same seed, one with β_G = β_L = 0.
AblationReport ablation_no_contrast(const Dataset& train_data, const Dataset& test_data,
                                    const ModelDims& dims, const TrainingConfig& config);

struct MixerConfig {
  int epochs = 30;
  double learning_rate = 0.05;
  double temperature = 4.0;  // scale of the soft active count in the candidate softmax
  std::uint64_t seed = 0;
};

// Fits the learned mixer on frozen view predictions with cross-entropy of
// the solving target over candidates; marks the mixer trained.
void train_mixer(GenVPImpl& model, const Dataset& data, const MixerConfig& config);

}  // namespace genvp
