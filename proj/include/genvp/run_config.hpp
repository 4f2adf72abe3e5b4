#pragma once

#include <filesystem>

#include "genvp/evaluation.hpp"
#include "genvp/objective.hpp"
#include "genvp/puzzle.hpp"
#include "genvp/render.hpp"

namespace genvp {

struct DataOptions {
  int train_count = 5000;
  int test_count = 1000;
};

struct EvalOptions {
  MixtureKind mixture = MixtureKind::kWeightedAvg;
  int coherence_samples = 500;
  double coherence_temperature = 1.0;
};

// Every section of a run. Model rule rows, grid shape and panel size are
// derived from the generation and render sections.
struct RunConfig {
  GenerationConfig generation;
  RenderOptions render;
  ModelDims model;
  TrainingConfig training;
  EvalOptions eval;
  MixerConfig mixer;
  DataOptions data;

  // Strict: unknown keys and wrong types raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// The checked-in defaults, merge-patched with `user` when given.
nlohmann::json load_config_json(const std::filesystem::path& defaults,
                                const std::filesystem::path& user = {});

}  // namespace genvp
