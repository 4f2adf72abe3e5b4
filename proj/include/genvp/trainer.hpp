#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "genvp/dataset.hpp"
#include "genvp/objective.hpp"

namespace genvp {

// Dataset held as tensors: per sample the MN grid panels followed by the A
// negative candidates, as uint8 [S, MN + A, 1, H, W]; rules one-hot.
struct TensorData {
  torch::Tensor images;          // uint8
  torch::Tensor rules;           // [S, K_R, 5] float
  torch::Tensor negative_rules;  // [S, A, K_R, 5] float
  int panels = 0;                // MN
  int negatives = 0;             // A

  static TensorData from(const Dataset& data);
  int size() const { return static_cast<int>(images.size(0)); }
};

// Builds the training batch for `indices`, applying symbolic rule-invariant
// augmentations (rows 1/2 swap, flips with re-rendering) with probability p.
Batch make_batch(const Dataset& data, const TensorData& tensors, const std::vector<int>& indices,
                 double augment_probability, std::uint64_t seed, torch::ScalarType dtype);

// Sample indices of batch `step` (distinct, drawn from a seed-derived stream).
std::vector<int> batch_indices(int dataset_size, int batch_size, std::uint64_t seed, long step);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::filesystem::path resume;   // checkpoint to continue from
  int workers = 1;
  bool deterministic = true;
  torch::ScalarType dtype = torch::kFloat;
  std::function<void(const nlohmann::json&)> on_metrics;  // per-step record
};

struct TrainResult {
  GenVP model{nullptr};
  long steps_done = 0;
  std::vector<nlohmann::json> metrics;
};

// Warm-up (ELBO only) followed by joint training with AdamW and global norm
// clipping. Writes <out>/metrics.jsonl, <out>/step_<n>.ckpt every
// checkpoint_every steps and <out>/final.ckpt. On a non-finite loss the
// pre-step parameters go to <out>/last_good.ckpt and TrainingFault is thrown.
TrainResult train(const Dataset& data, const ModelDims& dims, const TrainingConfig& config,
                  const TrainOptions& options = {});

// Checkpoint header fields written by the trainer.
nlohmann::json training_header(const Dataset& data, const TrainingConfig& config, long step);

// Generation config stored in a trainer checkpoint header.
GenerationConfig checkpoint_generation(const nlohmann::json& header);

}  // namespace genvp
