#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "genvp/model.hpp"

namespace genvp {

struct TrainingConfig {
  double beta_rec = 1.0;    // β1
  double beta_rule = 0.0;   // β2, only meaningful without annotations
  double beta_zobar = 1.0;  // β3
  double beta_zo = 1.0;     // β4
  double beta_zr = 1.0;     // β5
  double beta_z = 1.0;      // β6
  double beta_global = 20.0;
  double beta_local = 20.0;
  double beta_sup = 250.0;  // β_R*
  bool annotations_available = true;
  MixtureKind mixture = MixtureKind::kWeightedAvg;

  long steps = 2000;
  double warmup_fraction = 0.2;
  long warmup_steps = -1;  // overrides the fraction when >= 0
  double kl_anneal_fraction = 0.0;  // β3..β6 ramp linearly from 0 over this share of steps
  int batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  double augment_probability = 0.5;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::uint64_t seed = 0;

  long resolved_warmup() const;
  // Copy with the latent KL weights scaled for `step`.
  TrainingConfig at_step(long step) const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

// Closed-form KL(q || p) between diagonal Gaussians, per coordinate.
torch::Tensor kl_gaussian_terms(const Gaussian& q, const Gaussian& p);
// Sum over every coordinate.
torch::Tensor kl_gaussian(const Gaussian& q, const Gaussian& p);

struct MaskPair {
  torch::Tensor differ;  // M:  R1 != R2
  torch::Tensor agree;   // M̄: R1 = R2 = 1
};
MaskPair contrast_masks(const torch::Tensor& r1, const torch::Tensor& r2);

// ‖M⊙(p−r2)‖² − ‖M̄⊙(p−r2)‖² reduced over the trailing [K_R,5] dims;
// leading dims broadcast.
torch::Tensor masked_gap(const torch::Tensor& p, const torch::Tensor& r1, const torch::Tensor& r2);

// g of a puzzle whose predictions are `views` against rules r2, masks from
// (r1, r2). Sums the four view groups; context and partial-row views are
// averaged within their group. With `skip_blind`, the context view of the
// last panel and the partial-rows view without the last row are left out
// (neither can see the answer slot). Returns one value per batch entry.
torch::Tensor contrast_g(const ViewPredictions& views, const torch::Tensor& r1,
                         const torch::Tensor& r2, bool skip_blind = false);

// (1/B) Σ_b 1/(B−1) Σ_{i≠b} g(P_b, P_i) for predictions of a batch and its
// rules [B,K_R,5].
torch::Tensor batch_global_contrast(const ViewPredictions& views, const torch::Tensor& rules);

// Σ_i g(P_i⁻, P) per valid puzzle. `negative_views` holds predictions on the
// B·A invalid puzzles (row-major over (b, i)); negative_rules [B,A,K_R,5],
// rules [B,K_R,5]. Returns [B]; zeros when A = 0.
torch::Tensor local_contrast(const ViewPredictions& negative_views,
                             const torch::Tensor& negative_rules, const torch::Tensor& rules,
                             bool skip_blind = true);

struct Batch {
  torch::Tensor panels;          // [B, MN, 1, H, W], answer in the last slot
  torch::Tensor rules;           // [B, K_R, 5]
  torch::Tensor negatives;       // [B, A, 1, H, W]
  torch::Tensor negative_rules;  // [B, A, K_R, 5]

  int size() const { return static_cast<int>(panels.size(0)); }
  int negative_count() const { return negatives.defined() ? static_cast<int>(negatives.size(1)) : 0; }
};

struct LossBreakdown {
  torch::Tensor rec, rule, zobar, zo, zr, z, sup, global, local, total;

  // Name/value pairs in a fixed order (the metrics log schema).
  std::vector<std::pair<std::string, double>> values() const;
  // First non-finite term, or empty.
  std::string first_non_finite() const;
};

// Negated objective of a batch (minimized by the trainer). `joint` adds the
// supervised and contrastive terms; otherwise only the ELBO is used. All
// sampling noise comes from `noise_seed`.
LossBreakdown total_objective(GenVPImpl& model, const Batch& batch, const TrainingConfig& config,
                              bool joint, std::uint64_t noise_seed);

}  // namespace genvp
