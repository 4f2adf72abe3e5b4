#include "genvp/objective.hpp"

#include <cmath>

#include "genvp/error.hpp"
#include "genvp/serialize.hpp"

namespace genvp {

long TrainingConfig::resolved_warmup() const {
  if (warmup_steps >= 0) return std::min(warmup_steps, steps);
  return static_cast<long>(std::floor(warmup_fraction * static_cast<double>(steps)));
}

TrainingConfig TrainingConfig::at_step(long step) const {
  const double span = std::floor(kl_anneal_fraction * static_cast<double>(steps));
  if (span <= 0.0 || static_cast<double>(step) >= span) return *this;
  const double w = static_cast<double>(step) / span;
  TrainingConfig c = *this;
  c.beta_zobar *= w;
  c.beta_zo *= w;
  c.beta_zr *= w;
  c.beta_z *= w;
  return c;
}

void TrainingConfig::validate() const {
  for (double b : {beta_rec, beta_rule, beta_zobar, beta_zo, beta_zr, beta_z, beta_global,
                   beta_local, beta_sup}) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw ConfigError("warmup_fraction must lie in [0, 1]");
  }
  if (kl_anneal_fraction < 0.0 || kl_anneal_fraction > 1.0) {
    throw ConfigError("kl_anneal_fraction must lie in [0, 1]");
  }
  if (!(learning_rate > 0.0) || weight_decay < 0.0 || !(clip_norm > 0.0)) {
    throw ConfigError("optimizer settings out of range");
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0 ||
      !(adam_eps > 0.0)) {
    throw ConfigError("adam moments out of range");
  }
  if (augment_probability < 0.0 || augment_probability > 1.0) {
    throw ConfigError("augment_probability must lie in [0, 1]");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"beta_rec", beta_rec},
          {"beta_rule", beta_rule},
          {"beta_zobar", beta_zobar},
          {"beta_zo", beta_zo},
          {"beta_zr", beta_zr},
          {"beta_z", beta_z},
          {"beta_global", beta_global},
          {"beta_local", beta_local},
          {"beta_sup", beta_sup},
          {"annotations_available", annotations_available},
          {"mixture", std::string(to_string(mixture))},
          {"steps", steps},
          {"warmup_fraction", warmup_fraction},
          {"warmup_steps", warmup_steps},
          {"kl_anneal_fraction", kl_anneal_fraction},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"clip_norm", clip_norm},
          {"augment_probability", augment_probability},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  check_keys(j,
             {"beta_rec", "beta_rule", "beta_zobar", "beta_zo", "beta_zr", "beta_z",
              "beta_global", "beta_local", "beta_sup", "annotations_available", "mixture",
              "steps", "warmup_fraction", "warmup_steps", "kl_anneal_fraction", "batch_size", "learning_rate",
              "weight_decay", "adam_beta1", "adam_beta2", "adam_eps", "clip_norm",
              "augment_probability", "checkpoint_every", "seed"},
             "training");
  const auto num = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw ConfigError(std::string("training.") + key + " must be a number");
    field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  num("beta_rec", c.beta_rec);
  num("beta_rule", c.beta_rule);
  num("beta_zobar", c.beta_zobar);
  num("beta_zo", c.beta_zo);
  num("beta_zr", c.beta_zr);
  num("beta_z", c.beta_z);
  num("beta_global", c.beta_global);
  num("beta_local", c.beta_local);
  num("beta_sup", c.beta_sup);
  num("steps", c.steps);
  num("warmup_fraction", c.warmup_fraction);
  num("warmup_steps", c.warmup_steps);
  num("kl_anneal_fraction", c.kl_anneal_fraction);
  num("batch_size", c.batch_size);
  num("learning_rate", c.learning_rate);
  num("weight_decay", c.weight_decay);
  num("adam_beta1", c.adam_beta1);
  num("adam_beta2", c.adam_beta2);
  num("adam_eps", c.adam_eps);
  num("clip_norm", c.clip_norm);
  num("augment_probability", c.augment_probability);
  num("checkpoint_every", c.checkpoint_every);
  num("seed", c.seed);
  if (j.contains("annotations_available")) {
    if (!j.at("annotations_available").is_boolean()) {
      throw ConfigError("training.annotations_available must be a boolean");
    }
    c.annotations_available = j.at("annotations_available").get<bool>();
  }
  if (j.contains("mixture")) c.mixture = parse_mixture_kind(j.at("mixture").get<std::string>());
  c.validate();
  return c;
}

torch::Tensor kl_gaussian_terms(const Gaussian& q, const Gaussian& p) {
  if (q.mean.sizes() != p.mean.sizes() || q.logvar.sizes() != p.logvar.sizes() ||
      q.mean.sizes() != q.logvar.sizes()) {
    throw ContractError("kl_gaussian: shape mismatch");
  }
  const auto ratio = torch::exp(q.logvar - p.logvar);
  const auto diff = q.mean - p.mean;
  return 0.5 * (ratio + diff * diff * torch::exp(-p.logvar) - 1.0 + p.logvar - q.logvar);
}

torch::Tensor kl_gaussian(const Gaussian& q, const Gaussian& p) {
  return kl_gaussian_terms(q, p).sum();
}

MaskPair contrast_masks(const torch::Tensor& r1, const torch::Tensor& r2) {
  if (r1.sizes() != r2.sizes()) throw ContractError("contrast_masks: shape mismatch");
  return {r1.ne(r2).to(r1.dtype()), r1 * r2};
}

torch::Tensor masked_gap(const torch::Tensor& p, const torch::Tensor& r1, const torch::Tensor& r2) {
  const auto differ = r1.ne(r2).to(p.dtype());
  const auto agree = r1 * r2;
  const auto sq = (p - r2).square();
  return ((differ - agree) * sq).sum({-2, -1});
}

namespace {

// Mean over the view dimension (dim 1), optionally without its last entry.
torch::Tensor group_mean(const torch::Tensor& per_view, bool drop_last) {
  if (!drop_last) return per_view.mean(1);
  return per_view.narrow(1, 0, per_view.size(1) - 1).mean(1);
}

}  // namespace

torch::Tensor contrast_g(const ViewPredictions& views, const torch::Tensor& r1,
                         const torch::Tensor& r2, bool skip_blind) {
  const auto a = r1.unsqueeze(1);
  const auto b = r2.unsqueeze(1);
  return masked_gap(views.full, r1, r2) + group_mean(masked_gap(views.context, a, b), skip_blind) +
         group_mean(masked_gap(views.prows, a, b), skip_blind) + masked_gap(views.rows, r1, r2);
}

torch::Tensor batch_global_contrast(const ViewPredictions& views, const torch::Tensor& rules) {
  const auto B = rules.size(0);
  if (B < 2) throw ContractError("global contrast needs a batch of at least 2");
  // Pairwise [B(b), B(i)] with predictions of b, masks from (R_b, R_i), target R_i.
  const auto r1 = rules.unsqueeze(1);
  const auto r2 = rules.unsqueeze(0);
  const auto v1 = rules.unsqueeze(1).unsqueeze(2);
  const auto v2 = rules.unsqueeze(0).unsqueeze(2);
  const auto g = masked_gap(views.full.unsqueeze(1), r1, r2) +
                 masked_gap(views.context.unsqueeze(1), v1, v2).mean(2) +
                 masked_gap(views.prows.unsqueeze(1), v1, v2).mean(2) +
                 masked_gap(views.rows.unsqueeze(1), r1, r2);
  const auto off = g.sum() - g.diagonal().sum();
  return off / static_cast<double>(B * (B - 1));
}

torch::Tensor local_contrast(const ViewPredictions& negative_views,
                             const torch::Tensor& negative_rules, const torch::Tensor& rules,
                             bool skip_blind) {
  const auto B = rules.size(0);
  const auto A = negative_rules.size(1);
  if (A == 0) return torch::zeros({B}, rules.options());
  const auto r1 = negative_rules.reshape({B * A, rules.size(1), rules.size(2)});
  const auto r2 = rules.unsqueeze(1).expand_as(negative_rules).reshape_as(r1);
  return contrast_g(negative_views, r1, r2, skip_blind).view({B, A}).sum(1);
}

std::vector<std::pair<std::string, double>> LossBreakdown::values() const {
  const auto v = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
  return {{"rec", v(rec)},   {"rule", v(rule)},     {"zobar", v(zobar)},
          {"zo", v(zo)},     {"zr", v(zr)},         {"z", v(z)},
          {"sup", v(sup)},   {"global", v(global)}, {"local", v(local)},
          {"total", v(total)}};
}

std::string LossBreakdown::first_non_finite() const {
  for (const auto& [name, value] : values()) {
    if (!std::isfinite(value)) return name;
  }
  return {};
}

namespace {

// Cross-entropy of row-stochastic predictions against one-hot rules, summed
// over rows; log_p [..., K_R, 5].
torch::Tensor cross_entropy(const torch::Tensor& log_p, const torch::Tensor& rules) {
  return -(log_p * rules).sum({-2, -1});
}

}  // namespace

LossBreakdown total_objective(GenVPImpl& model, const Batch& batch, const TrainingConfig& config,
                              bool joint, std::uint64_t noise_seed) {
  const auto& d = model.dims();
  const int B = batch.size();
  const int P = d.panels();
  const int A = batch.negative_count();
  if (batch.panels.dim() != 5 || batch.panels.size(1) != P) {
    throw ContractError("batch panels must be [B, MN, 1, H, W]");
  }
  if (batch.rules.size(0) != B) throw ContractError("batch rules do not match batch size");
  auto gen = make_generator(noise_seed);
  const auto opts = batch.panels.options();

  // q(Z|X) and one reparameterized sample.
  const auto x = batch.panels.reshape({B * P, 1, d.height, d.width});
  const auto q_z = model.encode_image(x);
  const auto z = sample_gaussian(q_z, gen);
  const auto [q_o_mean, q_obar_mean] = split_latent(q_z.mean, d.object);
  const auto [q_o_logvar, q_obar_logvar] = split_latent(q_z.logvar, d.object);
  const auto [z_o_flat, z_obar_flat] = split_latent(z, d.object);
  const auto z_o = z_o_flat.reshape({B, d.rows, d.cols, d.object});

  const auto q_zr = model.encode_rows(z_o);
  const auto z_r = sample_gaussian(q_zr, gen);
  const auto p_zo = model.decode_row_latent(z_r);

  // Rules for the prior: annotations, or the detached MoE argmax without them.
  const bool annotated = config.annotations_available;
  ViewPredictions views;
  torch::Tensor moe;
  const bool need_views = joint || !annotated || config.beta_rule > 0.0;
  if (need_views) {
    views = model.predict_all(z_o, z_r);
    moe = model.moe(views, config.mixture);
  }
  torch::Tensor rules = batch.rules;
  if (!annotated) {
    rules = torch::one_hot(moe.detach().argmax(-1), kRuleCols).to(opts.dtype());
  }
  const auto p_zr = model.decode_rules(rules);

  const auto recon = model.decode_image(z);
  const auto per = [B](const torch::Tensor& t) { return t.reshape({B, -1}).sum(1); };

  LossBreakdown out;
  const auto rec = per((recon - x).square());
  const auto zobar = per(kl_gaussian_terms({q_obar_mean, q_obar_logvar},
                                           {torch::zeros_like(q_obar_mean),
                                            torch::zeros_like(q_obar_logvar)}));
  const auto p_zo_flat = Gaussian{p_zo.mean.reshape({B * P, d.object}),
                                  p_zo.logvar.reshape({B * P, d.object})};
  const auto zo = per(kl_gaussian_terms({q_o_mean, q_o_logvar}, p_zo_flat));
  const auto zr = per(kl_gaussian_terms(q_zr, p_zr));
  const auto p_z = compose_panel_latent(z_o_flat, z_obar_flat, p_zo_flat.logvar);
  const auto zz = per(kl_gaussian_terms(q_z, p_z));

  torch::Tensor rule = torch::zeros({B}, opts);
  if (need_views) {
    // KL(q(R) || uniform), summed over rows.
    const auto logq = moe.clamp_min(1e-12).log();
    rule = (moe * (logq + std::log(static_cast<double>(kRuleCols)))).sum({-2, -1});
  }

  torch::Tensor sup = torch::zeros({B}, opts);
  torch::Tensor global = torch::zeros({}, opts);
  torch::Tensor local = torch::zeros({B}, opts);
  if (joint && annotated) {
    const auto r_ctx = rules.unsqueeze(1);
    const auto ce_views = cross_entropy(views.log_full, rules) +
                          cross_entropy(views.log_context, r_ctx).sum(1) +
                          cross_entropy(views.log_prows, r_ctx).sum(1) +
                          cross_entropy(views.log_rows, rules);
    const auto ce_moe = cross_entropy(moe.clamp_min(1e-12).log(), rules);
    const double n_terms = 2.0 + P + d.rows + 1.0;
    sup = (ce_views + ce_moe) / n_terms;

    if (config.beta_global > 0.0) global = batch_global_contrast(views, rules);

    if (config.beta_local > 0.0 && A > 0) {
      const auto neg_x = batch.negatives.reshape({B * A, 1, d.height, d.width});
      const auto neg_z = sample_gaussian(model.encode_image(neg_x), gen);
      const auto neg_o = split_latent(neg_z, d.object).first.reshape({B, A, 1, d.object});
      const auto ctx_o = z_o.reshape({B, 1, P, d.object})
                             .narrow(2, 0, P - 1)
                             .expand({B, A, P - 1, d.object});
      const auto grid = torch::cat({ctx_o, neg_o}, 2).reshape({B * A, d.rows, d.cols, d.object});
      const auto neg_r = sample_gaussian(model.encode_rows(grid), gen);
      const auto neg_views = model.predict_all(grid, neg_r);
      local = local_contrast(neg_views, batch.negative_rules, rules);
    }
  }

  out.rec = rec.mean();
  out.rule = rule.mean();
  out.zobar = zobar.mean();
  out.zo = zo.mean();
  out.zr = zr.mean();
  out.z = zz.mean();
  out.sup = sup.mean();
  out.global = global;
  out.local = local.mean();

  auto total = config.beta_rec * out.rec + config.beta_zobar * out.zobar +
               config.beta_zo * out.zo + config.beta_zr * out.zr + config.beta_z * out.z;
  if (!annotated || config.beta_rule > 0.0) total = total + config.beta_rule * out.rule;
  if (joint && annotated) {
    total = total + config.beta_sup * out.sup - config.beta_global * out.global -
            config.beta_local * out.local;
  }
  out.total = total;
  return out;
}

}  // namespace genvp
