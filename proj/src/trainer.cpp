#include "genvp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "genvp/augment.hpp"
#include "genvp/error.hpp"
#include "genvp/rng.hpp"

namespace genvp {

namespace {

constexpr std::uint64_t kBatchTag = 0x6261746368ULL;
constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;
constexpr std::uint64_t kAugmentTag = 0x61756dULL;

void copy_panel(std::uint8_t* dst, const RasterPanel& p) {
  std::memcpy(dst, p.pixels.data(), p.pixels.size());
}

void fill_rules(float* dst, const RuleMatrix& r) {
  for (int k = 0; k < r.rows(); ++k) dst[k * kRuleCols + static_cast<int>(r.kind(k))] = 1.0f;
}

// The grid and negative candidates of one sample as uint8 rows.
void write_sample(std::uint8_t* dst, const RasterPuzzle& raster, const ChoiceList& choices,
                  std::size_t panel_size) {
  std::size_t slot = 0;
  for (const auto& p : raster.grid) copy_panel(dst + panel_size * slot++, p);
  for (int i = 0; i < choices.negative_count(); ++i) {
    copy_panel(dst + panel_size * slot++,
               raster.choices[static_cast<std::size_t>(choices.negative_candidate(i))]);
  }
}

}  // namespace

TensorData TensorData::from(const Dataset& data) {
  if (data.samples.empty()) throw ContractError("training data is empty");
  const auto& first = data.samples.front();
  TensorData t;
  t.panels = static_cast<int>(first.raster.grid.size());
  t.negatives = first.choices.negative_count();
  const int H = data.manifest.height;
  const int W = data.manifest.width;
  const int K = first.puzzle.rules.rows();
  const auto S = static_cast<std::int64_t>(data.samples.size());
  t.images = torch::empty({S, t.panels + t.negatives, 1, H, W}, torch::kUInt8);
  t.rules = torch::zeros({S, K, kRuleCols});
  t.negative_rules = torch::zeros({S, t.negatives, K, kRuleCols});
  const auto panel_size = static_cast<std::size_t>(H * W);
  auto* img = t.images.data_ptr<std::uint8_t>();
  auto* rules = t.rules.data_ptr<float>();
  auto* neg = t.negative_rules.data_ptr<float>();
  for (std::int64_t s = 0; s < S; ++s) {
    const auto& sample = data.samples[static_cast<std::size_t>(s)];
    if (static_cast<int>(sample.raster.grid.size()) != t.panels ||
        sample.choices.negative_count() != t.negatives || sample.puzzle.rules.rows() != K) {
      throw ContractError("samples differ in shape");
    }
    write_sample(img + s * (t.panels + t.negatives) * panel_size, sample.raster, sample.choices,
                 panel_size);
    fill_rules(rules + s * K * kRuleCols, sample.puzzle.rules);
    for (int i = 0; i < t.negatives; ++i) {
      fill_rules(neg + (s * t.negatives + i) * K * kRuleCols,
                 sample.choices.perturbed_rules[static_cast<std::size_t>(i)]);
    }
  }
  return t;
}

std::vector<int> batch_indices(int dataset_size, int batch_size, std::uint64_t seed, long step) {
  if (dataset_size < 1) throw ContractError("empty dataset");
  Rng rng(derive_seed(seed, {kBatchTag, static_cast<std::uint64_t>(step)}));
  const int n = std::min(batch_size, dataset_size);
  // Partial Fisher-Yates over a virtual identity permutation.
  std::vector<int> perm(static_cast<std::size_t>(dataset_size));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 0; i < n; ++i) {
    const int j = i + rng.uniform(dataset_size - i);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  perm.resize(static_cast<std::size_t>(n));
  return perm;
}

Batch make_batch(const Dataset& data, const TensorData& tensors, const std::vector<int>& indices,
                 double augment_probability, std::uint64_t seed, torch::ScalarType dtype) {
  const auto idx = torch::tensor(std::vector<std::int64_t>(indices.begin(), indices.end()),
                                 torch::kLong);
  auto images = tensors.images.index_select(0, idx).clone();
  const int H = data.manifest.height;
  const int W = data.manifest.width;
  const auto panel_size = static_cast<std::size_t>(H * W);
  const RenderOptions render{H, W};
  const int slots = tensors.panels + tensors.negatives;

  if (augment_probability > 0.0) {
    auto* img = images.data_ptr<std::uint8_t>();
    for (std::size_t b = 0; b < indices.size(); ++b) {
      Rng rng(derive_seed(seed, {kAugmentTag, b}));
      if (!rng.bernoulli(augment_probability)) continue;
      const auto& sample = data.samples[static_cast<std::size_t>(indices[b])];
      auto* dst = img + b * slots * panel_size;
      const int choice = rng.uniform(3);
      if (choice == 0) {
        // Rows 1 and 2 trade places; the answer row stays last so the
        // negatives remain valid completions of the context.
        std::vector<std::uint8_t> tmp(3 * panel_size);
        std::memcpy(tmp.data(), dst, tmp.size());
        std::memmove(dst, dst + 3 * panel_size, tmp.size());
        std::memcpy(dst + 3 * panel_size, tmp.data(), tmp.size());
        continue;
      }
      const auto kind = choice == 1 ? AugmentKind::kHorizontalFlip : AugmentKind::kVerticalFlip;
      if (!augmentation_allowed(sample.puzzle, kind, data.config)) continue;
      PuzzleSymbolic flipped;
      try {
        flipped = augment_puzzle(sample.puzzle, kind, data.config, rng.next());
      } catch (const InvalidAugmentation&) {
        continue;
      }
      ChoiceList choices = sample.choices;
      for (auto& c : choices.candidates) c = flip_panel(c, kind, data.config);
      const auto raster = render_puzzle(flipped, choices, data.config, render);
      write_sample(dst, raster, choices, panel_size);
    }
  }

  Batch batch;
  const auto x = images.to(dtype).div_(255.0);
  batch.panels = x.narrow(1, 0, tensors.panels);
  batch.negatives = x.narrow(1, tensors.panels, tensors.negatives);
  batch.rules = tensors.rules.index_select(0, idx).to(dtype);
  batch.negative_rules = tensors.negative_rules.index_select(0, idx).to(dtype);
  return batch;
}

nlohmann::json training_header(const Dataset& data, const TrainingConfig& config, long step) {
  return {{"step", step},
          {"training", config.to_json()},
          {"generation", to_json(data.config)},
          {"legend_hash", hex64(json_hash(to_json(data.config)))},
          {"render", {{"height", data.manifest.height}, {"width", data.manifest.width}}}};
}

GenerationConfig checkpoint_generation(const nlohmann::json& header) {
  if (!header.contains("generation")) throw IoError("checkpoint carries no generation config");
  return generation_config_from_json(header.at("generation"));
}

namespace {

void save_state(const std::filesystem::path& path, GenVPImpl& model,
                torch::optim::AdamW& optimizer, const Dataset& data, const TrainingConfig& config,
                long step) {
  CheckpointExtra extra;
  extra.header = training_header(data, config, step);
  for (const auto& p : model.named_parameters()) {
    const auto it = optimizer.state().find(p.value().unsafeGetTensorImpl());
    if (it == optimizer.state().end()) continue;
    auto& s = static_cast<torch::optim::AdamWParamState&>(*it->second);
    extra.tensors.emplace_back("adam.m." + p.key(), s.exp_avg());
    extra.tensors.emplace_back("adam.v." + p.key(), s.exp_avg_sq());
    extra.header["adam_steps"][p.key()] = s.step();
  }
  save_checkpoint(path, model, extra);
}

void restore_optimizer(GenVPImpl& model, torch::optim::AdamW& optimizer,
                       const CheckpointExtra& extra) {
  std::map<std::string, torch::Tensor> saved(extra.tensors.begin(), extra.tensors.end());
  const auto steps = extra.header.value("adam_steps", nlohmann::json::object());
  for (const auto& p : model.named_parameters()) {
    const auto m = saved.find("adam.m." + p.key());
    const auto v = saved.find("adam.v." + p.key());
    if (m == saved.end() || v == saved.end() || !steps.contains(p.key())) continue;
    auto state = std::make_unique<torch::optim::AdamWParamState>();
    // Parameters join the optimizer at different steps (predictors only
    // after warm-up), so each keeps its own count.
    state->step(steps.at(p.key()).get<std::int64_t>());
    state->exp_avg(m->second.to(p.value().dtype()).clone());
    state->exp_avg_sq(v->second.to(p.value().dtype()).clone());
    optimizer.state()[p.value().unsafeGetTensorImpl()] = std::move(state);
  }
}

}  // namespace

TrainResult train(const Dataset& data, const ModelDims& dims, const TrainingConfig& config,
                  const TrainOptions& options) {
  config.validate();
  dims.validate();
  if (data.manifest.height != dims.height || data.manifest.width != dims.width) {
    throw ConfigError("dataset panel size does not match the model");
  }
  const int K = static_cast<int>(data.config.relevant().size());
  if (K != dims.rule_rows) throw ConfigError("model rule rows do not match the legend");
  if (options.deterministic || options.workers <= 1) {
    torch::set_num_threads(1);
  } else {
    torch::set_num_threads(options.workers);
  }

  TrainResult result;
  long start = 0;
  CheckpointExtra resumed;
  if (!options.resume.empty()) {
    auto [model, extra] = load_checkpoint(options.resume);
    if (model->dims().to_json() != dims.to_json()) {
      throw ConfigError("resume checkpoint has different model dims");
    }
    if (extra.header.value("legend_hash", "") != hex64(json_hash(to_json(data.config)))) {
      throw ConfigError("resume checkpoint was trained on a different legend");
    }
    result.model = model;
    start = extra.header.value("step", 0L);
    resumed = std::move(extra);
  } else {
    torch::manual_seed(config.seed);
    result.model = GenVP(dims);
  }
  auto& model = *result.model;
  model.to(options.dtype);
  model.train();

  // The mixer is fit separately after training.
  std::vector<torch::Tensor> params;
  for (const auto& p : model.named_parameters()) {
    if (p.key().rfind("mixer.", 0) == 0) {
      p.value().set_requires_grad(false);
    } else {
      params.push_back(p.value());
    }
  }
  torch::optim::AdamW optimizer(
      params, torch::optim::AdamWOptions(config.learning_rate)
                  .betas({config.adam_beta1, config.adam_beta2})
                  .eps(config.adam_eps)
                  .weight_decay(config.weight_decay));
  if (!options.resume.empty()) restore_optimizer(model, optimizer, resumed);

  const auto tensors = TensorData::from(data);
  const long warmup = config.resolved_warmup();
  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(options.out_dir / "metrics.jsonl", start > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics log in " + options.out_dir.string());
  }

  for (long step = start; step < config.steps; ++step) {
    const bool joint = step >= warmup;
    const auto indices = batch_indices(tensors.size(), config.batch_size, config.seed, step);
    const auto batch = make_batch(data, tensors, indices, config.augment_probability,
                                  derive_seed(config.seed, {kAugmentTag, static_cast<std::uint64_t>(step)}),
                                  options.dtype);
    optimizer.zero_grad();
    const auto loss = total_objective(
        model, batch, config.at_step(step), joint,
        derive_seed(config.seed, {kNoiseTag, static_cast<std::uint64_t>(step)}));
    const auto bad = loss.first_non_finite();
    if (!bad.empty()) {
      if (!options.out_dir.empty()) {
        save_state(options.out_dir / "last_good.ckpt", model, optimizer, data, config, step);
      }
      throw TrainingFault(bad, step);
    }
    loss.total.backward();
    const double grad_norm = torch::nn::utils::clip_grad_norm_(params, config.clip_norm);
    optimizer.step();

    nlohmann::json record = {{"step", step}, {"phase", joint ? "joint" : "warmup"}};
    for (const auto& [name, value] : loss.values()) record[name] = value;
    record["grad_norm"] = grad_norm;
    if (metrics.is_open()) metrics << record.dump() << '\n' << std::flush;
    if (options.on_metrics) options.on_metrics(record);
    result.metrics.push_back(std::move(record));

    const long done = step + 1;
    if (!options.out_dir.empty() && config.checkpoint_every > 0 &&
        done % config.checkpoint_every == 0) {
      save_state(options.out_dir / ("step_" + std::to_string(done) + ".ckpt"), model, optimizer,
                 data, config, done);
    }
  }
  result.steps_done = std::max(start, config.steps);
  if (!options.out_dir.empty()) {
    save_state(options.out_dir / "final.ckpt", model, optimizer, data, config, result.steps_done);
  }
  model.eval();
  return result;
}

}  // namespace genvp
