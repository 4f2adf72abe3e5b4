#include "genvp/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "genvp/dataset.hpp"
#include "genvp/error.hpp"
#include "genvp/evaluation.hpp"
#include "genvp/generator.hpp"
#include "genvp/ood.hpp"
#include "genvp/rng.hpp"
#include "genvp/run_config.hpp"
#include "genvp/trainer.hpp"

namespace genvp {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config merged over the defaults");
  cmd->add_option("--seed", c.seed, "Seed (falls back to GENVP_SEED, then the config)");
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic", c.deterministic, "Serial execution, bit-reproducible output");
}

std::uint64_t resolve_seed(const Common& c, std::uint64_t fallback) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("GENVP_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("GENVP_SEED must be a non-negative integer");
  }
  return fallback;
}

RunConfig load_run_config(const fs::path& defaults, const Common& c) {
  return RunConfig::from_json(load_config_json(defaults, c.config));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Sample> make_samples(const GenerationConfig& config, const RenderOptions& render,
                                 std::uint64_t seed, int count, int workers) {
  std::vector<Sample> samples(static_cast<std::size_t>(count));
  const int n = std::max(1, std::min(workers, count));
  auto work = [&](int w) {
    for (int i = w; i < count; i += n) {
      samples[static_cast<std::size_t>(i)] = make_sample(config, render, seed, i);
    }
  };
  if (n == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < n; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  return samples;
}

// Binary PGM of a grid with 2-pixel white gutters.
RasterPanel montage(const std::vector<RasterPanel>& panels, int rows, int cols) {
  const int H = panels.front().height;
  const int W = panels.front().width;
  constexpr int gap = 2;
  RasterPanel out(rows * H + (rows - 1) * gap, cols * W + (cols - 1) * gap);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto idx = static_cast<std::size_t>(r * cols + c);
      if (idx >= panels.size()) continue;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          out.pixels[static_cast<std::size_t>((r * (H + gap) + y) * out.width + c * (W + gap) + x)] =
              panels[idx].pixels[static_cast<std::size_t>(y * W + x)];
        }
      }
    }
  }
  return out;
}

// "Type=constant,Size=progression" against the legend's relevant rows;
// unnamed rows default to random.
RuleMatrix parse_rules_spec(const std::string& spec, const GenerationConfig& config) {
  const auto names = config.relevant_names();
  std::vector<RuleKind> kinds(names.size(), RuleKind::kRandom);
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("rule spec items look like Attribute=rule");
    const auto attr = item.substr(0, eq);
    const auto it = std::find(names.begin(), names.end(), attr);
    if (it == names.end()) throw ConfigError("'" + attr + "' is not a governed attribute");
    const auto kind = parse_rule_kind(item.substr(eq + 1));
    const auto& allowed = config.relevant()[static_cast<std::size_t>(it - names.begin())]->allowed_rules;
    if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end()) {
      throw ConfigError("rule " + item.substr(eq + 1) + " is not allowed for " + attr);
    }
    kinds[static_cast<std::size_t>(it - names.begin())] = kind;
  }
  return RuleMatrix(names, kinds);
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not a number");
    }
  }
  return out;
}

int cmd_gen_data(const fs::path& defaults, const Common& common, const std::string& out,
                 const std::string& split, std::optional<int> count) {
  const auto cfg = load_run_config(defaults, common);
  const auto seed = resolve_seed(common, cfg.generation.seed);
  const int n = count.value_or(split == "test" ? cfg.data.test_count : cfg.data.train_count);
  if (n < 0) throw ConfigError("--count must be >= 0");
  // Splits other than train draw from their own stream so they never overlap it.
  const auto split_seed = split == "train" ? seed : derive_seed(seed, {json_hash(Json(split))});
  const auto samples = make_samples(cfg.generation, cfg.render, split_seed, n,
                                    common.deterministic ? 1 : common.workers);
  write_dataset(samples, out, split, cfg.generation, cfg.render);
  std::cout << "wrote " << n << " samples to " << (fs::path(out) / split).string() << "\n";
  return kExitOk;
}

ModelDims dims_for(const RunConfig& cfg, const Dataset& data) {
  auto j = cfg.model.to_json();
  j["height"] = data.manifest.height;
  j["width"] = data.manifest.width;
  j["rule_rows"] = data.config.rule_rows();
  j["rows"] = data.config.rows;
  j["cols"] = data.config.cols;
  return ModelDims::from_json(j);
}

int cmd_train(const fs::path& defaults, const Common& common, const std::string& data_dir,
              const std::string& out, std::optional<long> steps, bool no_contrast,
              const std::string& resume) {
  auto cfg = load_run_config(defaults, common);
  cfg.training.seed = resolve_seed(common, cfg.training.seed);
  if (steps) cfg.training.steps = *steps;
  if (no_contrast) {
    cfg.training.beta_global = 0.0;
    cfg.training.beta_local = 0.0;
  }
  cfg.training.validate();
  const auto data = read_dataset(data_dir);
  if (data.samples.empty()) throw ConfigError("training split is empty");
  const auto dims = dims_for(cfg, data);

  fs::create_directories(out);
  auto run = cfg.to_json();
  run["generation"] = to_json(data.config);
  write_text(fs::path(out) / "config.json", run.dump(2) + "\n");

  TrainOptions options;
  options.out_dir = out;
  options.resume = resume;
  options.workers = common.workers;
  options.deterministic = common.deterministic;
  train(data, dims, cfg.training, options);

  if (cfg.mixer.epochs > 0) {
    const auto final_path = fs::path(out) / "final.ckpt";
    auto [model, extra] = load_checkpoint(final_path);
    model->eval();
    train_mixer(*model, data, cfg.mixer);
    save_checkpoint(final_path, *model, extra);
  }
  std::cout << "trained " << cfg.training.steps << " steps; checkpoint "
            << (fs::path(out) / "final.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_solve(const fs::path& defaults, const Common& common, const std::string& checkpoint,
              const std::string& data_dir, const std::string& mixture, bool oracle_stub,
              bool random_stub, const std::string& out) {
  const auto cfg = load_run_config(defaults, common);
  const auto kind = mixture.empty() ? cfg.eval.mixture : parse_mixture_kind(mixture);
  if (oracle_stub && random_stub) throw ConfigError("choose one stub predictor");
  if (!oracle_stub && !random_stub && checkpoint.empty()) {
    throw ConfigError("--checkpoint is required unless a stub predictor is chosen");
  }
  const auto data = read_dataset(data_dir);
  if (data.samples.empty()) throw ConfigError("split is empty");
  std::unique_ptr<RulePredictor> predictor;
  std::string name(to_string(kind));
  if (oracle_stub) {
    predictor = std::make_unique<OraclePredictor>(data.config);
    name = "oracle-stub";
  } else if (random_stub) {
    predictor = std::make_unique<RandomPredictor>(data.config.rule_rows(),
                                                  resolve_seed(common, 0));
    name = "random-stub";
  } else {
    auto [model, extra] = load_checkpoint(checkpoint);
    if (extra.header.value("legend_hash", "") != hex64(json_hash(to_json(data.config)))) {
      std::cerr << "note: split legend differs from the training legend\n";
    }
    model->eval();
    predictor = std::make_unique<ModelPredictor>(model, kind);
  }
  const auto report = evaluate(data.manifest.split, data, *predictor, name);
  const auto text = report.to_json().dump(2) + "\n";
  if (!out.empty()) write_text(out, text);
  std::cout << text;
  return kExitOk;
}

int cmd_generate(const fs::path& defaults, const Common& common, const std::string& checkpoint,
                 const std::string& rules_spec, bool sample, int n, const std::string& out,
                 double temperature, const std::string& context_dir, bool with_montage) {
  const auto cfg = load_run_config(defaults, common);
  (void)cfg;
  if (n < 1) throw ConfigError("--n must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("--temperature must be > 0");
  const int modes = static_cast<int>(!rules_spec.empty()) + static_cast<int>(sample) +
                    static_cast<int>(!context_dir.empty());
  if (modes != 1) throw ConfigError("choose exactly one of --rules, --sample, --complete-context");
  const auto seed = resolve_seed(common, 0);
  auto [model, extra] = load_checkpoint(checkpoint);
  model->eval();
  const auto generation = checkpoint_generation(extra.header);
  const auto& d = model->dims();
  const auto dtype = model->parameters().front().scalar_type();
  fs::create_directories(out);

  if (!context_dir.empty()) {
    std::vector<RasterPanel> context;
    for (int r = 0; r < d.rows; ++r) {
      for (int c = 0; c < d.cols; ++c) {
        if (r == d.rows - 1 && c == d.cols - 1) break;
        context.push_back(read_pgm(fs::path(context_dir) / ("panel_" + std::to_string(r) +
                                                            std::to_string(c) + ".pgm")));
      }
    }
    std::vector<const RasterPanel*> ptrs;
    for (const auto& p : context) ptrs.push_back(&p);
    const auto images = propose_solutions(*model, panels_to_tensor(ptrs, dtype), n, seed);
    std::vector<RasterPanel> candidates;
    for (int k = 0; k < n; ++k) {
      candidates.push_back(tensor_to_panel(images[k]));
      write_pgm(fs::path(out) / ("candidate_" + std::to_string(k) + ".pgm"), candidates.back());
    }
    write_text(fs::path(out) / "candidates.json",
               nlohmann::json{{"context", context_dir}, {"n", n}, {"seed", seed}}.dump(1) + "\n");
    if (with_montage) {
      for (int k = 0; k < n; ++k) {
        auto grid = context;
        grid.push_back(candidates[static_cast<std::size_t>(k)]);
        write_pgm(fs::path(out) / ("montage_" + std::to_string(k) + ".pgm"),
                  montage(grid, d.rows, d.cols));
      }
    }
    std::cout << "wrote " << n << " candidates to " << out << "\n";
    return kExitOk;
  }

  for (int i = 0; i < n; ++i) {
    const auto s = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    const RuleMatrix rules = sample ? sample_rule_matrix(generation, s).matrix
                                    : parse_rules_spec(rules_spec, generation);
    const auto images = generate_from_rules(*model, rules_to_tensor({&rules}, dtype),
                                            derive_seed(s, {1}), temperature)[0];
    const auto dir = fs::path(out) / ("grid_" + std::to_string(i));
    fs::create_directories(dir);
    std::vector<RasterPanel> panels;
    for (int r = 0; r < d.rows; ++r) {
      for (int c = 0; c < d.cols; ++c) {
        panels.push_back(tensor_to_panel(images[r * d.cols + c]));
        write_pgm(dir / ("panel_" + std::to_string(r) + std::to_string(c) + ".pgm"),
                  panels.back());
      }
    }
    write_text(dir / "rules.json",
               nlohmann::json{{"rules", to_json(rules)}, {"seed", s}, {"temperature", temperature}}
                       .dump(1) +
                   "\n");
    if (with_montage) write_pgm(dir / "montage.pgm", montage(panels, d.rows, d.cols));
  }
  std::cout << "wrote " << n << " grids to " << out << "\n";
  return kExitOk;
}

int cmd_eval_coherence(const fs::path& defaults, const Common& common,
                       const std::string& checkpoint, std::optional<int> n,
                       const std::string& mixture, std::optional<double> temperature,
                       const std::string& out, const std::string& csv) {
  const auto cfg = load_run_config(defaults, common);
  const int count = n.value_or(cfg.eval.coherence_samples);
  if (count < 1) throw ConfigError("--n must be >= 1");
  const double t = temperature.value_or(cfg.eval.coherence_temperature);
  if (!(t > 0.0)) throw ConfigError("--temperature must be > 0");
  const auto kind = mixture.empty() ? cfg.eval.mixture : parse_mixture_kind(mixture);
  const auto seed = resolve_seed(common, 0);
  auto [model, extra] = load_checkpoint(checkpoint);
  model->eval();
  const auto generation = checkpoint_generation(extra.header);
  const auto report = coherence(model, generation, kind, count, seed, t);
  auto j = report.to_json();
  j["n"] = count;
  j["seed"] = seed;
  j["temperature"] = t;
  j["mixture"] = std::string(to_string(kind));
  const auto text = j.dump(2) + "\n";
  if (!out.empty()) write_text(out, text);
  if (!csv.empty()) write_text(csv, report.matrix_csv());
  std::cout << text;
  return kExitOk;
}

int cmd_ood_split(const fs::path& defaults, const Common& common, const std::string& mode_name,
                  const std::string& attribute, const std::string& values,
                  const std::string& held_out, const std::string& out,
                  std::optional<int> train_count, std::optional<int> test_count) {
  const auto cfg = load_run_config(defaults, common);
  const auto mode = parse_ood_mode(mode_name);
  OodParams params;
  params.attribute = attribute;
  if (!values.empty()) params.values = parse_values(values);
  if (!held_out.empty()) {
    std::stringstream ss(held_out);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("--held-out items look like Attribute=rule");
      params.held_out.emplace_back(item.substr(0, eq), parse_rule_kind(item.substr(eq + 1)));
    }
  }
  const auto split = build_ood_split(cfg.generation, mode, params);
  const auto seed = resolve_seed(common, cfg.generation.seed);
  const int workers = common.deterministic ? 1 : common.workers;
  const int n_train = train_count.value_or(cfg.data.train_count);
  const int n_test = test_count.value_or(cfg.data.test_count);
  if (n_train < 0 || n_test < 0) throw ConfigError("counts must be >= 0");
  write_dataset(make_samples(split.train, cfg.render, seed, n_train, workers), out, "train",
                split.train, cfg.render);
  write_dataset(make_samples(split.test, cfg.render, derive_seed(seed, {1}), n_test, workers), out,
                "test", split.test, cfg.render);
  std::cout << "wrote " << to_string(mode) << " split to " << out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, const fs::path& default_config) {
  CLI::App app{"GenVP: generative Raven-style puzzle model", "genvp"};
  app.require_subcommand(1);

  Common common;
  std::string out, data_dir, checkpoint, mixture, split = "train", resume, rules_spec,
                                                   context_dir, csv, mode, attribute, values,
                                                   held_out;
  std::optional<int> count, n, train_count, test_count;
  std::optional<long> steps;
  std::optional<double> temperature;
  bool no_contrast = false, oracle_stub = false, random_stub = false, sample = false,
       with_montage = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a dataset split");
  add_common(gen, common);
  gen->add_option("--out", out, "Dataset root")->required();
  gen->add_option("--split", split, "Split name");
  gen->add_option("--count", count, "Number of samples");

  auto* tr = app.add_subcommand("train", "Train a model on a split");
  add_common(tr, common);
  tr->add_option("--data", data_dir, "Split directory")->required();
  tr->add_option("--out", out, "Run directory")->required();
  tr->add_option("--steps", steps, "Override training.steps");
  tr->add_flag("--no-contrast", no_contrast, "Zero the contrastive weights");
  tr->add_option("--resume", resume, "Checkpoint to resume from");

  auto* so = app.add_subcommand("solve", "Solve a split and report accuracy");
  add_common(so, common);
  so->add_option("--checkpoint", checkpoint, "Model checkpoint");
  so->add_option("--data", data_dir, "Split directory")->required();
  so->add_option("--mixture", mixture, "Mixture kind");
  so->add_flag("--oracle-stub", oracle_stub, "Use the symbolic oracle as the rule predictor");
  so->add_flag("--random-stub", random_stub, "Use random rule predictions");
  so->add_option("--out", out, "Report path");

  auto* ge = app.add_subcommand("generate", "Generate puzzles or candidate answers");
  add_common(ge, common);
  ge->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  ge->add_option("--rules", rules_spec, "Rules, e.g. Type=constant,Size=progression");
  ge->add_flag("--sample", sample, "Draw rules from the rule prior");
  ge->add_option("--complete-context", context_dir, "Sample directory whose context to complete");
  ge->add_option("--n", n, "Number of grids or candidates");
  ge->add_option("--temperature", temperature, "Prior temperature");
  ge->add_option("--out", out, "Output directory")->required();
  ge->add_flag("--montage", with_montage, "Also write grid montages");

  auto* co = app.add_subcommand("eval-coherence", "Generation coherence report");
  add_common(co, common);
  co->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  co->add_option("--n", n, "Number of generated puzzles");
  co->add_option("--mixture", mixture, "Mixture kind");
  co->add_option("--temperature", temperature, "Prior temperature");
  co->add_option("--out", out, "Report path");
  co->add_option("--csv", csv, "CSV path for the (attribute, rule) matrix");

  auto* od = app.add_subcommand("ood-split", "Write an out-of-distribution train/test pair");
  add_common(od, common);
  od->add_option("--mode", mode, "value-interpolation, value-extrapolation or rule-held-out")
      ->required();
  od->add_option("--attribute", attribute, "Attribute for the value modes");
  od->add_option("--values", values, "Comma-separated test legend values");
  od->add_option("--held-out", held_out, "Comma-separated Attribute=rule pairs");
  od->add_option("--out", out, "Dataset root")->required();
  od->add_option("--train-count", train_count, "Train samples");
  od->add_option("--test-count", test_count, "Test samples");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(default_config, common, out, split, count);
    if (*tr) return cmd_train(default_config, common, data_dir, out, steps, no_contrast, resume);
    if (*so) {
      return cmd_solve(default_config, common, checkpoint, data_dir, mixture, oracle_stub,
                       random_stub, out);
    }
    if (*ge) {
      return cmd_generate(default_config, common, checkpoint, rules_spec, sample, n.value_or(1),
                          out, temperature.value_or(1.0), context_dir, with_montage);
    }
    if (*co) {
      return cmd_eval_coherence(default_config, common, checkpoint, n, mixture, temperature, out,
                                csv);
    }
    if (*od) {
      return cmd_ood_split(default_config, common, mode, attribute, values, held_out, out,
                           train_count, test_count);
    }
  } catch (const TrainingFault& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNonFinite;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LegendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace genvp
