#include "genvp/run_config.hpp"

#include <fstream>

#include "genvp/error.hpp"
#include "genvp/serialize.hpp"

namespace genvp {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
}

const nlohmann::json& section(const nlohmann::json& j, const char* name) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(name)) return empty;
  if (!j.at(name).is_object()) throw ConfigError(std::string(name) + " must be an object");
  return j.at(name);
}

template <typename T>
void read(const nlohmann::json& j, const char* where, const char* key, T& field) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(std::string(where) + "." + key + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      throw ConfigError(std::string(where) + "." + key + " must be an integer");
    }
  } else {
    if (!v.is_number()) throw ConfigError(std::string(where) + "." + key + " must be a number");
  }
  field = v.get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, {"generation", "render", "model", "training", "eval", "mixer", "data"}, "config");
  RunConfig c;
  try {
    c.generation = generation_config_from_json(section(j, "generation"));

    const auto& r = section(j, "render");
    check_keys(r, {"height", "width", "outline_px"}, "render");
    read(r, "render", "height", c.render.height);
    read(r, "render", "width", c.render.width);
    read(r, "render", "outline_px", c.render.outline_px);
    if (c.render.height < 4 || c.render.width < 4 || c.render.outline_px < 0.0) {
      throw ConfigError("render sizes out of range");
    }

    auto m = section(j, "model");
    check_keys(m, {"latent", "object", "row", "hidden", "base_channels", "max_channels"}, "model");
    m["height"] = c.render.height;
    m["width"] = c.render.width;
    m["rule_rows"] = c.generation.rule_rows();
    m["rows"] = c.generation.rows;
    m["cols"] = c.generation.cols;
    c.model = ModelDims::from_json(m);

    c.training = TrainingConfig::from_json(section(j, "training"));

    const auto& e = section(j, "eval");
    check_keys(e, {"mixture", "coherence_samples", "coherence_temperature"}, "eval");
    if (e.contains("mixture")) {
      if (!e.at("mixture").is_string()) throw ConfigError("eval.mixture must be a string");
      c.eval.mixture = parse_mixture_kind(e.at("mixture").get<std::string>());
    }
    read(e, "eval", "coherence_samples", c.eval.coherence_samples);
    read(e, "eval", "coherence_temperature", c.eval.coherence_temperature);
    if (c.eval.coherence_samples < 1 || !(c.eval.coherence_temperature > 0.0)) {
      throw ConfigError("eval settings out of range");
    }

    const auto& x = section(j, "mixer");
    check_keys(x, {"epochs", "learning_rate", "temperature", "seed"}, "mixer");
    read(x, "mixer", "epochs", c.mixer.epochs);
    read(x, "mixer", "learning_rate", c.mixer.learning_rate);
    read(x, "mixer", "temperature", c.mixer.temperature);
    read(x, "mixer", "seed", c.mixer.seed);
    if (c.mixer.epochs < 0 || !(c.mixer.learning_rate > 0.0)) {
      throw ConfigError("mixer settings out of range");
    }

    const auto& d = section(j, "data");
    check_keys(d, {"train_count", "test_count"}, "data");
    read(d, "data", "train_count", c.data.train_count);
    read(d, "data", "test_count", c.data.test_count);
    if (c.data.train_count < 0 || c.data.test_count < 0) {
      throw ConfigError("data counts must be >= 0");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

nlohmann::json RunConfig::to_json() const {
  auto m = model.to_json();
  for (const char* derived : {"height", "width", "rule_rows", "rows", "cols"}) m.erase(derived);
  return {{"generation", genvp::to_json(generation)},
          {"render",
           {{"height", render.height}, {"width", render.width}, {"outline_px", render.outline_px}}},
          {"model", m},
          {"training", training.to_json()},
          {"eval",
           {{"mixture", std::string(to_string(eval.mixture))},
            {"coherence_samples", eval.coherence_samples},
            {"coherence_temperature", eval.coherence_temperature}}},
          {"mixer",
           {{"epochs", mixer.epochs},
            {"learning_rate", mixer.learning_rate},
            {"temperature", mixer.temperature},
            {"seed", mixer.seed}}},
          {"data", {{"train_count", data.train_count}, {"test_count", data.test_count}}}};
}

nlohmann::json load_config_json(const std::filesystem::path& defaults,
                                const std::filesystem::path& user) {
  auto j = read_json(defaults);
  if (!user.empty()) j.merge_patch(read_json(user));
  return j;
}

}  // namespace genvp
