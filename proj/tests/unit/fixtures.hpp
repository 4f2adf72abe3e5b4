#pragma once

#include <fstream>
#include <string>

#include "genvp/serialize.hpp"

namespace fixtures {

inline genvp::Json load_json(const std::string& rel) {
  std::ifstream in(std::string(GENVP_SOURCE_DIR) + "/" + rel);
  return genvp::Json::parse(in);
}

// The checked-in default generation section, optionally patched by a preset.
inline genvp::GenerationConfig generation(const std::string& preset = "") {
  genvp::Json j = load_json("config/default.json");
  if (!preset.empty()) j.merge_patch(load_json("config/presets/" + preset + ".json"));
  return genvp::generation_config_from_json(j.at("generation"));
}

}  // namespace fixtures
