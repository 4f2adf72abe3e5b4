#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "genvp/puzzle.hpp"
#include "genvp/render.hpp"
#include "genvp/serialize.hpp"

namespace genvp {

inline constexpr int kDatasetFormatVersion = 1;

struct Sample {
  std::string id;  // six-digit directory name
  PuzzleSymbolic puzzle;
  ChoiceList choices;
  RasterPuzzle raster;
};

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  std::string split;
  int count = 0;
  std::string config_hash;
  Json legend;  // the generation config the split was drawn from
  int height = 0;
  int width = 0;
  std::vector<std::pair<std::string, std::string>> checksums;  // id -> FNV-1a hex
};

struct Dataset {
  DatasetManifest manifest;
  GenerationConfig config;
  std::vector<Sample> samples;
};

// Sample `index` of a split: seed derived from (seed, index), rendered.
Sample make_sample(const GenerationConfig& config, const RenderOptions& render,
                   std::uint64_t seed, int index);

// Layout: <root>/<split>/manifest.json and <root>/<split>/<id>/{panel_<r><c>.pgm,
// choice_<k>.pgm, meta.json}. Throws IoError on any filesystem failure.
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root,
                   const std::string& split, const GenerationConfig& config,
                   const RenderOptions& render);

// Throws IoError on version mismatch, count mismatch, checksum failure or a
// truncated/malformed file.
Dataset read_dataset(const std::filesystem::path& split_dir);

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const RasterPanel& panel);
RasterPanel read_pgm(const std::filesystem::path& path);

std::string sample_id(int index);

}  // namespace genvp
