#include "genvp/dataset.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "genvp/error.hpp"
#include "genvp/generator.hpp"
#include "genvp/rng.hpp"

namespace genvp {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

std::string pgm_bytes(const RasterPanel& panel) {
  std::string s = "P5\n" + std::to_string(panel.width) + " " + std::to_string(panel.height) +
                  "\n255\n";
  s.append(panel.pixels.begin(), panel.pixels.end());
  return s;
}

RasterPanel parse_pgm(const std::string& bytes, const std::string& name) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 255 || w <= 0 || h <= 0) {
    throw IoError(name + ": not an 8-bit P5 image");
  }
  in.get();
  const auto offset = static_cast<std::size_t>(in.tellg());
  const auto need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != offset + need) throw IoError(name + ": truncated or oversized pixel data");
  RasterPanel p(h, w);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end(), p.pixels.begin());
  return p;
}

std::uint64_t fnv1a(std::uint64_t h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string panel_name(int r, int c) {
  return "panel_" + std::to_string(r) + std::to_string(c) + ".pgm";
}

std::string choice_name(int k) { return "choice_" + std::to_string(k) + ".pgm"; }

// Files of one sample in checksum order, as (name, bytes).
std::vector<std::pair<std::string, std::string>> sample_files(const Sample& s) {
  std::vector<std::pair<std::string, std::string>> files;
  const Json meta = {{"id", s.id},
                     {"seed", s.puzzle.seed},
                     {"puzzle", to_json(s.puzzle)},
                     {"choices", to_json(s.choices)},
                     {"target", s.choices.target}};
  files.emplace_back("meta.json", meta.dump(1) + "\n");
  for (int r = 0; r < s.raster.rows; ++r) {
    for (int c = 0; c < s.raster.cols; ++c) {
      files.emplace_back(panel_name(r, c),
                         pgm_bytes(s.raster.grid[static_cast<std::size_t>(r * s.raster.cols + c)]));
    }
  }
  for (std::size_t k = 0; k < s.raster.choices.size(); ++k) {
    files.emplace_back(choice_name(static_cast<int>(k)), pgm_bytes(s.raster.choices[k]));
  }
  return files;
}

}  // namespace

std::string sample_id(int index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

Sample make_sample(const GenerationConfig& config, const RenderOptions& render,
                   std::uint64_t seed, int index) {
  auto sym = generate_sample(config, derive_seed(seed, {static_cast<std::uint64_t>(index)}));
  Sample s;
  s.id = sample_id(index);
  s.raster = render_puzzle(sym.puzzle, sym.choices, config, render);
  s.puzzle = std::move(sym.puzzle);
  s.choices = std::move(sym.choices);
  return s;
}

void write_pgm(const fs::path& path, const RasterPanel& panel) { spit(path, pgm_bytes(panel)); }

RasterPanel read_pgm(const fs::path& path) { return parse_pgm(slurp(path), path.string()); }

void write_dataset(const std::vector<Sample>& samples, const fs::path& root,
                   const std::string& split, const GenerationConfig& config,
                   const RenderOptions& render) {
  const fs::path dir = root / split;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  Json sums = Json::array();
  for (const auto& s : samples) {
    const fs::path sdir = dir / s.id;
    fs::create_directories(sdir, ec);
    if (ec) throw IoError("cannot create " + sdir.string() + ": " + ec.message());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, bytes] : sample_files(s)) {
      spit(sdir / name, bytes);
      h = fnv1a(h, bytes);
    }
    sums.push_back({{"id", s.id}, {"fnv1a", hex64(h)}});
  }
  const Json legend = to_json(config);
  const Json manifest = {{"format_version", kDatasetFormatVersion},
                         {"split", split},
                         {"count", samples.size()},
                         {"config_hash", hex64(json_hash(legend))},
                         {"legend", legend},
                         {"height", render.height},
                         {"width", render.width},
                         {"samples", sums}};
  spit(dir / "manifest.json", manifest.dump(1) + "\n");
}

Dataset read_dataset(const fs::path& split_dir) {
  Dataset ds;
  Json m;
  try {
    m = Json::parse(slurp(split_dir / "manifest.json"));
    ds.manifest.format_version = m.at("format_version").get<int>();
    if (ds.manifest.format_version != kDatasetFormatVersion) {
      throw IoError("dataset format version " + std::to_string(ds.manifest.format_version) +
                    " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")");
    }
    ds.manifest.split = m.at("split").get<std::string>();
    ds.manifest.count = m.at("count").get<int>();
    ds.manifest.config_hash = m.at("config_hash").get<std::string>();
    ds.manifest.legend = m.at("legend");
    ds.manifest.height = m.at("height").get<int>();
    ds.manifest.width = m.at("width").get<int>();
    for (const auto& e : m.at("samples")) {
      ds.manifest.checksums.emplace_back(e.at("id").get<std::string>(),
                                         e.at("fnv1a").get<std::string>());
    }
    ds.config = generation_config_from_json(ds.manifest.legend);
  } catch (const Json::exception& e) {
    throw IoError("malformed manifest in " + split_dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError("manifest legend invalid: " + std::string(e.what()));
  }
  int on_disk = 0;
  for (const auto& entry : fs::directory_iterator(split_dir)) on_disk += entry.is_directory();
  if (ds.manifest.count != static_cast<int>(ds.manifest.checksums.size()) ||
      ds.manifest.count != on_disk) {
    throw IoError("manifest count " + std::to_string(ds.manifest.count) + " does not match " +
                  std::to_string(on_disk) + " sample directories");
  }

  for (const auto& [id, expected] : ds.manifest.checksums) {
    const fs::path sdir = split_dir / id;
    Sample s;
    s.id = id;
    const std::string meta_bytes = slurp(sdir / "meta.json");
    std::uint64_t h = fnv1a(0xcbf29ce484222325ULL, meta_bytes);
    try {
      const Json meta = Json::parse(meta_bytes);
      s.puzzle = puzzle_from_json(meta.at("puzzle"));
      s.choices = choice_list_from_json(meta.at("choices"));
    } catch (const std::exception& e) {
      throw IoError("sample " + id + ": malformed meta.json: " + e.what());
    }
    s.raster.rows = s.puzzle.rows;
    s.raster.cols = s.puzzle.cols;
    s.raster.target = s.choices.target;
    s.raster.rules = s.puzzle.rules;
    s.raster.perturbed_rules = s.choices.perturbed_rules;
    auto load = [&](const std::string& name) {
      const std::string bytes = slurp(sdir / name);
      h = fnv1a(h, bytes);
      RasterPanel p = parse_pgm(bytes, id + "/" + name);
      if (p.height != ds.manifest.height || p.width != ds.manifest.width) {
        throw IoError(id + "/" + name + ": size differs from the manifest");
      }
      return p;
    };
    for (int r = 0; r < s.puzzle.rows; ++r) {
      for (int c = 0; c < s.puzzle.cols; ++c) s.raster.grid.push_back(load(panel_name(r, c)));
    }
    for (std::size_t k = 0; k < s.choices.candidates.size(); ++k) {
      s.raster.choices.push_back(load(choice_name(static_cast<int>(k))));
    }
    if (hex64(h) != expected) throw IoError("sample " + id + ": checksum mismatch");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace genvp
