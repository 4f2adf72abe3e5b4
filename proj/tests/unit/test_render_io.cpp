#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "genvp/dataset.hpp"
#include "genvp/error.hpp"
#include "genvp/generator.hpp"
#include "genvp/ood.hpp"

using namespace genvp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("genvp_test_" + name);
  fs::remove_all(p);
  return p;
}

PanelSymbolic one_object(int type, int size, int color, int angle) {
  PanelSymbolic p;
  p.slots = {Object{type, size, color, angle}};
  return p;
}

}  // namespace

TEST_CASE("render_panel basics") {
  const auto c = fixtures::generation();
  const RenderOptions opt;
  PanelSymbolic empty;
  empty.slots = {std::nullopt};
  const auto blank = render_panel(empty, c, opt);
  CHECK(blank.foreground() == 0);
  CHECK(blank.height == 32);

  const auto a = render_panel(one_object(1, 2, 3, 0), c, opt);
  CHECK(a == render_panel(one_object(1, 2, 3, 0), c, opt));
  for (int type = 0; type < 5; ++type) {
    int prev = 0;
    for (int size = 0; size < 6; ++size) {
      const int n = render_panel(one_object(type, size, 4, 0), c, opt).foreground();
      CHECK(n > prev);
      prev = n;
    }
  }
  // Darker fill for higher color values.
  CHECK(render_panel(one_object(4, 5, 7, 0), c, opt).value(16, 16) <
        render_panel(one_object(4, 5, 1, 0), c, opt).value(16, 16));
  CHECK_THROWS_AS(render_panel(one_object(9, 0, 0, 0), c, opt), LegendError);
  auto bad = c;
  for (auto& attr : bad.attributes) {
    if (attr.domain.id == AttributeId::kType) attr.domain.labels[0] = "star";
  }
  CHECK_THROWS_AS(render_panel(one_object(0, 0, 0, 0), bad, opt), LegendError);
}

TEST_CASE("distractor angle only changes affected panels") {
  const auto c = fixtures::generation();
  const auto s = generate_sample(c, 4);
  auto p2 = s.puzzle;
  auto& obj = *p2.grid[2].slots[0];
  obj.angle = (obj.angle + 1) % 8;
  obj.type = 0;  // triangles are not rotation-symmetric at 45 degrees
  auto p1 = s.puzzle;
  p1.grid[2].slots[0]->type = 0;
  const auto r1 = render_puzzle(p1, s.choices, c, {});
  const auto r2 = render_puzzle(p2, s.choices, c, {});
  for (int i = 0; i < 9; ++i) CHECK((r1.grid[i] == r2.grid[i]) == (i != 2));
  CHECK(r1.grid[8] == r1.choices[r1.target]);
}

TEST_CASE("dataset round trip and corruption errors") {
  const auto c = fixtures::generation("grid_2x2");
  RenderOptions opt;
  std::vector<Sample> samples;
  for (int i = 0; i < 20; ++i) samples.push_back(make_sample(c, opt, 99, i));
  const fs::path root = scratch("ds");
  write_dataset(samples, root, "train", c, opt);
  const auto ds = read_dataset(root / "train");
  REQUIRE(ds.samples.size() == 20);
  for (int i = 0; i < 20; ++i) {
    CHECK(ds.samples[i].raster.grid == samples[i].raster.grid);
    CHECK(ds.samples[i].raster.choices == samples[i].raster.choices);
    CHECK(ds.samples[i].puzzle.rules == samples[i].puzzle.rules);
    CHECK(ds.samples[i].puzzle.seed == samples[i].puzzle.seed);
    CHECK(ds.samples[i].choices.target == samples[i].choices.target);
    CHECK(ds.samples[i].choices.perturbed_rules == samples[i].choices.perturbed_rules);
  }

  SUBCASE("empty split") {
    write_dataset({}, root, "empty", c, opt);
    CHECK(read_dataset(root / "empty").samples.empty());
  }
  SUBCASE("checksum") {
    const fs::path f = root / "train" / "000003" / "panel_11.pgm";
    std::fstream io(f, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(-1, std::ios::end);
    io.put('\x01');
    io.close();
    CHECK_THROWS_AS(read_dataset(root / "train"), IoError);
  }
  SUBCASE("truncation") {
    const fs::path f = root / "train" / "000004" / "choice_2.pgm";
    fs::resize_file(f, fs::file_size(f) - 5);
    CHECK_THROWS_AS(read_dataset(root / "train"), IoError);
  }
  SUBCASE("count mismatch") {
    fs::remove_all(root / "train" / "000019");
    CHECK_THROWS_AS(read_dataset(root / "train"), IoError);
  }
  SUBCASE("version mismatch") {
    const fs::path f = root / "train" / "manifest.json";
    Json m;
    {
      std::ifstream in(f);
      m = Json::parse(in);
    }
    m["format_version"] = kDatasetFormatVersion + 1;
    std::ofstream(f) << m.dump();
    CHECK_THROWS_AS(read_dataset(root / "train"), IoError);
  }
  fs::remove_all(root);
}

TEST_CASE("OOD splits") {
  const auto c = fixtures::generation("grid_2x2");

  SUBCASE("angle interpolation reproduces the midpoint set") {
    const auto split = build_ood_split(c, OodMode::kValueInterpolation, {"Angle", {}, {}});
    CHECK(split.train.domain(AttributeId::kAngle)->values == c.domain(AttributeId::kAngle)->values);
    CHECK(split.test.domain(AttributeId::kAngle)->values ==
          std::vector<double>{-157, -112, -67, -22, 22, 67, 112, 157});
  }
  SUBCASE("size interpolation interleaves") {
    const auto split = build_ood_split(c, OodMode::kValueInterpolation, {"Size", {}, {}});
    const auto& tr = split.train.domain(AttributeId::kSize)->values;
    const auto& te = split.test.domain(AttributeId::kSize)->values;
    REQUIRE(te.size() + 1 == tr.size());
    for (std::size_t i = 0; i < te.size(); ++i) CHECK((tr[i] < te[i] && te[i] < tr[i + 1]));
    CHECK_THROWS_AS(build_ood_split(c, OodMode::kValueInterpolation, {"Size", {0.5}, {}}),
                    ConfigError);
  }
  SUBCASE("size extrapolation") {
    const std::vector<double> v = {0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};
    const auto split = build_ood_split(c, OodMode::kValueExtrapolation, {"Size", v, {}});
    CHECK(split.test.domain(AttributeId::kSize)->values == v);
    CHECK_THROWS_AS(build_ood_split(c, OodMode::kValueExtrapolation, {"Size", {}, {}}),
                    ConfigError);
    CHECK_THROWS_AS(build_ood_split(c, OodMode::kValueExtrapolation, {"Size", {0.5, 0.6}, {}}),
                    ConfigError);
  }
  SUBCASE("rule held out") {
    const OodParams params{"", {}, {{"Type", RuleKind::kConstant}}};
    const auto split = build_ood_split(c, OodMode::kRuleHeldOut, params);
    int train_hits = 0, test_hits = 0;
    for (std::uint64_t s = 0; s < 300; ++s) {
      const auto tr = generate_puzzle(split.train, s);
      const auto te = generate_puzzle(split.test, s);
      train_hits += tr.rules.kind(tr.rules.row_of("Type")) == RuleKind::kConstant;
      test_hits += te.rules.kind(te.rules.row_of("Type")) == RuleKind::kConstant;
    }
    CHECK(train_hits == 0);
    CHECK(test_hits > 0);
    OodParams all{"", {}, {}};
    for (RuleKind k : c.find(AttributeId::kType)->allowed_rules) all.held_out.push_back({"Type", k});
    CHECK_THROWS_AS(build_ood_split(c, OodMode::kRuleHeldOut, all), ConfigError);
  }
}
