#include "genvp/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "genvp/error.hpp"

namespace genvp {

namespace {

int polygon_sides(const std::string& label) {
  if (label == "triangle") return 3;
  if (label == "square") return 4;
  if (label == "pentagon") return 5;
  if (label == "hexagon") return 6;
  if (label == "circle") return 0;
  throw LegendError("unknown shape '" + label + "'");
}

double legend_value(const AttributeDomain* d, int index, double fallback) {
  if (!d || index < 0) return fallback;
  if (index >= d->size()) {
    throw LegendError("index " + std::to_string(index) + " outside the " + d->name + " legend");
  }
  return d->value(index);
}

struct Shape {
  double cx, cy, radius, rotation;
  int sides;
  double gray;

  // Signed distance to the outline, positive inside. Exact for circles and
  // inside convex polygons; an underestimate near outer corners.
  double inside(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    if (sides == 0) return radius - std::hypot(dx, dy);
    const double apothem = radius * std::cos(std::numbers::pi / sides);
    double d = apothem;
    for (int k = 0; k < sides; ++k) {
      // Outward edge normal between vertices k and k+1; vertex 0 points up.
      const double a = rotation + (2.0 * k + 1.0) * std::numbers::pi / sides;
      d = std::min(d, apothem - (dx * std::sin(a) - dy * std::cos(a)));
    }
    return d;
  }
};

}  // namespace

int RasterPanel::foreground() const {
  return static_cast<int>(std::count_if(pixels.begin(), pixels.end(),
                                        [](std::uint8_t p) { return p != 255; }));
}

RasterPanel render_panel(const PanelSymbolic& panel, const GenerationConfig& config,
                         const RenderOptions& options) {
  const Layout& layout = layout_for(config.layout);
  if (static_cast<int>(panel.slots.size()) != layout.slot_count()) {
    throw ContractError("panel slot count does not match the layout");
  }
  const AttributeDomain* type = config.domain(AttributeId::kType);
  const AttributeDomain* size = config.domain(AttributeId::kSize);
  const AttributeDomain* color = config.domain(AttributeId::kColor);
  const AttributeDomain* angle = config.domain(AttributeId::kAngle);
  const double H = options.height;
  const double W = options.width;
  const double scale = std::min(H, W);

  std::vector<Shape> shapes;
  for (std::size_t s = 0; s < panel.slots.size(); ++s) {
    if (!panel.slots[s]) continue;
    const Object& o = *panel.slots[s];
    const SlotBox& box = layout.slots[s];
    if (!type || o.type < 0 || o.type >= type->size()) {
      throw LegendError("object type outside the Type legend");
    }
    const std::string label = o.type < static_cast<int>(type->labels.size())
                                  ? type->labels[static_cast<std::size_t>(o.type)]
                                  : "";
    Shape sh;
    sh.sides = polygon_sides(label);
    sh.cx = box.cx * W;
    sh.cy = box.cy * H;
    sh.radius = legend_value(size, o.size, 0.6) * box.half * scale;
    sh.rotation = legend_value(angle, o.angle, 0.0) * std::numbers::pi / 180.0;
    sh.gray = std::clamp(1.0 - legend_value(color, o.color, 0.0) / 8.0, 0.0, 1.0);
    shapes.push_back(sh);
  }

  RasterPanel out(options.height, options.width);
  for (int r = 0; r < options.height; ++r) {
    for (int c = 0; c < options.width; ++c) {
      double v = 1.0;
      for (const Shape& sh : shapes) {
        const double d = sh.inside(c + 0.5, r + 0.5);
        if (std::abs(d) <= options.outline_px) {
          v = 0.0;
        } else if (d > 0) {
          v = sh.gray;
        }
      }
      out.pixels[static_cast<std::size_t>(r * options.width + c)] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

RasterPuzzle render_puzzle(const PuzzleSymbolic& puzzle, const ChoiceList& choices,
                           const GenerationConfig& config, const RenderOptions& options) {
  RasterPuzzle out;
  out.rows = puzzle.rows;
  out.cols = puzzle.cols;
  for (const auto& p : puzzle.grid) out.grid.push_back(render_panel(p, config, options));
  for (const auto& p : choices.candidates) out.choices.push_back(render_panel(p, config, options));
  out.target = choices.target;
  out.rules = puzzle.rules;
  out.perturbed_rules = choices.perturbed_rules;
  return out;
}

}  // namespace genvp
