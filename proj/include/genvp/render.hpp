#pragma once

#include <cstdint>
#include <vector>

#include "genvp/puzzle.hpp"

namespace genvp {

// 8-bit grayscale panel; intensity k/255, 255 = white background.
struct RasterPanel {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  RasterPanel() = default;
  RasterPanel(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h * w), 255) {}

  float value(int r, int c) const {
    return static_cast<float>(pixels[static_cast<std::size_t>(r * width + c)]) / 255.0f;
  }
  int foreground() const;
  bool operator==(const RasterPanel&) const = default;
};

struct RasterPuzzle {
  int rows = 3;
  int cols = 3;
  std::vector<RasterPanel> grid;     // row-major, answer included
  std::vector<RasterPanel> choices;  // A + 1
  int target = 0;
  RuleMatrix rules;
  std::vector<RuleMatrix> perturbed_rules;
};

struct RenderOptions {
  int height = 32;
  int width = 32;
  double outline_px = 0.6;  // half-width of the black contour
};

// Objects are regular polygons (Type label: triangle, square, pentagon,
// hexagon) or circles centred in their slot, radius = size * slot half-width,
// filled with gray 1 - color/8 and outlined in black. No anti-aliasing.
// Throws LegendError for an unknown shape label or an index outside a
// legend.
RasterPanel render_panel(const PanelSymbolic& panel, const GenerationConfig& config,
                         const RenderOptions& options);

RasterPuzzle render_puzzle(const PuzzleSymbolic& puzzle, const ChoiceList& choices,
                           const GenerationConfig& config, const RenderOptions& options);

}  // namespace genvp
