#pragma once

#include <array>
#include <string>
#include <vector>

#include "pgds/tensor.hpp"

namespace pgds {

struct PlotSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  std::array<double, 3> color{0.2, 0.4, 0.8};
};

// Deterministic PNG line chart with axes, ticks, and a legend, drawn with a
// built-in 5x7 bitmap font. No external plotting dependency, so reports are
// byte-stable across machines.
void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label, int width = 640, int height = 400);

// Text rendering onto an (H, W, 3) canvas; exposed for overlay labels.
void draw_text(Tensor& canvas, int x, int y, const std::string& text,
               const std::array<double, 3>& color, int scale = 1);

std::array<double, 3> series_color(int index);

}  // namespace pgds
