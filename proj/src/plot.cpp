#include "pgds/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pgds/common.hpp"
#include "pgds/png_io.hpp"

namespace pgds {

namespace {

struct Glyph {
  char c;
  unsigned char rows[7];  // 5-bit rows, bit 4 = leftmost column
};

constexpr Glyph kFont[] = {
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
    {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
    {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
    {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},
    {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
    {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
};

const Glyph* find_glyph(char c) {
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  for (const auto& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

void put_pixel(Tensor& canvas, int x, int y, const std::array<double, 3>& color) {
  const int h = static_cast<int>(canvas.dim(0));
  const int w = static_cast<int>(canvas.dim(1));
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  double* p = canvas.data() + (static_cast<std::size_t>(y) * w + x) * 3;
  p[0] = color[0];
  p[1] = color[1];
  p[2] = color[2];
}

void draw_segment(Tensor& canvas, double x0, double y0, double x1, double y1,
                  const std::array<double, 3>& color) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(dx),
                                                                    std::abs(dy)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put_pixel(canvas, static_cast<int>(std::lround(x0 + t * dx)),
              static_cast<int>(std::lround(y0 + t * dy)), color);
  }
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void draw_text(Tensor& canvas, int x, int y, const std::string& text,
               const std::array<double, 3>& color, int scale) {
  int cx = x;
  for (char c : text) {
    const Glyph* g = find_glyph(c);
    if (g) {
      for (int r = 0; r < 7; ++r) {
        for (int col = 0; col < 5; ++col) {
          if (!(g->rows[r] & (1 << (4 - col)))) continue;
          for (int sy = 0; sy < scale; ++sy) {
            for (int sx = 0; sx < scale; ++sx) {
              put_pixel(canvas, cx + col * scale + sx, y + r * scale + sy, color);
            }
          }
        }
      }
    }
    cx += 6 * scale;
  }
}

std::array<double, 3> series_color(int index) {
  static const std::array<double, 3> palette[] = {
      {0.13, 0.35, 0.80}, {0.85, 0.30, 0.20}, {0.16, 0.60, 0.28}, {0.60, 0.25, 0.70},
      {0.85, 0.60, 0.10}, {0.15, 0.65, 0.65}, {0.55, 0.35, 0.20}, {0.40, 0.40, 0.40},
  };
  return palette[index % (sizeof(palette) / sizeof(palette[0]))];
}

void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label, int width, int height) {
  PGDS_CHECK_ARG(!series.empty(), "a plot needs at least one series");
  PGDS_CHECK_ARG(width >= 160 && height >= 120, "plot canvas too small");
  for (const auto& s : series) {
    PGDS_CHECK_ARG(s.xs.size() == s.ys.size() && !s.xs.empty(), "series '", s.label,
                   "' needs matching nonempty x/y vectors");
  }

  double x_lo = series[0].xs[0], x_hi = x_lo, y_lo = series[0].ys[0], y_hi = y_lo;
  for (const auto& s : series) {
    for (double v : s.xs) {
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
    }
    for (double v : s.ys) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;
  const double y_pad = 0.05 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;

  const int ml = 52, mr = 12, mt = 24, mb = 34;
  const int pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + pw * (x - x_lo) / (x_hi - x_lo); };
  auto py = [&](double y) { return mt + ph * (1.0 - (y - y_lo) / (y_hi - y_lo)); };

  Tensor canvas({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3});
  canvas.fill(1.0);

  const std::array<double, 3> axis{0.15, 0.15, 0.15};
  const std::array<double, 3> grid{0.88, 0.88, 0.88};

  constexpr int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    const double fy = y_lo + (y_hi - y_lo) * t / kTicks;
    const double gy = py(fy);
    draw_segment(canvas, ml, gy, ml + pw, gy, grid);
    const std::string lab = tick_label(fy);
    draw_text(canvas, ml - 6 * static_cast<int>(lab.size()) - 4,
              static_cast<int>(gy) - 3, lab, axis);

    const double fx = x_lo + (x_hi - x_lo) * t / kTicks;
    const double gx = px(fx);
    draw_segment(canvas, gx, mt, gx, mt + ph, grid);
    const std::string xlab = tick_label(fx);
    draw_text(canvas, static_cast<int>(gx) - 3 * static_cast<int>(xlab.size()),
              mt + ph + 5, xlab, axis);
  }
  draw_segment(canvas, ml, mt, ml, mt + ph, axis);
  draw_segment(canvas, ml, mt + ph, ml + pw, mt + ph, axis);

  draw_text(canvas, ml, 8, title, axis);
  draw_text(canvas, ml + pw / 2 - 3 * static_cast<int>(x_label.size()), height - 12, x_label,
            axis);
  draw_text(canvas, 4, 8, y_label, axis);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    for (std::size_t i = 1; i < s.xs.size(); ++i) {
      draw_segment(canvas, px(s.xs[i - 1]), py(s.ys[i - 1]), px(s.xs[i]), py(s.ys[i]),
                   s.color);
    }
    if (s.xs.size() == 1) {
      put_pixel(canvas, static_cast<int>(std::lround(px(s.xs[0]))),
                static_cast<int>(std::lround(py(s.ys[0]))), s.color);
    }
    const int ly = mt + 4 + 10 * static_cast<int>(si);
    draw_segment(canvas, ml + pw - 70, ly + 3, ml + pw - 58, ly + 3, s.color);
    draw_text(canvas, ml + pw - 54, ly, s.label, axis);
  }

  write_png(path, canvas);
}

}  // namespace pgds
