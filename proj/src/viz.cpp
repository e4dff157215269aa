#include "gtd/viz.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtd::viz {

Mat bilinear_upscale(const Mat& grid, int out_h, int out_w) {
  const int R = static_cast<int>(grid.rows());
  const int C = static_cast<int>(grid.cols());
  if (R < 1 || C < 1 || out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_upscale: empty grid");
  Mat out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const double v = (y + 0.5) * R / out_h - 0.5;
    const double vc = std::min<double>(R - 1.0, std::max(0.0, v));
    const int i0 = static_cast<int>(std::floor(vc));
    const int i1 = std::min(R - 1, i0 + 1);
    const double fy = vc - i0;
    for (int x = 0; x < out_w; ++x) {
      const double u = (x + 0.5) * C / out_w - 0.5;
      const double uc = std::min<double>(C - 1.0, std::max(0.0, u));
      const int j0 = static_cast<int>(std::floor(uc));
      const int j1 = std::min(C - 1, j0 + 1);
      const double fx = uc - j0;
      out(y, x) = (1 - fy) * ((1 - fx) * grid(i0, j0) + fx * grid(i0, j1)) +
                  fy * ((1 - fx) * grid(i1, j0) + fx * grid(i1, j1));
    }
  }
  return out;
}

namespace {

struct Color {
  double r, g, b;
};

// fixed palette: 0 = head box, 1 = gazed object box, others cycle
Color palette(int idx) {
  static const Color table[] = {
      {0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.4, 1.0},
      {1.0, 0.8, 0.0}, {1.0, 0.0, 1.0},
  };
  return table[idx % 5];
}

// blue -> cyan -> yellow -> red ramp for heatmap values in [0,1]
Color heat_color(double v) {
  v = std::min(1.0, std::max(0.0, v));
  if (v < 1.0 / 3)
    return {0.0, 3 * v, 1.0};
  if (v < 2.0 / 3)
    return {3 * v - 1.0, 1.0, 2.0 - 3 * v};
  return {1.0, 3.0 - 3 * v, 0.0};
}

void set_px(ImageRGB& img, int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  img.r(y, x) = c.r;
  img.g(y, x) = c.g;
  img.b(y, x) = c.b;
}

void draw_box(ImageRGB& img, const BBox& b, Color c) {
  const int W = img.width(), H = img.height();
  int x0 = std::max(0, static_cast<int>((b.cx - b.w / 2) * W));
  int x1 = std::min(W - 1, static_cast<int>((b.cx + b.w / 2) * W));
  int y0 = std::max(0, static_cast<int>((b.cy - b.h / 2) * H));
  int y1 = std::min(H - 1, static_cast<int>((b.cy + b.h / 2) * H));
  for (int x = x0; x <= x1; ++x) {
    set_px(img, x, y0, c);
    set_px(img, x, y1, c);
  }
  for (int y = y0; y <= y1; ++y) {
    set_px(img, x0, y, c);
    set_px(img, x1, y, c);
  }
}

}  // namespace

ImageRGB render_overlay(const ImageRGB& base, const OverlaySpec& spec) {
  ImageRGB out = base;
  const int H = base.height(), W = base.width();
  if (spec.heatmap.size() > 0) {
    Mat hm = bilinear_upscale(spec.heatmap, H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = std::min(1.0, std::max(0.0, hm(y, x)));
        const double w = spec.alpha * v;
        const Color c = heat_color(v);
        out.r(y, x) = (1 - w) * out.r(y, x) + w * c.r;
        out.g(y, x) = (1 - w) * out.g(y, x) + w * c.g;
        out.b(y, x) = (1 - w) * out.b(y, x) + w * c.b;
      }
  }
  for (const auto& [box, idx] : spec.boxes) draw_box(out, box, palette(idx));
  if (spec.marker) {
    const int mx = std::min(W - 1, std::max(0, static_cast<int>(spec.marker->first * W)));
    const int my = std::min(H - 1, std::max(0, static_cast<int>(spec.marker->second * H)));
    const Color white{1.0, 1.0, 1.0};
    for (int d = -3; d <= 3; ++d) {
      set_px(out, mx + d, my, white);
      set_px(out, mx, my + d, white);
    }
  }
  return out;
}

}  // namespace gtd::viz
