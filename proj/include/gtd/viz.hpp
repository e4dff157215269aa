#pragma once

#include <optional>
#include <vector>

#include "gtd/image_io.hpp"
#include "gtd/scene.hpp"

namespace gtd::viz {

/// Bilinear upscale of an R x C grid to H x W, sampling at cell centers.
Mat bilinear_upscale(const Mat& grid, int out_h, int out_w);

struct OverlaySpec {
  Mat heatmap;  // any resolution; upscaled to the image
  std::vector<std::pair<BBox, int>> boxes;  // box + palette color index
  std::optional<std::pair<double, double>> marker;  // normalized (x, y)
  double alpha = 0.4;  // fixed blend weight at heatmap value 1
};

/// Deterministic overlay: colormapped heatmap blended over the image
/// (weight alpha * value, so a zero heatmap leaves pixels untouched),
/// 1-px box outlines, cross marker at the gaze point.
ImageRGB render_overlay(const ImageRGB& base, const OverlaySpec& spec);

}  // namespace gtd::viz
