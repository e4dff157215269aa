#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace gtd {

using Mat = Eigen::MatrixXd;

/// Box in center format, normalized image coordinates.
struct BBox {
  double cx = 0.5, cy = 0.5, w = 0.1, h = 0.1;
};

struct ObjectPrediction {
  BBox bbox;
  int label = 0;                 // class index in [0, CLS); CLS-1 is the no-object class
  double confidence = 0.0;       // max non-no-object class probability
  std::vector<double> class_probs;
};

/// Gaze direction as (polar, azimuthal, magnitude). 2D mode fixes theta = pi/2.
struct GazeVector {
  double theta = M_PI / 2.0;  // [0, pi]
  double phi = 0.0;           // [-pi, pi]
  double rho = 1.0;           // > 0, grid units
};

struct GazeAnnotation {
  BBox head_bbox;
  std::vector<std::pair<double, double>> points;  // normalized (x, y), non-empty iff inside
  bool inside = true;
};

struct Scene {
  std::string image_id;
  int width = 0, height = 0;
  Mat pixels_r, pixels_g, pixels_b;  // H x W each, values in [0,1]
  std::optional<Mat> depth;          // H_d x W_d, normalized [0,1]
  std::vector<std::pair<BBox, int>> objects;
  std::vector<GazeAnnotation> gazes;
};

struct Heatmap {
  Mat grid;  // R x R, non-negative, peak <= 1
  int resolution() const { return static_cast<int>(grid.rows()); }
};

/// Reports every invariant violation; never throws on finite input.
std::vector<std::string> validate_scene(const Scene& scene);

/// Normalized point -> grid cell (row i, col j), clamped into [0, R-1].
std::pair<int, int> to_grid_coords(double px, double py, int R);

// JSON (de)serialization of the annotation schema. Pixel rasters and grids
// travel separately (see image_io / grid_io).
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

}  // namespace gtd
