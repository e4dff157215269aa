#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gtd/scene.hpp"

namespace gtd::data {

struct SynthConfig {
  uint64_t seed = 0;
  int scenes = 10;
  int image_size = 64;
  int grid_res = 32;
  int min_objects = 2, max_objects = 4;  // non-head objects per scene
  int min_heads = 1, max_heads = 2;
  int num_classes = 5;  // incl. head (0) and no-object (num_classes-1)
  double gaze_at_object_prob = 0.9;
  double out_of_frame_prob = 0.1;
  std::string depth_mode = "flat";  // flat | layered

  std::string to_json() const;
  static SynthConfig from_json(const std::string& text);
};

struct LoadResult {
  std::vector<Scene> scenes;
  std::vector<std::string> rejects;  // one line per rejected scene, naming the rule
};

/// Reads scenes/*.json (+ images/, depth/) from a dataset directory.
/// Invalid entries land in the rejects report, never silently dropped.
LoadResult load_dataset(const std::string& dir);

void save_dataset(const std::string& dir, const std::vector<Scene>& scenes,
                  const std::string& manifest_extra_json = "{}");

/// Gaussian heatmap target: per-cell max over points of exp(-d^2 / (2 sigma^2)),
/// with d measured in cells. A point at a cell center peaks at exactly 1.
Heatmap gaussian_target(const std::vector<std::pair<double, double>>& gt_points,
                        int R, double sigma_cells);

/// Ground-truth gaze vector: head center -> gaze point, with the depth delta
/// from the grid in 3D mode; magnitude in grid units of resolution R.
GazeVector derive_gt_gaze_vector(const BBox& head_bbox,
                                 std::pair<double, double> gt_point, int R,
                                 const std::optional<Mat>& depth = std::nullopt);

void generate_synthetic(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace gtd::data
