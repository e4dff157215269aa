#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gtd/scene.hpp"

namespace gtd::metrics {

/// ROC AUC of a heatmap against ground-truth gaze cells: each grid cell is
/// one sample, positive iff some gt point lands in it; ties use the midrank
/// convention. Absent when every cell is positive or negative.
std::optional<double> auc(const Mat& pred,
                          const std::vector<std::pair<double, double>>& gt_points);

/// (L2 to the mean of gt points, minimum L2 over gt points).
std::pair<double, double> gaze_distance(
    std::pair<double, double> pred_point,
    const std::vector<std::pair<double, double>>& gt_points);

struct AngularError {
  double min_deg = 0, avg_deg = 0, max_deg = 0;
};

/// Angle between head->pred and head->gt directions, in degrees, aggregated
/// over gt points. gt points coincident with the head center are skipped;
/// absent if none remain.
std::optional<AngularError> angular_error(
    std::pair<double, double> pred_point,
    const std::vector<std::pair<double, double>>& gt_points,
    std::pair<double, double> head_center);

/// Average precision of the out-of-frame probability over (p_out, gt_out)
/// pairs, all-points PR integration. Absent without positives.
std::optional<double> io_ap(const std::vector<std::pair<double, bool>>& pairs);

struct GazedPrediction {
  std::optional<std::pair<BBox, int>> object;  // predicted gazed box + class
  double score = 0.0;                          // ranking score
};
struct GazedGroundTruth {
  std::optional<std::pair<BBox, int>> object;
};

/// AP at one IoU threshold; heads with gt but a null prediction count as
/// false negatives.
double gazed_object_ap(const std::vector<GazedPrediction>& preds,
                       const std::vector<GazedGroundTruth>& gt,
                       double iou_threshold);

struct GazedObjectMap {
  double ap50 = 0, ap75 = 0, ap_coco = 0;  // mean over 0.50:0.05:0.95
};
GazedObjectMap gazed_object_map(const std::vector<GazedPrediction>& preds,
                                const std::vector<GazedGroundTruth>& gt);

/// One evaluated head: its predicted heatmap and the gt annotation points.
struct HeadEval {
  Mat heatmap;
  std::vector<std::pair<double, double>> gt_points;
};

/// AUC recomputed after discarding gt points whose distance to their head's
/// mean annotation exceeds the retain_fraction quantile of the pooled
/// distance distribution. Heads left without points are dropped.
std::optional<double> variance_decile_auc(const std::vector<HeadEval>& heads,
                                          double retain_fraction);

struct EvalReport {
  std::optional<double> auc;
  double avg_dist = 0, min_dist = 0;
  std::optional<AngularError> angular;
  std::optional<double> io_ap;
  GazedObjectMap gazed_map;
  std::vector<double> decile_auc;  // 10 entries, fractions 0.1 .. 1.0
  int scenes = 0, heads = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

}  // namespace gtd::metrics
