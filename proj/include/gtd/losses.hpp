#pragma once

#include <vector>

#include "gtd/nn.hpp"
#include "gtd/scene.hpp"

namespace gtd::losses {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct LossWeights {
  double lambda_l1 = 1.0;
  double lambda_giou = 2.5;
  double lambda_heat = 2.0;
  double lambda_cls = 1.0;
  double lambda_vec = 1.0;
  double lambda_out = 1.0;
  double eos_weight = 0.1;  // down-weight for no-object class targets
};

double iou(const BBox& a, const BBox& b);
/// Generalized IoU in (-1, 1]; throws on degenerate zero-area boxes.
double giou(const BBox& a, const BBox& b);
/// Value plus d(giou)/d(pred) for pred/gt in center format.
double giou_with_grad(const double pred[4], const double gt[4], double grad[4]);

// Tape nodes (all 1x1 scalars).
Var l_box(Tape& t, Var pred_box_row, const BBox& gt, const LossWeights& w);
Var l_cls(Tape& t, Var logits_row, int label, double weight = 1.0);
Var l_vec(Tape& t, Var gaze_row, const GazeVector& gt);
Var l_out(Tape& t, Var p_scalar, bool gt_out);
Var l_heat(Tape& t, Var heatmap_row, const Mat& target_grid, double lambda_heat);

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction index, gt index)
  std::vector<int> unmatched;              // predictions assigned no-object
  double total_cost = 0.0;
};

/// Minimum-cost bipartite assignment over a P x G cost matrix (P >= G).
/// Ties between optimal assignments break toward lower prediction indices,
/// taken in ground-truth order.
Assignment hungarian_match(const Mat& cost);

/// Set-prediction matching cost: -lambda_cls * p(class) + lambda_l1 * L1
/// - lambda_giou * GIoU.
Mat matching_cost(const std::vector<ObjectPrediction>& preds,
                  const std::vector<std::pair<BBox, int>>& gt,
                  const LossWeights& w);

struct LossBreakdown {
  double box = 0, cls = 0, vec = 0, out = 0, heat = 0, total = 0;
};

struct LossTerms {
  std::vector<Var> box, cls, vec, out, heat;  // box/heat pre-weighted
};

/// Weighted sum per the training objective; box and heat terms already carry
/// their lambdas, the rest are weighted here.
std::pair<Var, LossBreakdown> total_loss(Tape& t, const LossTerms& terms,
                                         const LossWeights& w);

}  // namespace gtd::losses
