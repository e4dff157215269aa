#include "gtd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "gtd/losses.hpp"

namespace gtd::metrics {

std::optional<double> auc(const Mat& pred,
                          const std::vector<std::pair<double, double>>& gt_points) {
  if (gt_points.empty()) throw std::invalid_argument("auc: no gt points");
  if (!pred.allFinite()) throw std::invalid_argument("auc: non-finite heatmap");
  const int R = static_cast<int>(pred.rows());
  const int C = static_cast<int>(pred.cols());
  std::set<std::pair<int, int>> pos_cells;
  for (auto [x, y] : gt_points) {
    auto [i, j] = to_grid_coords(x, y, R);
    pos_cells.insert({i, j});
  }
  const long total = static_cast<long>(R) * C;
  const long npos = static_cast<long>(pos_cells.size());
  const long nneg = total - npos;
  if (nneg == 0) return std::nullopt;

  // midrank AUC = (sum of positive ranks - P(P+1)/2) / (P*N)
  struct Cell {
    double v;
    bool pos;
  };
  std::vector<Cell> cells;
  cells.reserve(total);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j)
      cells.push_back({pred(i, j), pos_cells.count({i, j}) > 0});
  std::sort(cells.begin(), cells.end(),
            [](const Cell& a, const Cell& b) { return a.v < b.v; });
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < cells.size()) {
    size_t j = i;
    while (j < cells.size() && cells[j].v == cells[i].v) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k)
      if (cells[k].pos) pos_rank_sum += midrank;
    i = j;
  }
  const double u = pos_rank_sum - static_cast<double>(npos) * (npos + 1) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

std::pair<double, double> gaze_distance(
    std::pair<double, double> pred_point,
    const std::vector<std::pair<double, double>>& gt_points) {
  if (gt_points.empty()) throw std::invalid_argument("gaze_distance: empty gt");
  double mx = 0, my = 0, mn = std::numeric_limits<double>::infinity();
  for (auto [x, y] : gt_points) {
    mx += x;
    my += y;
    mn = std::min(mn, std::hypot(pred_point.first - x, pred_point.second - y));
  }
  mx /= gt_points.size();
  my /= gt_points.size();
  double avg = std::hypot(pred_point.first - mx, pred_point.second - my);
  return {avg, mn};
}

std::optional<AngularError> angular_error(
    std::pair<double, double> pred_point,
    const std::vector<std::pair<double, double>>& gt_points,
    std::pair<double, double> head_center) {
  const double px = pred_point.first - head_center.first;
  const double py = pred_point.second - head_center.second;
  const double pn = std::hypot(px, py);
  if (pn == 0.0)
    throw std::invalid_argument("angular_error: pred equals head center");
  AngularError ae;
  ae.min_deg = std::numeric_limits<double>::infinity();
  ae.max_deg = -std::numeric_limits<double>::infinity();
  double sum = 0;
  int n = 0;
  for (auto [x, y] : gt_points) {
    const double gx = x - head_center.first, gy = y - head_center.second;
    const double gn = std::hypot(gx, gy);
    if (gn == 0.0) continue;  // coincident with head center
    double c = (px * gx + py * gy) / (pn * gn);
    c = std::min(1.0, std::max(-1.0, c));
    const double deg = std::acos(c) * 180.0 / M_PI;
    ae.min_deg = std::min(ae.min_deg, deg);
    ae.max_deg = std::max(ae.max_deg, deg);
    sum += deg;
    ++n;
  }
  if (n == 0) return std::nullopt;
  ae.avg_deg = sum / n;
  return ae;
}

namespace {

/// All-points AP over a ranked list given per-item correctness and the
/// number of actual positives. Equal scores are grouped.
double average_precision(std::vector<std::pair<double, bool>> scored,
                         long num_positives) {
  if (num_positives <= 0) return 0.0;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double ap = 0.0;
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < scored.size()) {
    size_t j = i;
    long gtp = 0, gfp = 0;
    while (j < scored.size() && scored[j].first == scored[i].first) {
      if (scored[j].second) ++gtp;
      else ++gfp;
      ++j;
    }
    const double r0 = static_cast<double>(tp) / num_positives;
    tp += gtp;
    fp += gfp;
    const double r1 = static_cast<double>(tp) / num_positives;
    const double prec = static_cast<double>(tp) / (tp + fp);
    ap += (r1 - r0) * prec;
    i = j;
  }
  return ap;
}

}  // namespace

std::optional<double> io_ap(const std::vector<std::pair<double, bool>>& pairs) {
  long npos = 0;
  for (const auto& [s, y] : pairs)
    if (y) ++npos;
  if (npos == 0) return std::nullopt;
  std::vector<std::pair<double, bool>> scored(pairs.begin(), pairs.end());
  return average_precision(std::move(scored), npos);
}

double gazed_object_ap(const std::vector<GazedPrediction>& preds,
                       const std::vector<GazedGroundTruth>& gt,
                       double iou_threshold) {
  if (preds.size() != gt.size())
    throw std::invalid_argument("gazed_object_ap: size mismatch");
  long npos = 0;
  std::vector<std::pair<double, bool>> scored;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (gt[i].object) ++npos;
    if (!preds[i].object) continue;  // null prediction: false negative if gt exists
    bool correct = false;
    if (gt[i].object) {
      const auto& [pb, pl] = *preds[i].object;
      const auto& [gb, gl] = *gt[i].object;
      correct = pl == gl && losses::iou(pb, gb) > iou_threshold;
    }
    scored.emplace_back(preds[i].score, correct);
  }
  if (npos == 0) return 0.0;
  return average_precision(std::move(scored), npos);
}

GazedObjectMap gazed_object_map(const std::vector<GazedPrediction>& preds,
                                const std::vector<GazedGroundTruth>& gt) {
  GazedObjectMap m;
  m.ap50 = gazed_object_ap(preds, gt, 0.5);
  m.ap75 = gazed_object_ap(preds, gt, 0.75);
  double sum = 0;
  for (int k = 0; k < 10; ++k) sum += gazed_object_ap(preds, gt, 0.5 + 0.05 * k);
  m.ap_coco = sum / 10.0;
  return m;
}

std::optional<double> variance_decile_auc(const std::vector<HeadEval>& heads,
                                          double retain_fraction) {
  const double grid[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  bool ok = false;
  for (double f : grid)
    if (std::abs(retain_fraction - f) < 1e-9) ok = true;
  if (!ok)
    throw std::invalid_argument("variance_decile_auc: fraction outside the decile grid");

  // pooled distances to each head's mean annotation point
  std::vector<double> pooled;
  std::vector<std::vector<double>> dists(heads.size());
  for (size_t h = 0; h < heads.size(); ++h) {
    const auto& pts = heads[h].gt_points;
    if (pts.empty()) continue;
    double mx = 0, my = 0;
    for (auto [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= pts.size();
    my /= pts.size();
    for (auto [x, y] : pts) {
      double d = std::hypot(x - mx, y - my);
      dists[h].push_back(d);
      pooled.push_back(d);
    }
  }
  if (pooled.empty()) return std::nullopt;
  std::sort(pooled.begin(), pooled.end());
  const size_t keep = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(retain_fraction * pooled.size() - 1e-9)));
  const double threshold = pooled[keep - 1];

  double sum = 0;
  int n = 0;
  for (size_t h = 0; h < heads.size(); ++h) {
    std::vector<std::pair<double, double>> survivors;
    for (size_t k = 0; k < dists[h].size(); ++k)
      if (dists[h][k] <= threshold) survivors.push_back(heads[h].gt_points[k]);
    if (survivors.empty()) continue;  // dropped from this decile
    auto a = auc(heads[h].heatmap, survivors);
    if (a) {
      sum += *a;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

using json = nlohmann::json;

std::string EvalReport::to_json() const {
  json j;
  if (auc) j["auc"] = *auc;
  j["avg_dist"] = avg_dist;
  j["min_dist"] = min_dist;
  if (angular) {
    j["angular_err"] = {{"min", angular->min_deg},
                        {"avg", angular->avg_deg},
                        {"max", angular->max_deg}};
  }
  if (io_ap) j["io_ap"] = *io_ap;
  j["gazed_map"] = {{"ap50", gazed_map.ap50},
                    {"ap75", gazed_map.ap75},
                    {"ap", gazed_map.ap_coco}};
  j["decile_auc"] = decile_auc;
  j["scenes"] = scenes;
  j["heads"] = heads;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  if (j.contains("auc")) r.auc = j["auc"].get<double>();
  r.avg_dist = j.at("avg_dist").get<double>();
  r.min_dist = j.at("min_dist").get<double>();
  if (j.contains("angular_err")) {
    AngularError a;
    a.min_deg = j["angular_err"]["min"].get<double>();
    a.avg_deg = j["angular_err"]["avg"].get<double>();
    a.max_deg = j["angular_err"]["max"].get<double>();
    r.angular = a;
  }
  if (j.contains("io_ap")) r.io_ap = j["io_ap"].get<double>();
  r.gazed_map.ap50 = j.at("gazed_map").at("ap50").get<double>();
  r.gazed_map.ap75 = j.at("gazed_map").at("ap75").get<double>();
  r.gazed_map.ap_coco = j.at("gazed_map").at("ap").get<double>();
  r.decile_auc = j.at("decile_auc").get<std::vector<double>>();
  r.scenes = j.at("scenes").get<int>();
  r.heads = j.at("heads").get<int>();
  return r;
}

}  // namespace gtd::metrics
