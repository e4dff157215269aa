#include "gtd/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gtd::losses {

namespace {

void to_corners(const double b[4], double out[4]) {
  out[0] = b[0] - b[2] / 2.0;  // x1
  out[1] = b[1] - b[3] / 2.0;  // y1
  out[2] = b[0] + b[2] / 2.0;  // x2
  out[3] = b[1] + b[3] / 2.0;  // y2
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double pa[4] = {a.cx, a.cy, a.w, a.h}, pb[4] = {b.cx, b.cy, b.w, b.h};
  double ca[4], cb[4];
  to_corners(pa, ca);
  to_corners(pb, cb);
  double iw = std::min(ca[2], cb[2]) - std::max(ca[0], cb[0]);
  double ih = std::min(ca[3], cb[3]) - std::max(ca[1], cb[1]);
  double inter = std::max(0.0, iw) * std::max(0.0, ih);
  double u = a.w * a.h + b.w * b.h - inter;
  return inter / u;
}

double giou(const BBox& a, const BBox& b) {
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0)
    throw std::invalid_argument("giou: degenerate zero-area box");
  const double pa[4] = {a.cx, a.cy, a.w, a.h}, pb[4] = {b.cx, b.cy, b.w, b.h};
  double grad[4];
  return giou_with_grad(pa, pb, grad);
}

double giou_with_grad(const double pred[4], const double gt[4], double grad[4]) {
  if (pred[2] <= 0 || pred[3] <= 0 || gt[2] <= 0 || gt[3] <= 0)
    throw std::invalid_argument("giou: degenerate zero-area box");
  double p[4], g[4];
  to_corners(pred, p);
  to_corners(gt, g);

  // intersection
  const double iw = std::min(p[2], g[2]) - std::max(p[0], g[0]);
  const double ih = std::min(p[3], g[3]) - std::max(p[1], g[1]);
  const double inter = std::max(0.0, iw) * std::max(0.0, ih);
  const double ap = pred[2] * pred[3];
  const double ag = gt[2] * gt[3];
  const double uni = ap + ag - inter;

  // enclosing hull
  const double cw = std::max(p[2], g[2]) - std::min(p[0], g[0]);
  const double ch = std::max(p[3], g[3]) - std::min(p[1], g[1]);
  const double hull = cw * ch;

  const double giou_v = inter / uni - (hull - uni) / hull;

  // Partials w.r.t. the pred corners, then mapped to center format.
  // dI over corners
  double dI[4] = {0, 0, 0, 0};
  if (iw > 0 && ih > 0) {
    if (p[2] < g[2]) dI[2] += ih;   // d(iw)/dpx2 = 1
    if (p[0] > g[0]) dI[0] -= ih;   // d(iw)/dpx1 = -1
    if (p[3] < g[3]) dI[3] += iw;
    if (p[1] > g[1]) dI[1] -= iw;
  }
  // dAp over corners: ap = (px2-px1)(py2-py1)
  double dAp[4] = {-(p[3] - p[1]), -(p[2] - p[0]), p[3] - p[1], p[2] - p[0]};
  // dC over corners
  double dC[4] = {0, 0, 0, 0};
  if (p[0] < g[0]) dC[0] -= ch;
  if (p[2] > g[2]) dC[2] += ch;
  if (p[1] < g[1]) dC[1] -= cw;
  if (p[3] > g[3]) dC[3] += cw;

  double dcorner[4];
  for (int k = 0; k < 4; ++k) {
    const double dU = dAp[k] - dI[k];
    const double dIoU = (dI[k] * uni - inter * dU) / (uni * uni);
    // d((C-U)/C) = ((dC - dU) * C - (C-U) * dC) / C^2
    const double dPen = ((dC[k] - dU) * hull - (hull - uni) * dC[k]) / (hull * hull);
    dcorner[k] = dIoU - dPen;
  }
  // corner -> (cx, cy, w, h)
  grad[0] = dcorner[0] + dcorner[2];
  grad[1] = dcorner[1] + dcorner[3];
  grad[2] = 0.5 * (dcorner[2] - dcorner[0]);
  grad[3] = 0.5 * (dcorner[3] - dcorner[1]);
  return giou_v;
}

Var l_box(Tape& t, Var pred_box_row, const BBox& gt, const LossWeights& w) {
  const double g[4] = {gt.cx, gt.cy, gt.w, gt.h};
  Var l1 = t.custom_scalar(pred_box_row, [g](const Mat& x, Mat& grad) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
      double d = x(0, k) - g[k];
      s += std::abs(d);
      grad(0, k) = d >= 0 ? 1.0 : -1.0;
    }
    return s;
  });
  Var gi = t.custom_scalar(pred_box_row, [g](const Mat& x, Mat& grad) {
    const double p[4] = {x(0, 0), x(0, 1), x(0, 2), x(0, 3)};
    double gr[4];
    double v = giou_with_grad(p, g, gr);
    for (int k = 0; k < 4; ++k) grad(0, k) = gr[k];
    return v;
  });
  return t.affine_sum({l1, gi}, {w.lambda_l1, -w.lambda_giou});
}

Var l_cls(Tape& t, Var logits_row, int label, double weight) {
  const int cls = static_cast<int>(logits_row.value().cols());
  if (label < 0 || label >= cls)
    throw std::invalid_argument("l_cls: label out of range");
  return t.custom_scalar(logits_row, [label, weight](const Mat& z, Mat& grad) {
    double mx = z.maxCoeff();
    Eigen::RowVectorXd p = (z.row(0).array() - mx).exp();
    p /= p.sum();
    grad = weight * p;
    grad(0, label) -= weight;
    return -weight * std::log(std::max(p(label), 1e-300));
  });
}

Var l_vec(Tape& t, Var gaze_row, const GazeVector& gt) {
  const double g[3] = {gt.theta, gt.phi, gt.rho};
  return t.custom_scalar(gaze_row, [g](const Mat& x, Mat& grad) {
    double s2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      double d = x(0, k) - g[k];
      s2 += d * d;
    }
    double n = std::sqrt(s2);
    if (n > 1e-12)
      for (int k = 0; k < 3; ++k) grad(0, k) = (x(0, k) - g[k]) / n;
    return n;
  });
}

Var l_out(Tape& t, Var p_scalar, bool gt_out) {
  const double eps = 1e-7;
  return t.custom_scalar(p_scalar, [gt_out, eps](const Mat& x, Mat& grad) {
    double p = x(0, 0);
    bool clamped = p < eps || p > 1.0 - eps;
    double pc = std::min(1.0 - eps, std::max(eps, p));
    double out = gt_out ? 1.0 : 0.0;
    grad(0, 0) = clamped ? 0.0 : (-out / pc + (1.0 - out) / (1.0 - pc));
    return -(out * std::log(pc) + (1.0 - out) * std::log(1.0 - pc));
  });
}

Var l_heat(Tape& t, Var heatmap_row, const Mat& target_grid, double lambda_heat) {
  const int R = static_cast<int>(target_grid.rows());
  if (heatmap_row.value().cols() != static_cast<Eigen::Index>(R) * target_grid.cols())
    throw std::invalid_argument("l_heat: resolution mismatch");
  Mat target_row(1, R * target_grid.cols());
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < target_grid.cols(); ++j)
      target_row(0, i * target_grid.cols() + j) = target_grid(i, j);
  Var norm = t.custom_scalar(heatmap_row, [target_row](const Mat& x, Mat& grad) {
    Mat d = x - target_row;
    double n = d.norm();
    if (n > 1e-12) grad = d / n;
    return n;
  });
  return t.affine_sum({norm}, {lambda_heat});
}

namespace {

/// Classic potential-based assignment on a (G x P) matrix, G <= P.
/// Returns per-gt prediction indices and the optimal total cost.
double solve_assignment(const Mat& cost_gp, std::vector<int>* match) {
  const int n = static_cast<int>(cost_gp.rows());
  const int m = static_cast<int>(cost_gp.cols());
  const double INF = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, INF);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = INF;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost_gp(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  match->assign(n, -1);
  double total = 0.0;
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) {
      (*match)[p[j] - 1] = j - 1;
      total += cost_gp(p[j] - 1, j - 1);
    }
  }
  return total;
}

}  // namespace

Assignment hungarian_match(const Mat& cost) {
  const int P = static_cast<int>(cost.rows());
  const int G = static_cast<int>(cost.cols());
  if (P < G)
    throw std::invalid_argument("hungarian_match: fewer predictions than gt");
  if (!cost.allFinite())
    throw std::invalid_argument("hungarian_match: non-finite cost");

  Assignment a;
  if (G == 0) {
    for (int i = 0; i < P; ++i) a.unmatched.push_back(i);
    return a;
  }

  Mat cost_gp = cost.transpose();
  std::vector<int> match;
  const double optimum = solve_assignment(cost_gp, &match);
  const double tol = 1e-9 * (1.0 + std::abs(optimum));

  // Lexicographic refinement: fix each gt (in order) to the lowest
  // prediction index that still admits an optimal completion.
  std::vector<int> chosen(G, -1);
  std::vector<char> used(P, 0);
  double fixed_cost = 0.0;
  for (int g = 0; g < G; ++g) {
    for (int pr = 0; pr < P; ++pr) {
      if (used[pr]) continue;
      // remaining subproblem: gts g+1..G-1 over preds not used and != pr
      std::vector<int> rem_preds;
      for (int q = 0; q < P; ++q)
        if (!used[q] && q != pr) rem_preds.push_back(q);
      const int rg = G - g - 1;
      double sub = 0.0;
      if (rg > 0) {
        Mat sub_cost(rg, static_cast<int>(rem_preds.size()));
        for (int i = 0; i < rg; ++i)
          for (size_t j = 0; j < rem_preds.size(); ++j)
            sub_cost(i, j) = cost(rem_preds[j], g + 1 + i);
        std::vector<int> dummy;
        sub = solve_assignment(sub_cost, &dummy);
      }
      if (fixed_cost + cost(pr, g) + sub <= optimum + tol) {
        chosen[g] = pr;
        used[pr] = 1;
        fixed_cost += cost(pr, g);
        break;
      }
    }
    if (chosen[g] < 0)
      throw std::logic_error("hungarian_match: refinement failed");
  }

  for (int g = 0; g < G; ++g) a.pairs.emplace_back(chosen[g], g);
  for (int pr = 0; pr < P; ++pr)
    if (!used[pr]) a.unmatched.push_back(pr);
  a.total_cost = fixed_cost;
  return a;
}

Mat matching_cost(const std::vector<ObjectPrediction>& preds,
                  const std::vector<std::pair<BBox, int>>& gt,
                  const LossWeights& w) {
  Mat cost(preds.size(), gt.size());
  for (size_t i = 0; i < preds.size(); ++i)
    for (size_t j = 0; j < gt.size(); ++j) {
      const auto& p = preds[i];
      const auto& [gb, gl] = gt[j];
      double prob = gl < static_cast<int>(p.class_probs.size())
                        ? p.class_probs[gl]
                        : 0.0;
      double l1 = std::abs(p.bbox.cx - gb.cx) + std::abs(p.bbox.cy - gb.cy) +
                  std::abs(p.bbox.w - gb.w) + std::abs(p.bbox.h - gb.h);
      cost(i, j) = -w.lambda_cls * prob + w.lambda_l1 * l1 -
                   w.lambda_giou * giou(p.bbox, gb);
    }
  return cost;
}

std::pair<Var, LossBreakdown> total_loss(Tape& t, const LossTerms& terms,
                                         const LossWeights& w) {
  std::vector<Var> vars;
  std::vector<double> ws;
  LossBreakdown b;
  auto push = [&](const std::vector<Var>& vs, double weight, double* slot) {
    for (auto v : vs) {
      vars.push_back(v);
      ws.push_back(weight);
      *slot += weight * v.value()(0, 0);
    }
  };
  push(terms.box, 1.0, &b.box);  // lambdas already inside l_box
  push(terms.cls, w.lambda_cls, &b.cls);
  push(terms.vec, w.lambda_vec, &b.vec);
  push(terms.out, w.lambda_out, &b.out);
  push(terms.heat, 1.0, &b.heat);  // lambda_heat already inside l_heat
  b.total = b.box + b.cls + b.vec + b.out + b.heat;
  if (vars.empty()) {
    Var zero = t.constant(Mat::Zero(1, 1));
    return {zero, b};
  }
  return {t.affine_sum(vars, ws), b};
}

}  // namespace gtd::losses
