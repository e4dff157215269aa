#include "gtd/cone.hpp"

namespace gtd {

Eigen::Vector3d gaze_direction(const GazeVector& g) {
  return {std::sin(g.theta) * std::cos(g.phi),
          std::sin(g.theta) * std::sin(g.phi), std::cos(g.theta)};
}

ConeField build_cone(int apex_x, int apex_y, int apex_z, const GazeVector& gaze,
                     int w, int h, int d, double alpha_deg, bool mode3d) {
  if (apex_x < 0 || apex_x >= w || apex_y < 0 || apex_y >= h)
    throw std::invalid_argument("build_cone: apex outside grid");
  if (mode3d && (apex_z < 0 || apex_z >= d))
    throw std::invalid_argument("build_cone: apex depth outside grid");

  ConeField f;
  f.w = w;
  f.h = h;
  f.d = mode3d ? d : 1;
  f.is3d = mode3d;
  f.apex_x = apex_x;
  f.apex_y = apex_y;
  f.apex_z = mode3d ? apex_z : 0;
  f.axis = gaze;
  f.alpha_deg = alpha_deg;
  f.slices.assign(f.d, Mat::Zero(h, w));

  const Eigen::Vector3d axis = gaze_direction(gaze);
  if (mode3d) {
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          Eigen::Vector3d v(x - apex_x, -(y - apex_y), z - apex_z);
          if (v.isZero()) continue;  // apex cell stays 0
          f.slices[z](y, x) = conditioned_cosine(v, axis, alpha_deg);
        }
  } else {
    const Eigen::Vector2d axis2(axis.x(), axis.y());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        Eigen::Vector2d v(x - apex_x, -(y - apex_y));
        if (v.isZero()) continue;
        f.slices[0](y, x) = conditioned_cosine(v, axis2, alpha_deg);
      }
  }
  return f;
}

ScoreMatrix object_score_matrix(const std::vector<ObjectPrediction>& predictions,
                                const std::vector<int>& head_indices,
                                const std::vector<ConeField>& cones,
                                const std::optional<Mat>& depth) {
  if (head_indices.size() != cones.size())
    throw std::invalid_argument("object_score_matrix: one cone per head index");
  const int n = static_cast<int>(predictions.size());
  ScoreMatrix sm;
  sm.sigma = Mat::Zero(n, n);
  sm.head_rows = head_indices;

  for (size_t hi = 0; hi < head_indices.size(); ++hi) {
    const int row = head_indices[hi];
    if (row < 0 || row >= n)
      throw std::invalid_argument("object_score_matrix: head index out of range");
    const ConeField& cone = cones[hi];
    for (int j = 0; j < n; ++j) {
      if (j == row) continue;  // a head is never its own target
      const BBox& b = predictions[j].bbox;
      auto [cy, cx] = to_grid_coords(b.cx, b.cy, cone.w);
      int cz = 0;
      if (cone.is3d) {
        double dv = 0.5;
        if (depth) {
          int ry = std::min<int>(static_cast<int>(depth->rows()) - 1,
                                 std::max(0, static_cast<int>(b.cy * depth->rows())));
          int rx = std::min<int>(static_cast<int>(depth->cols()) - 1,
                                 std::max(0, static_cast<int>(b.cx * depth->cols())));
          dv = (*depth)(ry, rx);
        }
        cz = std::min(cone.d - 1, std::max(0, static_cast<int>(dv * cone.d)));
      }
      sm.sigma(row, j) = cone.at(cx, cy, cz);
    }
  }
  return sm;
}

GazeConePredictor GazeConePredictor::create(nn::ParamStore& ps,
                                            const std::string& name,
                                            int feature_dim, int hidden,
                                            bool mode3d, std::mt19937& rng) {
  GazeConePredictor p;
  p.mlp = nn::MLP::create(ps, name, {feature_dim, hidden, 3}, rng);
  p.mode3d = mode3d;
  return p;
}

nn::Var GazeConePredictor::forward(nn::Tape& t, nn::ParamStore& ps,
                                   nn::Var features) const {
  nn::Var raw = mlp.forward(t, ps, features);
  const auto n = raw.value().rows();
  nn::Var theta = mode3d
                      ? t.scale(t.sigmoid(t.cols(raw, 0, 1)), M_PI)
                      : t.constant(Mat::Constant(n, 1, M_PI / 2.0));
  nn::Var phi = t.scale(t.tanh_(t.cols(raw, 1, 1)), M_PI);
  nn::Var rho = t.softplus(t.cols(raw, 2, 1));
  return t.hconcat({theta, phi, rho});
}

std::vector<GazeVector> GazeConePredictor::to_gaze_vectors(const Mat& mapped,
                                                           bool mode3d) {
  std::vector<GazeVector> out;
  out.reserve(mapped.rows());
  for (Eigen::Index i = 0; i < mapped.rows(); ++i) {
    GazeVector g;
    g.theta = mode3d ? mapped(i, 0) : M_PI / 2.0;
    g.phi = mapped(i, 1);
    g.rho = mapped(i, 2);
    out.push_back(g);
  }
  return out;
}

}  // namespace gtd
