#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gtd/nn.hpp"
#include "gtd/scene.hpp"

namespace gtd {

/// Cosine similarity between two vectors, conditioned on the cone angle:
/// the value is cos(a, b) when the absolute angle is at most alpha/2
/// (boundary inclusive) and exactly 0 otherwise. Magnitude-invariant.
template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar conditioned_cosine(const Eigen::MatrixBase<DerivedA>& a,
                          const Eigen::MatrixBase<DerivedB>& b,
                          Scalar alpha_deg) {
  const Scalar na = a.norm(), nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0))
    throw std::invalid_argument("conditioned_cosine: zero-length vector");
  if (!(alpha_deg > Scalar(0) && alpha_deg <= Scalar(180)))
    throw std::invalid_argument("conditioned_cosine: alpha out of (0,180]");
  Scalar c = a.dot(b) / (na * nb);
  c = std::min(Scalar(1), std::max(Scalar(-1), c));
  const Scalar threshold = std::cos(alpha_deg * Scalar(M_PI) / Scalar(360));
  return c >= threshold - Scalar(1e-12) ? c : Scalar(0);
}

inline double conditioned_cosine(const Eigen::Vector2d& a,
                                 const Eigen::Vector2d& b, double alpha_deg) {
  return conditioned_cosine<double>(a, b, alpha_deg);
}
inline double conditioned_cosine(const Eigen::Vector3d& a,
                                 const Eigen::Vector3d& b, double alpha_deg) {
  return conditioned_cosine<double>(a, b, alpha_deg);
}

/// Unit direction of a gaze vector in the internal frame:
/// x = +column, y = -row (image y grows downward), z = depth.
Eigen::Vector3d gaze_direction(const GazeVector& g);

/// Discretized FoV cone. 2D fields have depth 1; cell values live in
/// {0} ∪ [cos(alpha/2), 1], apex cell is 0.
struct ConeField {
  int w = 0, h = 0, d = 1;
  bool is3d = false;
  int apex_x = 0, apex_y = 0, apex_z = 0;
  GazeVector axis;
  double alpha_deg = 120.0;
  std::vector<Mat> slices;  // d matrices, each h x w (row = y, col = x)

  double at(int x, int y, int z = 0) const { return slices[z](y, x); }
  const Mat& plane(int z = 0) const { return slices[z]; }
};

ConeField build_cone(int apex_x, int apex_y, int apex_z, const GazeVector& gaze,
                     int w, int h, int d, double alpha_deg, bool mode3d);

/// N x N additive attention bias: head rows hold cone saliency sampled at
/// object centers, all other rows are zero.
struct ScoreMatrix {
  Mat sigma;
  std::vector<int> head_rows;
  bool row_is_zero(int i) const { return sigma.row(i).isZero(0.0); }
};

ScoreMatrix object_score_matrix(const std::vector<ObjectPrediction>& predictions,
                                const std::vector<int>& head_indices,
                                const std::vector<ConeField>& cones,
                                const std::optional<Mat>& depth = std::nullopt);

/// Gaze-vector regression head: bounded bijections keep theta in [0,pi],
/// phi in [-pi,pi], rho > 0. 2D mode pins theta at pi/2.
struct GazeConePredictor {
  nn::MLP mlp;
  bool mode3d = false;
  static GazeConePredictor create(nn::ParamStore& ps, const std::string& name,
                                  int feature_dim, int hidden, bool mode3d,
                                  std::mt19937& rng);
  /// features: n x feature_dim (one row per head). Returns raw outputs as a
  /// Var (n x 3, already mapped into range) plus detached GazeVectors.
  nn::Var forward(nn::Tape& t, nn::ParamStore& ps, nn::Var features) const;
  static std::vector<GazeVector> to_gaze_vectors(const Mat& mapped, bool mode3d);
};

}  // namespace gtd
