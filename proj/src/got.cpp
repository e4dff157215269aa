#include "gtd/got.hpp"

#include <stdexcept>

namespace gtd {

using nn::Tape;
using nn::Var;

Mat biased_attention(const Mat& Q, const Mat& K, const Mat& V, const Mat* sigma,
                     const std::vector<char>* key_mask,
                     bool sigma_inside_scale) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  Mat logits = Q * K.transpose();
  if (sigma) {
    if (sigma->rows() != logits.rows() || sigma->cols() != logits.cols())
      throw std::invalid_argument("biased_attention: sigma shape mismatch");
    if (sigma_inside_scale)
      logits = (logits + *sigma) * inv_sqrt;
    else
      logits = logits * inv_sqrt + *sigma;
  } else {
    logits *= inv_sqrt;
  }
  Mat out(Q.rows(), V.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
      if (!key_mask || !(*key_mask)[c]) mx = std::max(mx, logits(r, c));
    if (!std::isfinite(mx))
      throw std::runtime_error("biased_attention: all keys masked for a query");
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(logits.cols());
    double den = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (key_mask && (*key_mask)[c]) continue;
      w(c) = std::exp(logits(r, c) - mx);
      den += w(c);
    }
    out.row(r) = (w / den) * V;
  }
  return out;
}

GazeObjectTransformer::GazeObjectTransformer(nn::ParamStore& ps,
                                             const GotConfig& cfg,
                                             int num_queries, std::mt19937& rng)
    : cfg_(cfg) {
  e_g_ = "got.e_g";
  nn::xavier_init(ps.create(e_g_, num_queries, cfg.dim), rng);
  for (int i = 0; i < cfg.layers; ++i) {
    Layer l;
    const std::string name = "got.layer" + std::to_string(i);
    l.self_attn = nn::MultiHeadAttention::create(ps, name + ".self", cfg.dim,
                                                 cfg.heads, rng);
    l.cross_attn = nn::MultiHeadAttention::create(ps, name + ".cross", cfg.dim,
                                                  cfg.heads, rng);
    l.ln1 = nn::LayerNorm::create(ps, name + ".ln1", cfg.dim);
    l.ln2 = nn::LayerNorm::create(ps, name + ".ln2", cfg.dim);
    l.ln3 = nn::LayerNorm::create(ps, name + ".ln3", cfg.dim);
    l.ff1 = nn::Linear::create(ps, name + ".ff1", cfg.dim, cfg.ff_dim, rng);
    l.ff2 = nn::Linear::create(ps, name + ".ff2", cfg.ff_dim, cfg.dim, rng);
    layers_.push_back(std::move(l));
  }
  const int r2 = cfg.heatmap_res * cfg.heatmap_res;
  heatmap_mlp_ =
      nn::MLP::create(ps, "got.heatmap", {cfg.dim, cfg.heatmap_hidden, r2}, rng);
  heatmap_noobj_mlp_ = nn::MLP::create(ps, "got.heatmap_noobj",
                                       {cfg.dim, cfg.heatmap_hidden, r2}, rng);
  watch_outside_mlp_ =
      nn::MLP::create(ps, "got.watch_outside", {cfg.dim, cfg.heatmap_hidden, 1}, rng);
  // zero-init output layers: fresh models emit exactly flat heatmaps, so an
  // untrained baseline scores chance-level AUC instead of structured noise
  ps.param(heatmap_mlp_.layers.back().w).setZero();
  ps.param(heatmap_noobj_mlp_.layers.back().w).setZero();
}

void GazeObjectTransformer::select_indices(
    const std::vector<ObjectPrediction>& preds, double tau, int no_object_class,
    std::vector<int>* head_idx, std::vector<int>* object_idx) {
  head_idx->clear();
  object_idx->clear();
  for (size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (p.label == 0 && p.confidence > tau)  // class 0 is the head class
      head_idx->push_back(static_cast<int>(i));
    if (p.label != no_object_class && p.confidence > tau)
      object_idx->push_back(static_cast<int>(i));
  }
}

std::vector<GazeOutput> GazeObjectTransformer::forward(
    Tape& t, nn::ParamStore& ps, Var f_d, const ScoreMatrix& sigma,
    const std::vector<int>& head_idx, const std::vector<int>& object_idx,
    std::vector<GazeOutputVars>* vars) const {
  std::vector<GazeOutput> outputs;
  if (vars) vars->clear();
  if (head_idx.empty()) return outputs;

  const int nh = static_cast<int>(head_idx.size());
  const int R = cfg_.heatmap_res;

  // Sigma sub-blocks re-indexed to the surviving query order.
  Mat sigma_self = Mat::Zero(nh, nh);
  Mat sigma_cross = Mat::Zero(nh, std::max<size_t>(1, object_idx.size()));
  if (cfg_.sigma_enabled) {
    for (int a = 0; a < nh; ++a) {
      for (int b = 0; b < nh; ++b)
        sigma_self(a, b) = sigma.sigma(head_idx[a], head_idx[b]);
      for (size_t b = 0; b < object_idx.size(); ++b)
        sigma_cross(a, b) = sigma.sigma(head_idx[a], object_idx[b]);
    }
  }
  // Skip decision uses the head's post-filter Sigma row regardless of the
  // ablation switch on the attention bias.
  std::vector<bool> skip(nh, object_idx.empty());
  if (!object_idx.empty()) {
    for (int a = 0; a < nh; ++a) {
      bool all_zero = true;
      for (size_t b = 0; b < object_idx.size(); ++b)
        if (sigma.sigma(head_idx[a], object_idx[b]) != 0.0) all_zero = false;
      skip[a] = all_zero;
    }
  }

  Var e_g = t.leaf(ps.param(e_g_), &ps.grad(e_g_));
  Var head_feats = t.rows(f_d, head_idx);
  Var stream = t.add(t.rows(e_g, head_idx), head_feats);
  Var keys;
  if (!object_idx.empty()) keys = t.rows(f_d, object_idx);

  for (const auto& l : layers_) {
    Var sa = l.self_attn.forward(t, ps, stream, stream, stream, &sigma_self,
                                 nullptr, cfg_.sigma_inside_scale);
    stream = l.ln1.forward(t, ps, t.add(stream, sa));
    if (!object_idx.empty()) {
      Var ca = l.cross_attn.forward(t, ps, stream, keys, keys, &sigma_cross,
                                    nullptr, cfg_.sigma_inside_scale);
      stream = l.ln2.forward(t, ps, t.add(stream, ca));
    }
    Var ff = l.ff2.forward(t, ps, t.relu(l.ff1.forward(t, ps, stream)));
    stream = l.ln3.forward(t, ps, t.add(stream, ff));
  }

  Var p_out_all = t.sigmoid(watch_outside_mlp_.forward(t, ps, head_feats));

  for (int a = 0; a < nh; ++a) {
    std::vector<int> one{a};
    Var hm_var;
    if (skip[a]) {
      hm_var = t.sigmoid(
          heatmap_noobj_mlp_.forward(t, ps, t.rows(head_feats, one)));
    } else {
      hm_var = t.sigmoid(heatmap_mlp_.forward(t, ps, t.rows(stream, one)));
    }
    Var pov = t.rows(p_out_all, one);

    GazeOutput go;
    go.query_index = head_idx[a];
    go.used_skip = skip[a];
    go.p_out = pov.value()(0, 0);
    go.heatmap.grid = Mat(R, R);
    const Mat& row = hm_var.value();
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j) go.heatmap.grid(i, j) = row(0, i * R + j);
    Eigen::Index mi, mj;
    go.heatmap.grid.maxCoeff(&mi, &mj);
    go.gaze_point = {(mj + 0.5) / R, (mi + 0.5) / R};
    outputs.push_back(std::move(go));
    if (vars) vars->push_back({hm_var, pov});
  }
  return outputs;
}

}  // namespace gtd
