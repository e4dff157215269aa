#pragma once

#include <random>

#include "gtd/cone.hpp"
#include "gtd/nn.hpp"
#include "gtd/scene.hpp"

namespace gtd {

struct GotConfig {
  int layers = 2;
  int heads = 4;
  int dim = 32;              // must equal the detector's C_b'
  double tau = 0.5;          // confidence threshold for filtering
  int heatmap_res = 32;
  int heatmap_hidden = 64;
  int ff_dim = 64;
  bool sigma_inside_scale = true;  // additive bias inside the 1/sqrt(d_k) scaling
  bool sigma_enabled = true;       // ablation switch for the cone bias
};

struct GazeOutput {
  int query_index = -1;
  Heatmap heatmap;
  double p_out = 0.5;
  bool used_skip = false;
  std::pair<double, double> gaze_point{0.5, 0.5};  // normalized (x, y)
};

/// Single-head biased masked attention exactly as the model computes it:
/// softmax((QK^T + Sigma) / sqrt(d_k)) V, masked keys get zero weight.
/// A query row whose keys are all masked is an error here; callers route
/// such heads through the no-cone-object skip first.
Mat biased_attention(const Mat& Q, const Mat& K, const Mat& V,
                     const Mat* sigma = nullptr,
                     const std::vector<char>* key_mask = nullptr,
                     bool sigma_inside_scale = true);

/// Vars the trainer needs alongside each detached GazeOutput.
struct GazeOutputVars {
  nn::Var heatmap;  // 1 x R^2, post-sigmoid, gate already applied
  nn::Var p_out;    // 1 x 1
};

class GazeObjectTransformer {
 public:
  GazeObjectTransformer(nn::ParamStore& ps, const GotConfig& cfg,
                        int num_queries, std::mt19937& rng);

  /// f_d: N x dim decoder features. head_idx: queries treated as heads
  /// (Q side); object_idx: surviving keys after the tau / no-object filter.
  /// sigma is the full N x N score matrix from the cone module.
  std::vector<GazeOutput> forward(nn::Tape& t, nn::ParamStore& ps, nn::Var f_d,
                                  const ScoreMatrix& sigma,
                                  const std::vector<int>& head_idx,
                                  const std::vector<int>& object_idx,
                                  std::vector<GazeOutputVars>* vars = nullptr) const;

  /// Filtering rules from the config: heads = classified head with
  /// confidence > tau; keys = confidence > tau and not no-object.
  static void select_indices(const std::vector<ObjectPrediction>& preds,
                             double tau, int no_object_class,
                             std::vector<int>* head_idx,
                             std::vector<int>* object_idx);

  const GotConfig& config() const { return cfg_; }

 private:
  GotConfig cfg_;
  std::string e_g_;  // N x dim learnable embeddings
  struct Layer {
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::LayerNorm ln1, ln2, ln3;
    nn::Linear ff1, ff2;
  };
  std::vector<Layer> layers_;
  nn::MLP heatmap_mlp_;         // cross-attention features -> R^2 logits
  nn::MLP heatmap_noobj_mlp_;   // decoder head features -> R^2 logits
  nn::MLP watch_outside_mlp_;   // decoder head features -> 1 logit
};

}  // namespace gtd
