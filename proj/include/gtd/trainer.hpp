#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gtd/cone.hpp"
#include "gtd/detector.hpp"
#include "gtd/got.hpp"
#include "gtd/losses.hpp"
#include "gtd/metrics.hpp"
#include "gtd/scene.hpp"

namespace gtd {

struct TrainConfig {
  double lr = 1e-4;        // main learning rate; backbone group runs at lr/10
  int epochs_main = 80;    // then lr drops by 10x for the tail
  int epochs_tail = 20;
  int batch_size = 8;
  uint64_t seed = 0;
  bool deterministic = true;
  int max_steps = 0;       // 0 = uncapped; desk-scale smoke tests cap here
  double grad_clip = 0.1;  // global-norm clipping
  double cone_alpha_deg = 120.0;
  bool mode3d = false;               // sample the depth grid when present
  double sigma_cells_at_64 = 3.0;    // gaussian target sigma, scaled with R
};

struct ModelConfig {
  DetectorConfig detector;
  GotConfig got;
  losses::LossWeights loss;
  TrainConfig train;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Detector + gaze regressor + gaze-object transformer over one ParamStore.
/// Construction order and the seed fix the initialization bit-for-bit.
struct Model {
  ModelConfig cfg;
  nn::ParamStore ps;

 private:
  std::mt19937 init_rng_;  // consumed during construction only

 public:
  Detector detector;
  GazeConePredictor gaze;
  GazeObjectTransformer got;

  explicit Model(const ModelConfig& cfg);

  static ModelConfig validate(ModelConfig cfg);
};

/// One evaluated head as the artifact reports it: detached, float32-rounded
/// heatmap so the on-disk and in-memory pipelines agree bit-for-bit.
struct HeadRecord {
  BBox head_bbox;
  double score = 0.0;  // p(head) of the query, used for AP ranking
  double p_out = 0.5;
  bool used_skip = false;
  std::pair<double, double> gaze_point{0.5, 0.5};
  std::optional<std::pair<BBox, int>> gazed_object;
  Mat heatmap;  // R x R
};

struct ScenePrediction {
  std::string image_id;
  std::vector<HeadRecord> heads;
};

struct StepLog {
  int step = 0, epoch = 0;
  double lr = 0.0, grad_norm = 0.0;
  losses::LossBreakdown loss;
  std::string to_json_line() const;
};

/// Adam with two parameter groups: names starting with "backbone." step at
/// one tenth of the group learning rate.
class AdamOptimizer {
 public:
  AdamOptimizer(nn::ParamStore& ps, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(double lr);
  double group_lr(const std::string& name, double lr) const;

 private:
  nn::ParamStore& ps_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

/// Per-scene forward + loss assembly with teacher-forced head/object sets
/// from the Hungarian matching. Returns the scalar loss Var.
std::pair<nn::Var, losses::LossBreakdown> scene_loss(nn::Tape& t, Model& model,
                                                     const Scene& scene);

/// Full optimization loop; writes epoch_NNNN.ckpt + final.ckpt under out_dir
/// and one JSON line per step to log (when given).
void train(Model& model, const std::vector<Scene>& scenes,
           const std::string& out_dir, std::ostream* log = nullptr);

/// Inference for one scene: tau/no-object filtering, cone bias, gated
/// heatmaps. Falls back to the best head-class query when nothing passes
/// the filter so every scene yields at least one record.
ScenePrediction infer_scene(const Model& model, const Scene& scene);

/// Metric aggregation shared by in-memory evaluation and evaluation from
/// prediction files; gt heads match records by head-box IoU.
metrics::EvalReport report_from_predictions(
    const std::vector<Scene>& scenes, const std::vector<ScenePrediction>& preds);

metrics::EvalReport evaluate(const Model& model, const std::vector<Scene>& scenes);

// Checkpoints: magic "GZCK", config JSON, named float32 tensors. Saving
// also rounds the live parameters through float32 so a reloaded model
// evaluates identically to the one that was saved.
void save_checkpoint(const std::string& path, Model& model);
Model load_checkpoint(const std::string& path);

// Prediction files: <image_id>.json plus one HMAP grid per head.
void write_prediction(const std::string& dir, const ScenePrediction& pred);
ScenePrediction read_prediction(const std::string& dir,
                                const std::string& image_id);

}  // namespace gtd
