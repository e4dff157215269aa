#include "gtd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gtd/data_io.hpp"
#include "gtd/grid_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gtd {

namespace {

json bbox_to_json(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }
BBox bbox_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

Mat round_f32(const Mat& m) {
  Mat out = m;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out.data()[i] = static_cast<double>(static_cast<float>(out.data()[i]));
  return out;
}

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

std::string ModelConfig::to_json() const {
  json j;
  json d;
  d["image_size"] = detector.image_size;
  d["backbone_channels"] = detector.backbone_channels;
  d["c_b_prime"] = detector.c_b_prime;
  d["enc_layers"] = detector.enc_layers;
  d["enc_heads"] = detector.enc_heads;
  d["dec_layers"] = detector.dec_layers;
  d["dec_heads"] = detector.dec_heads;
  d["num_queries"] = detector.num_queries;
  d["num_classes"] = detector.num_classes;
  d["ff_dim"] = detector.ff_dim;
  j["detector"] = d;
  json g;
  g["layers"] = got.layers;
  g["heads"] = got.heads;
  g["dim"] = got.dim;
  g["tau"] = got.tau;
  g["heatmap_res"] = got.heatmap_res;
  g["heatmap_hidden"] = got.heatmap_hidden;
  g["ff_dim"] = got.ff_dim;
  g["sigma_inside_scale"] = got.sigma_inside_scale;
  g["sigma_enabled"] = got.sigma_enabled;
  j["got"] = g;
  json l;
  l["lambda_l1"] = loss.lambda_l1;
  l["lambda_giou"] = loss.lambda_giou;
  l["lambda_heat"] = loss.lambda_heat;
  l["lambda_cls"] = loss.lambda_cls;
  l["lambda_vec"] = loss.lambda_vec;
  l["lambda_out"] = loss.lambda_out;
  l["eos_weight"] = loss.eos_weight;
  j["loss"] = l;
  json t;
  t["lr"] = train.lr;
  t["epochs_main"] = train.epochs_main;
  t["epochs_tail"] = train.epochs_tail;
  t["batch_size"] = train.batch_size;
  t["seed"] = train.seed;
  t["deterministic"] = train.deterministic;
  t["max_steps"] = train.max_steps;
  t["grad_clip"] = train.grad_clip;
  t["cone_alpha_deg"] = train.cone_alpha_deg;
  t["mode3d"] = train.mode3d;
  t["sigma_cells_at_64"] = train.sigma_cells_at_64;
  j["train"] = t;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  auto get = [](const json& o, const char* k, auto& field) {
    if (o.contains(k)) field = o[k].get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("detector")) {
    const json& d = j["detector"];
    get(d, "image_size", c.detector.image_size);
    get(d, "backbone_channels", c.detector.backbone_channels);
    get(d, "c_b_prime", c.detector.c_b_prime);
    get(d, "enc_layers", c.detector.enc_layers);
    get(d, "enc_heads", c.detector.enc_heads);
    get(d, "dec_layers", c.detector.dec_layers);
    get(d, "dec_heads", c.detector.dec_heads);
    get(d, "num_queries", c.detector.num_queries);
    get(d, "num_classes", c.detector.num_classes);
    get(d, "ff_dim", c.detector.ff_dim);
  }
  if (j.contains("got")) {
    const json& g = j["got"];
    get(g, "layers", c.got.layers);
    get(g, "heads", c.got.heads);
    get(g, "dim", c.got.dim);
    get(g, "tau", c.got.tau);
    get(g, "heatmap_res", c.got.heatmap_res);
    get(g, "heatmap_hidden", c.got.heatmap_hidden);
    get(g, "ff_dim", c.got.ff_dim);
    get(g, "sigma_inside_scale", c.got.sigma_inside_scale);
    get(g, "sigma_enabled", c.got.sigma_enabled);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    get(l, "lambda_l1", c.loss.lambda_l1);
    get(l, "lambda_giou", c.loss.lambda_giou);
    get(l, "lambda_heat", c.loss.lambda_heat);
    get(l, "lambda_cls", c.loss.lambda_cls);
    get(l, "lambda_vec", c.loss.lambda_vec);
    get(l, "lambda_out", c.loss.lambda_out);
    get(l, "eos_weight", c.loss.eos_weight);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    get(t, "lr", c.train.lr);
    get(t, "epochs_main", c.train.epochs_main);
    get(t, "epochs_tail", c.train.epochs_tail);
    get(t, "batch_size", c.train.batch_size);
    get(t, "seed", c.train.seed);
    get(t, "deterministic", c.train.deterministic);
    get(t, "max_steps", c.train.max_steps);
    get(t, "grad_clip", c.train.grad_clip);
    get(t, "cone_alpha_deg", c.train.cone_alpha_deg);
    get(t, "mode3d", c.train.mode3d);
    get(t, "sigma_cells_at_64", c.train.sigma_cells_at_64);
  }
  return c;
}

ModelConfig Model::validate(ModelConfig cfg) {
  if (cfg.got.dim != cfg.detector.c_b_prime)
    throw std::invalid_argument("ModelConfig: got.dim must equal detector.c_b_prime");
  if (!(cfg.train.lr > 0))
    throw std::invalid_argument("ModelConfig: learning rate must be positive");
  if (cfg.train.epochs_main < 0 || cfg.train.epochs_tail < 0)
    throw std::invalid_argument("ModelConfig: epochs must be non-negative");
  if (cfg.train.batch_size < 1)
    throw std::invalid_argument("ModelConfig: batch size must be positive");
  if (cfg.got.heatmap_res < 2)
    throw std::invalid_argument("ModelConfig: heatmap resolution too small");
  return cfg;
}

Model::Model(const ModelConfig& c)
    : cfg(validate(c)),
      ps(),
      init_rng_(static_cast<uint32_t>(c.train.seed)),
      detector(ps, cfg.detector, init_rng_),
      gaze(GazeConePredictor::create(ps, "gaze", cfg.detector.c_b_prime, 64,
                                     cfg.train.mode3d, init_rng_)),
      got(ps, cfg.got, cfg.detector.num_queries, init_rng_) {}

AdamOptimizer::AdamOptimizer(nn::ParamStore& ps, double beta1, double beta2,
                             double eps)
    : ps_(ps), beta1_(beta1), beta2_(beta2), eps_(eps) {}

double AdamOptimizer::group_lr(const std::string& name, double lr) const {
  return name.rfind("backbone.", 0) == 0 ? lr * 0.1 : lr;
}

void AdamOptimizer::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : ps_.params) {
    const Mat& g = ps_.grads.at(name);
    Mat& m = m_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
    Mat& v = v_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v.array() + (1.0 - beta2_) * g.array().square();
    const Mat mhat = m / bc1;
    const Mat vhat = v / bc2;
    p.array() -= group_lr(name, lr) * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

std::string StepLog::to_json_line() const {
  json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  j["loss"] = {{"box", loss.box},   {"cls", loss.cls}, {"vec", loss.vec},
               {"out", loss.out},   {"heat", loss.heat}, {"total", loss.total}};
  return j.dump();
}

namespace {

struct SceneForward {
  nn::Var f_d, boxes, logits;
  std::vector<ObjectPrediction> preds;
};

SceneForward forward_detector(nn::Tape& t, Model& model, const Scene& scene) {
  if (scene.height != model.cfg.detector.image_size ||
      scene.width != model.cfg.detector.image_size)
    throw std::invalid_argument("resolution mismatch: scene " + scene.image_id +
                                " vs detector image_size");
  SceneForward f;
  auto fmap = model.detector.extract_features(t, model.ps, scene.pixels_r,
                                              scene.pixels_g, scene.pixels_b);
  nn::Var mem = model.detector.encode(t, model.ps, fmap);
  f.f_d = model.detector.decode(t, model.ps, mem, fmap.positions);
  auto [boxes, logits] = model.detector.predict_objects(t, model.ps, f.f_d);
  f.boxes = boxes;
  f.logits = logits;
  f.preds = Detector::to_predictions(boxes.value(), logits.value(),
                                     model.cfg.detector.no_object_class());
  return f;
}

int sample_depth_cell(const std::optional<Mat>& depth, double x, double y,
                      int d) {
  double dv = 0.5;
  if (depth) {
    int ry = std::min<int>(static_cast<int>(depth->rows()) - 1,
                           std::max(0, static_cast<int>(y * depth->rows())));
    int rx = std::min<int>(static_cast<int>(depth->cols()) - 1,
                           std::max(0, static_cast<int>(x * depth->cols())));
    dv = (*depth)(ry, rx);
  }
  return std::min(d - 1, std::max(0, static_cast<int>(dv * d)));
}

std::vector<ConeField> build_head_cones(const Model& model,
                                        const std::vector<ObjectPrediction>& preds,
                                        const std::vector<int>& head_idx,
                                        const std::vector<GazeVector>& gvs,
                                        const std::optional<Mat>& depth) {
  const int R = model.cfg.got.heatmap_res;
  const bool m3 = model.cfg.train.mode3d;
  const int D = m3 ? R : 1;
  std::vector<ConeField> cones;
  for (size_t i = 0; i < head_idx.size(); ++i) {
    const BBox& hb = preds[head_idx[i]].bbox;
    auto [ai, aj] = to_grid_coords(hb.cx, hb.cy, R);
    int az = m3 ? sample_depth_cell(depth, hb.cx, hb.cy, D) : 0;
    cones.push_back(build_cone(aj, ai, az, gvs[i], R, R, D,
                               model.cfg.train.cone_alpha_deg, m3));
  }
  return cones;
}

std::pair<double, double> mean_point(
    const std::vector<std::pair<double, double>>& pts) {
  double mx = 0, my = 0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  return {mx / pts.size(), my / pts.size()};
}

}  // namespace

std::pair<nn::Var, losses::LossBreakdown> scene_loss(nn::Tape& t, Model& model,
                                                     const Scene& scene) {
  const auto& dc = model.cfg.detector;
  const auto& w = model.cfg.loss;
  SceneForward f = forward_detector(t, model, scene);

  losses::LossTerms terms;
  Mat cost = losses::matching_cost(f.preds, scene.objects, w);
  losses::Assignment asg = losses::hungarian_match(cost);
  std::vector<int> gt_to_pred(scene.objects.size(), -1);
  for (auto [p, g] : asg.pairs) {
    gt_to_pred[g] = p;
    terms.box.push_back(losses::l_box(t, t.rows(f.boxes, {p}),
                                      scene.objects[g].first, w));
    terms.cls.push_back(
        losses::l_cls(t, t.rows(f.logits, {p}), scene.objects[g].second, 1.0));
  }
  for (int p : asg.unmatched)
    terms.cls.push_back(losses::l_cls(t, t.rows(f.logits, {p}),
                                      dc.no_object_class(), w.eos_weight));

  // Teacher-forced head/object query sets from the matching: the gaze
  // branches train against the queries assigned to the gt boxes.
  std::vector<int> head_idx;
  for (const auto& ga : scene.gazes) {
    int gt_head = -1;
    for (size_t k = 0; k < scene.objects.size(); ++k) {
      const auto& [b, lbl] = scene.objects[k];
      if (lbl == DetectorConfig::head_class && b.cx == ga.head_bbox.cx &&
          b.cy == ga.head_bbox.cy && b.w == ga.head_bbox.w &&
          b.h == ga.head_bbox.h) {
        gt_head = static_cast<int>(k);
        break;
      }
    }
    if (gt_head < 0 || gt_to_pred[gt_head] < 0)
      throw std::runtime_error("scene_loss: gaze head has no matched query");
    head_idx.push_back(gt_to_pred[gt_head]);
  }
  std::vector<int> object_idx;
  for (size_t k = 0; k < scene.objects.size(); ++k)
    if (scene.objects[k].second != DetectorConfig::head_class &&
        gt_to_pred[k] >= 0)
      object_idx.push_back(gt_to_pred[k]);
  std::sort(object_idx.begin(), object_idx.end());

  const int R = model.cfg.got.heatmap_res;
  const double sigma_cells = model.cfg.train.sigma_cells_at_64 * R / 64.0;
  std::optional<Mat> depth =
      model.cfg.train.mode3d ? scene.depth : std::optional<Mat>{};

  if (!head_idx.empty()) {
    nn::Var mapped = model.gaze.forward(t, model.ps, t.rows(f.f_d, head_idx));
    std::vector<GazeVector> gvs =
        GazeConePredictor::to_gaze_vectors(mapped.value(), model.gaze.mode3d);

    for (size_t i = 0; i < scene.gazes.size(); ++i) {
      const auto& ga = scene.gazes[i];
      if (!ga.inside || ga.points.empty()) continue;
      GazeVector gtv = data::derive_gt_gaze_vector(
          ga.head_bbox, mean_point(ga.points), R, depth);
      terms.vec.push_back(
          losses::l_vec(t, t.rows(mapped, {static_cast<int>(i)}), gtv));
    }

    std::vector<ConeField> cones =
        build_head_cones(model, f.preds, head_idx, gvs, depth);
    ScoreMatrix sigma = object_score_matrix(f.preds, head_idx, cones, depth);
    if (!model.cfg.got.sigma_enabled) sigma.sigma.setZero();

    std::vector<GazeOutputVars> gvars;
    model.got.forward(t, model.ps, f.f_d, sigma, head_idx, object_idx, &gvars);
    for (size_t i = 0; i < scene.gazes.size(); ++i) {
      const auto& ga = scene.gazes[i];
      terms.out.push_back(losses::l_out(t, gvars[i].p_out, !ga.inside));
      if (ga.inside && !ga.points.empty()) {
        Heatmap target = data::gaussian_target(ga.points, R, sigma_cells);
        terms.heat.push_back(
            losses::l_heat(t, gvars[i].heatmap, target.grid, w.lambda_heat));
      }
    }
  }

  return losses::total_loss(t, terms, w);
}

namespace {

void check_finite(const losses::LossBreakdown& bd) {
  const std::pair<const char*, double> parts[] = {
      {"box", bd.box}, {"cls", bd.cls}, {"vec", bd.vec},
      {"out", bd.out}, {"heat", bd.heat}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite loss term: ") + name);
}

}  // namespace

void train(Model& model, const std::vector<Scene>& scenes,
           const std::string& out_dir, std::ostream* log) {
  if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
  fs::create_directories(out_dir);
  const TrainConfig& tc = model.cfg.train;
  AdamOptimizer opt(model.ps);
  std::mt19937_64 shuffle_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  const int total_epochs = tc.epochs_main + tc.epochs_tail;
  int step = 0;
  bool capped = false;
  for (int epoch = 0; epoch < total_epochs && !capped; ++epoch) {
    const double lr = epoch < tc.epochs_main ? tc.lr : tc.lr / 10.0;
    std::vector<int> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng() % i]);

    for (size_t start = 0; start < order.size() && !capped;
         start += static_cast<size_t>(tc.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      model.ps.zero_grads();
      losses::LossBreakdown acc;
      for (size_t k = start; k < end; ++k) {
        nn::Tape t;
        auto [lv, bd] = scene_loss(t, model, scenes[order[k]]);
        check_finite(bd);
        t.backward(t.scale(lv, inv));
        acc.box += inv * bd.box;
        acc.cls += inv * bd.cls;
        acc.vec += inv * bd.vec;
        acc.out += inv * bd.out;
        acc.heat += inv * bd.heat;
        acc.total += inv * bd.total;
      }
      const double gn = model.ps.global_grad_norm();
      model.ps.clip_grads(tc.grad_clip);
      opt.step(lr);
      ++step;
      if (log) {
        StepLog sl;
        sl.step = step;
        sl.epoch = epoch;
        sl.lr = lr;
        sl.grad_norm = gn;
        sl.loss = acc;
        *log << sl.to_json_line() << "\n";
      }
      if (tc.max_steps > 0 && step >= tc.max_steps) capped = true;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
    save_checkpoint((fs::path(out_dir) / name).string(), model);
  }
  save_checkpoint((fs::path(out_dir) / "final.ckpt").string(), model);
}

ScenePrediction infer_scene(const Model& model, const Scene& scene) {
  Model& m = const_cast<Model&>(model);  // forward pass only; no mutation
  nn::Tape t;
  SceneForward f = forward_detector(t, m, scene);
  const int R = m.cfg.got.heatmap_res;

  std::vector<int> head_idx, object_idx;
  GazeObjectTransformer::select_indices(f.preds, m.cfg.got.tau,
                                        m.cfg.detector.no_object_class(),
                                        &head_idx, &object_idx);
  if (head_idx.empty()) {
    // nothing cleared the filter: fall back to the most head-like query so
    // evaluation always has a record per scene
    int best = 0;
    for (size_t q = 1; q < f.preds.size(); ++q)
      if (f.preds[q].class_probs[DetectorConfig::head_class] >
          f.preds[best].class_probs[DetectorConfig::head_class])
        best = static_cast<int>(q);
    head_idx = {best};
    object_idx.erase(std::remove(object_idx.begin(), object_idx.end(), best),
                     object_idx.end());
  }

  std::optional<Mat> depth =
      m.cfg.train.mode3d ? scene.depth : std::optional<Mat>{};
  nn::Var mapped = m.gaze.forward(t, m.ps, t.rows(f.f_d, head_idx));
  std::vector<GazeVector> gvs =
      GazeConePredictor::to_gaze_vectors(mapped.value(), m.gaze.mode3d);
  std::vector<ConeField> cones =
      build_head_cones(m, f.preds, head_idx, gvs, depth);
  ScoreMatrix sigma = object_score_matrix(f.preds, head_idx, cones, depth);
  if (!m.cfg.got.sigma_enabled) sigma.sigma.setZero();

  std::vector<GazeOutput> outs =
      m.got.forward(t, m.ps, f.f_d, sigma, head_idx, object_idx);

  ScenePrediction sp;
  sp.image_id = scene.image_id;
  for (size_t i = 0; i < head_idx.size(); ++i) {
    const int q = head_idx[i];
    HeadRecord r;
    r.head_bbox = f.preds[q].bbox;
    r.score = f.preds[q].class_probs[DetectorConfig::head_class];
    r.p_out = outs[i].p_out;
    r.used_skip = outs[i].used_skip;
    r.heatmap = round_f32(outs[i].heatmap.grid);
    int bi = 0, bj = 0;
    double bv = r.heatmap(0, 0);
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        if (r.heatmap(y, x) > bv) {
          bv = r.heatmap(y, x);
          bi = y;
          bj = x;
        }
    r.gaze_point = {(bj + 0.5) / R, (bi + 0.5) / R};
    // gazed object: the surviving object whose center cell holds the argmax
    int pick = -1;
    for (int j : object_idx) {
      auto [ci, cj] = to_grid_coords(f.preds[j].bbox.cx, f.preds[j].bbox.cy, R);
      if (ci != bi || cj != bj) continue;
      if (pick < 0 ||
          std::make_pair(sigma.sigma(q, j), f.preds[j].confidence) >
              std::make_pair(sigma.sigma(q, pick), f.preds[pick].confidence))
        pick = j;
    }
    if (pick >= 0) r.gazed_object = {f.preds[pick].bbox, f.preds[pick].label};
    sp.heads.push_back(std::move(r));
  }
  return sp;
}

namespace {

std::optional<std::pair<BBox, int>> gt_gazed_object(const Scene& scene,
                                                    const GazeAnnotation& ga,
                                                    int R) {
  if (!ga.inside || ga.points.empty()) return std::nullopt;
  auto [mx, my] = mean_point(ga.points);
  auto cell = to_grid_coords(mx, my, R);
  int pick = -1;
  for (size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& [b, lbl] = scene.objects[k];
    if (to_grid_coords(b.cx, b.cy, R) != cell) continue;
    // prefer non-head objects, then the earliest
    if (pick < 0 || (scene.objects[pick].second == DetectorConfig::head_class &&
                     lbl != DetectorConfig::head_class))
      pick = static_cast<int>(k);
  }
  if (pick < 0) return std::nullopt;
  return scene.objects[pick];
}

}  // namespace

metrics::EvalReport report_from_predictions(
    const std::vector<Scene>& scenes,
    const std::vector<ScenePrediction>& preds) {
  if (scenes.empty())
    throw std::invalid_argument("evaluate: empty dataset");
  std::map<std::string, const ScenePrediction*> by_id;
  for (const auto& p : preds) by_id[p.image_id] = &p;

  std::vector<double> aucs, avgs, mins;
  std::vector<metrics::AngularError> angulars;
  std::vector<std::pair<double, bool>> io_pairs;
  std::vector<metrics::GazedPrediction> gazed_preds;
  std::vector<metrics::GazedGroundTruth> gazed_gts;
  std::vector<metrics::HeadEval> head_evals;
  int head_count = 0;

  for (const auto& scene : scenes) {
    auto it = by_id.find(scene.image_id);
    if (it == by_id.end())
      throw std::runtime_error("missing prediction for scene " + scene.image_id);
    const auto& records = it->second->heads;
    if (records.empty())
      throw std::runtime_error("no prediction records for scene " +
                               scene.image_id);
    for (const auto& ga : scene.gazes) {
      // gt heads claim the record with the best head-box IoU,
      // falling back to the nearest center
      int best = 0;
      double best_iou = -1, best_dist = 1e18;
      for (size_t r = 0; r < records.size(); ++r) {
        const double ov = losses::iou(records[r].head_bbox, ga.head_bbox);
        const double dist = std::hypot(records[r].head_bbox.cx - ga.head_bbox.cx,
                                       records[r].head_bbox.cy - ga.head_bbox.cy);
        if (ov > best_iou + 1e-15 ||
            (std::abs(ov - best_iou) <= 1e-15 && dist < best_dist)) {
          best_iou = ov;
          best_dist = dist;
          best = static_cast<int>(r);
        }
      }
      const HeadRecord& rec = records[best];
      ++head_count;
      io_pairs.emplace_back(rec.p_out, !ga.inside);
      gazed_preds.push_back({rec.gazed_object, rec.score});
      gazed_gts.push_back(
          {gt_gazed_object(scene, ga, static_cast<int>(rec.heatmap.rows()))});
      if (ga.inside && !ga.points.empty()) {
        if (auto a = metrics::auc(rec.heatmap, ga.points)) aucs.push_back(*a);
        auto [ad, md] = metrics::gaze_distance(rec.gaze_point, ga.points);
        avgs.push_back(ad);
        mins.push_back(md);
        try {
          auto ae = metrics::angular_error(
              rec.gaze_point, ga.points, {rec.head_bbox.cx, rec.head_bbox.cy});
          if (ae) angulars.push_back(*ae);
        } catch (const std::invalid_argument&) {
          // prediction landed exactly on the head center: no direction
        }
        head_evals.push_back({rec.heatmap, ga.points});
      }
    }
  }

  metrics::EvalReport rep;
  rep.scenes = static_cast<int>(scenes.size());
  rep.heads = head_count;
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
  };
  if (!aucs.empty()) rep.auc = mean(aucs);
  rep.avg_dist = mean(avgs);
  rep.min_dist = mean(mins);
  if (!angulars.empty()) {
    metrics::AngularError agg;
    agg.min_deg = std::numeric_limits<double>::infinity();
    agg.max_deg = -std::numeric_limits<double>::infinity();
    double s = 0;
    for (const auto& a : angulars) {
      agg.min_deg = std::min(agg.min_deg, a.min_deg);
      agg.max_deg = std::max(agg.max_deg, a.max_deg);
      s += a.avg_deg;
    }
    agg.avg_deg = s / angulars.size();
    rep.angular = agg;
  }
  rep.io_ap = metrics::io_ap(io_pairs);
  rep.gazed_map = metrics::gazed_object_map(gazed_preds, gazed_gts);
  for (int k = 1; k <= 10; ++k) {
    auto v = metrics::variance_decile_auc(head_evals, k / 10.0);
    if (!v) {
      rep.decile_auc.clear();
      break;
    }
    rep.decile_auc.push_back(*v);
  }
  return rep;
}

metrics::EvalReport evaluate(const Model& model,
                             const std::vector<Scene>& scenes) {
  if (scenes.empty())
    throw std::invalid_argument("evaluate: empty dataset");
  std::vector<ScenePrediction> preds;
  preds.reserve(scenes.size());
  for (const auto& s : scenes) preds.push_back(infer_scene(model, s));
  return report_from_predictions(scenes, preds);
}

void save_checkpoint(const std::string& path, Model& model) {
  // round the live parameters first so the saved model and the one left in
  // memory evaluate bit-identically
  for (auto& [name, p] : model.ps.params) p = round_f32(p);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write("GZCK", 4);
  const std::string cfg = model.cfg.to_json();
  write_u32(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u32(os, static_cast<uint32_t>(model.ps.params.size()));
  for (const auto& [name, p] : model.ps.params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(p.rows()));
    write_u32(os, static_cast<uint32_t>(p.cols()));
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const float v = static_cast<float>(p(r, c));
        os.write(reinterpret_cast<const char*>(&v), 4);
      }
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GZCK", 4) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  const uint32_t cfg_len = read_u32(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  Model model(ModelConfig::from_json(cfg_text));
  const uint32_t count = read_u32(is);
  if (count != model.ps.params.size())
    throw std::runtime_error("checkpoint tensor count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rows = read_u32(is), cols = read_u32(is);
    auto it = model.ps.params.find(name);
    if (it == model.ps.params.end())
      throw std::runtime_error("checkpoint has unknown tensor: " + name);
    Mat& p = it->second;
    if (p.rows() != static_cast<Eigen::Index>(rows) ||
        p.cols() != static_cast<Eigen::Index>(cols))
      throw std::runtime_error("checkpoint tensor shape mismatch: " + name);
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) {
        float v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        p(r, c) = static_cast<double>(v);
      }
  }
  if (!is) throw std::runtime_error("checkpoint truncated: " + path);
  return model;
}

void write_prediction(const std::string& dir, const ScenePrediction& pred) {
  fs::create_directories(dir);
  json j;
  j["image_id"] = pred.image_id;
  json heads = json::array();
  for (size_t i = 0; i < pred.heads.size(); ++i) {
    const HeadRecord& r = pred.heads[i];
    const std::string hm_file =
        pred.image_id + "_head" + std::to_string(i) + ".hmap";
    write_heatmap_grid((fs::path(dir) / hm_file).string(), r.heatmap);
    json h;
    h["head_bbox"] = bbox_to_json(r.head_bbox);
    h["score"] = r.score;
    h["p_out"] = r.p_out;
    h["used_skip"] = r.used_skip;
    h["gaze_point"] = json::array({r.gaze_point.first, r.gaze_point.second});
    if (r.gazed_object)
      h["gazed_object"] = {{"bbox", bbox_to_json(r.gazed_object->first)},
                           {"label", r.gazed_object->second}};
    else
      h["gazed_object"] = nullptr;
    h["heatmap_file"] = hm_file;
    heads.push_back(std::move(h));
  }
  j["heads"] = std::move(heads);
  std::ofstream os(fs::path(dir) / (pred.image_id + ".json"));
  os << j.dump(2);
}

ScenePrediction read_prediction(const std::string& dir,
                                const std::string& image_id) {
  std::ifstream is(fs::path(dir) / (image_id + ".json"));
  if (!is) throw std::runtime_error("missing prediction file for " + image_id);
  json j = json::parse(is);
  ScenePrediction sp;
  sp.image_id = j.at("image_id").get<std::string>();
  for (const auto& h : j.at("heads")) {
    HeadRecord r;
    r.head_bbox = bbox_from_json(h.at("head_bbox"));
    r.score = h.at("score").get<double>();
    r.p_out = h.at("p_out").get<double>();
    r.used_skip = h.at("used_skip").get<bool>();
    r.gaze_point = {h.at("gaze_point").at(0).get<double>(),
                    h.at("gaze_point").at(1).get<double>()};
    if (!h.at("gazed_object").is_null())
      r.gazed_object = {bbox_from_json(h.at("gazed_object").at("bbox")),
                        h.at("gazed_object").at("label").get<int>()};
    r.heatmap = read_heatmap_grid(
        (fs::path(dir) / h.at("heatmap_file").get<std::string>()).string());
    sp.heads.push_back(std::move(r));
  }
  return sp;
}

}  // namespace gtd
