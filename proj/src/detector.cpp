#include "gtd/detector.hpp"

#include <stdexcept>

namespace gtd {

using nn::Tape;
using nn::Var;

Detector::Detector(nn::ParamStore& ps, const DetectorConfig& cfg,
                   std::mt19937& rng)
    : cfg_(cfg) {
  if (cfg.c_b_prime % cfg.enc_heads != 0 || cfg.c_b_prime % cfg.dec_heads != 0)
    throw std::invalid_argument("c_b_prime must be divisible by head counts");
  int in_c = 3;
  for (size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
    ConvStage s;
    s.in_c = in_c;
    s.out_c = cfg.backbone_channels[i];
    s.w = "backbone.s" + std::to_string(i) + ".w";
    s.b = "backbone.s" + std::to_string(i) + ".b";
    nn::xavier_init(ps.create(s.w, s.out_c, s.in_c * 9), rng);
    ps.create(s.b, s.out_c, 1);
    stages_.push_back(s);
    in_c = s.out_c;
  }
  proj_ = nn::Linear::create(ps, "detector.proj", in_c, cfg.c_b_prime, rng);
  for (int i = 0; i < cfg.enc_layers; ++i)
    enc_.push_back(nn::TransformerEncoderLayer::create(
        ps, "detector.enc" + std::to_string(i), cfg.c_b_prime, cfg.enc_heads,
        cfg.ff_dim, rng));
  for (int i = 0; i < cfg.dec_layers; ++i)
    dec_.push_back(nn::TransformerDecoderLayer::create(
        ps, "detector.dec" + std::to_string(i), cfg.c_b_prime, cfg.dec_heads,
        cfg.ff_dim, rng));
  query_embed_ = "detector.query_embed";
  query_pos_ = "detector.query_pos";
  nn::xavier_init(ps.create(query_embed_, cfg.num_queries, cfg.c_b_prime), rng);
  nn::xavier_init(ps.create(query_pos_, cfg.num_queries, cfg.c_b_prime), rng);
  bbox_head_ = nn::MLP::create(ps, "detector.bbox",
                               {cfg.c_b_prime, cfg.c_b_prime, 4}, rng);
  class_head_ =
      nn::Linear::create(ps, "detector.class", cfg.c_b_prime, cfg.num_classes, rng);
}

FeatureMapVar Detector::extract_features(Tape& t, nn::ParamStore& ps,
                                         const Mat& r, const Mat& g,
                                         const Mat& b) const {
  const int H = static_cast<int>(r.rows());
  const int W = static_cast<int>(r.cols());
  if (H % cfg_.total_stride() != 0 || W % cfg_.total_stride() != 0)
    throw std::invalid_argument("image dims not divisible by backbone stride");

  Mat x(3, H * W);
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      x(0, y * W + xx) = r(y, xx);
      x(1, y * W + xx) = g(y, xx);
      x(2, y * W + xx) = b(y, xx);
    }
  Var cur = t.constant(std::move(x));
  int h = H, w = W;
  for (const auto& s : stages_) {
    Var wv = t.leaf(ps.param(s.w), &ps.grad(s.w));
    Var bv = t.leaf(ps.param(s.b), &ps.grad(s.b));
    int oh = 0, ow = 0;
    cur = t.relu(t.conv2d(cur, h, w, wv, bv, 3, 2, 1, &oh, &ow));
    h = oh;
    w = ow;
  }
  // flatten spatial dims to tokens, then project channels down
  Var tokens = proj_.forward(t, ps, t.transpose(cur));
  FeatureMapVar fm;
  fm.tokens = tokens;
  fm.h = h;
  fm.w = w;
  fm.positions = nn::sinusoidal_positions_2d(h, w, cfg_.c_b_prime);
  return fm;
}

Var Detector::encode(Tape& t, nn::ParamStore& ps, const FeatureMapVar& fmap) const {
  Var x = fmap.tokens;
  Var pos = t.constant(fmap.positions);
  for (const auto& layer : enc_) x = layer.forward(t, ps, x, pos);
  return x;
}

Var Detector::decode(Tape& t, nn::ParamStore& ps, Var f_e,
                     const Mat& memory_pos) const {
  Var x = t.leaf(ps.param(query_embed_), &ps.grad(query_embed_));
  Var qpos = t.leaf(ps.param(query_pos_), &ps.grad(query_pos_));
  Var mpos = t.constant(memory_pos);
  for (const auto& layer : dec_) x = layer.forward(t, ps, x, qpos, f_e, mpos);
  return x;
}

std::pair<Var, Var> Detector::predict_objects(Tape& t, nn::ParamStore& ps,
                                              Var f_d) const {
  Var boxes = t.sigmoid(bbox_head_.forward(t, ps, f_d));
  Var logits = class_head_.forward(t, ps, f_d);
  return {boxes, logits};
}

std::vector<ObjectPrediction> Detector::to_predictions(const Mat& boxes,
                                                       const Mat& logits,
                                                       int no_object_class) {
  std::vector<ObjectPrediction> out;
  out.reserve(boxes.rows());
  for (Eigen::Index i = 0; i < boxes.rows(); ++i) {
    ObjectPrediction p;
    p.bbox = BBox{boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
    Eigen::RowVectorXd z = logits.row(i);
    double mx = z.maxCoeff();
    Eigen::RowVectorXd probs = (z.array() - mx).exp();
    probs /= probs.sum();
    p.class_probs.assign(probs.data(), probs.data() + probs.size());
    Eigen::Index label;
    probs.maxCoeff(&label);
    p.label = static_cast<int>(label);
    double conf = 0.0;
    for (Eigen::Index c = 0; c < probs.size(); ++c)
      if (c != no_object_class) conf = std::max(conf, probs(c));
    p.confidence = conf;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace gtd
