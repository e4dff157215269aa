#pragma once

#include <random>

#include "gtd/nn.hpp"
#include "gtd/scene.hpp"

namespace gtd {

struct DetectorConfig {
  int image_size = 64;
  std::vector<int> backbone_channels = {8, 16, 24, 32};  // one conv stage each, stride 2
  int c_b_prime = 32;
  int enc_layers = 2;
  int enc_heads = 4;
  int dec_layers = 2;
  int dec_heads = 4;
  int num_queries = 20;
  int num_classes = 5;  // head is class 0, no-object is num_classes-1
  int ff_dim = 64;

  int total_stride() const { return 1 << static_cast<int>(backbone_channels.size()); }
  int no_object_class() const { return num_classes - 1; }
  static constexpr int head_class = 0;
};

struct FeatureMapVar {
  nn::Var tokens;  // L x C_b'
  int h = 0, w = 0;
  Mat positions;  // L x C_b' sinusoidal
};

/// DETR-style object detector at desk scale: strided conv backbone,
/// transformer encoder/decoder, box + class heads.
class Detector {
 public:
  Detector(nn::ParamStore& ps, const DetectorConfig& cfg, std::mt19937& rng);

  FeatureMapVar extract_features(nn::Tape& t, nn::ParamStore& ps,
                                 const Mat& r, const Mat& g, const Mat& b) const;
  nn::Var encode(nn::Tape& t, nn::ParamStore& ps, const FeatureMapVar& fmap) const;
  nn::Var decode(nn::Tape& t, nn::ParamStore& ps, nn::Var f_e,
                 const Mat& memory_pos) const;  // N x C_b'
  /// Returns (boxes N x 4 post-sigmoid, class logits N x CLS).
  std::pair<nn::Var, nn::Var> predict_objects(nn::Tape& t, nn::ParamStore& ps,
                                              nn::Var f_d) const;

  static std::vector<ObjectPrediction> to_predictions(const Mat& boxes,
                                                      const Mat& logits,
                                                      int no_object_class);

  const DetectorConfig& config() const { return cfg_; }

 private:
  DetectorConfig cfg_;
  struct ConvStage {
    std::string w, b;
    int in_c, out_c;
  };
  std::vector<ConvStage> stages_;
  nn::Linear proj_;                         // C_b -> C_b'
  std::vector<nn::TransformerEncoderLayer> enc_;
  std::vector<nn::TransformerDecoderLayer> dec_;
  std::string query_embed_, query_pos_;     // N x C_b' learnable
  nn::MLP bbox_head_;
  nn::Linear class_head_;
};

}  // namespace gtd
