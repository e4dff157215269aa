#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "gtd/tape.hpp"

namespace gtd::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

/// Named dense parameters with matching gradient buffers. Map ordering makes
/// every traversal deterministic.
struct ParamStore {
  std::map<std::string, Mat> params;
  std::map<std::string, Mat> grads;

  Mat& create(const std::string& name, int rows, int cols);
  Mat& param(const std::string& name);
  Mat& grad(const std::string& name);
  void zero_grads();
  double global_grad_norm() const;
  void clip_grads(double max_norm);
};

void xavier_init(Mat& m, std::mt19937& rng);

struct Linear {
  std::string w, b;
  static Linear create(ParamStore& ps, const std::string& name, int in, int out,
                       std::mt19937& rng);
  Var forward(Tape& t, ParamStore& ps, Var x) const;  // x: n x in
};

/// Linear stack with ReLU between layers, no activation after the last.
struct MLP {
  std::vector<Linear> layers;
  static MLP create(ParamStore& ps, const std::string& name,
                    const std::vector<int>& dims, std::mt19937& rng);
  Var forward(Tape& t, ParamStore& ps, Var x) const;
};

struct LayerNorm {
  std::string gamma, beta;
  static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
  Var forward(Tape& t, ParamStore& ps, Var x) const;
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1, dim = 0;
  static MultiHeadAttention create(ParamStore& ps, const std::string& name,
                                   int dim, int heads, std::mt19937& rng);
  /// bias, when given, is added to every head's logits; with
  /// bias_inside_scale it lands inside the 1/sqrt(d_k) scaling.
  Var forward(Tape& t, ParamStore& ps, Var q_in, Var k_in, Var v_in,
              const Mat* bias = nullptr,
              const std::vector<char>* key_mask = nullptr,
              bool bias_inside_scale = true) const;
};

struct TransformerEncoderLayer {
  MultiHeadAttention attn;
  LayerNorm ln1, ln2;
  Linear ff1, ff2;
  static TransformerEncoderLayer create(ParamStore& ps, const std::string& name,
                                        int dim, int heads, int ff_dim,
                                        std::mt19937& rng);
  /// Positional encodings are added to Q and K only, never V.
  Var forward(Tape& t, ParamStore& ps, Var x, Var pos) const;
};

struct TransformerDecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  LayerNorm ln1, ln2, ln3;
  Linear ff1, ff2;
  static TransformerDecoderLayer create(ParamStore& ps, const std::string& name,
                                        int dim, int heads, int ff_dim,
                                        std::mt19937& rng);
  Var forward(Tape& t, ParamStore& ps, Var x, Var query_pos, Var memory,
              Var memory_pos) const;
};

/// Fixed 2D sinusoidal encodings for an h x w token grid, one row per token.
Mat sinusoidal_positions_2d(int h, int w, int dim);

}  // namespace gtd::nn
