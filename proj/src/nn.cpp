#include "gtd/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gtd::nn {

Mat& ParamStore::create(const std::string& name, int rows, int cols) {
  if (params.count(name)) throw std::runtime_error("duplicate param: " + name);
  params[name] = Mat::Zero(rows, cols);
  grads[name] = Mat::Zero(rows, cols);
  return params[name];
}

Mat& ParamStore::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::runtime_error("unknown param: " + name);
  return it->second;
}

Mat& ParamStore::grad(const std::string& name) {
  auto it = grads.find(name);
  if (it == grads.end()) throw std::runtime_error("unknown param: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [k, g] : grads) g.setZero();
}

double ParamStore::global_grad_norm() const {
  double s = 0.0;
  for (const auto& [k, g] : grads) s += g.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::clip_grads(double max_norm) {
  double n = global_grad_norm();
  if (n > max_norm && n > 0.0) {
    double f = max_norm / n;
    for (auto& [k, g] : grads) g *= f;
  }
}

void xavier_init(Mat& m, std::mt19937& rng) {
  double bound = std::sqrt(6.0 / (m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out,
                      std::mt19937& rng) {
  Linear l{name + ".w", name + ".b"};
  xavier_init(ps.create(l.w, in, out), rng);
  ps.create(l.b, 1, out);
  return l;
}

Var Linear::forward(Tape& t, ParamStore& ps, Var x) const {
  Var wv = t.leaf(ps.param(w), &ps.grad(w));
  Var bv = t.leaf(ps.param(b), &ps.grad(b));
  return t.add_row_broadcast(t.matmul(x, wv), bv);
}

MLP MLP::create(ParamStore& ps, const std::string& name,
                const std::vector<int>& dims, std::mt19937& rng) {
  MLP m;
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    m.layers.push_back(Linear::create(ps, name + ".l" + std::to_string(i),
                                      dims[i], dims[i + 1], rng));
  return m;
}

Var MLP::forward(Tape& t, ParamStore& ps, Var x) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].forward(t, ps, x);
    if (i + 1 < layers.size()) x = t.relu(x);
  }
  return x;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
  LayerNorm ln{name + ".gamma", name + ".beta"};
  ps.create(ln.gamma, 1, dim).setOnes();
  ps.create(ln.beta, 1, dim);
  return ln;
}

Var LayerNorm::forward(Tape& t, ParamStore& ps, Var x) const {
  Var g = t.leaf(ps.param(gamma), &ps.grad(gamma));
  Var b = t.leaf(ps.param(beta), &ps.grad(beta));
  return t.layernorm_rows(x, g, b);
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps,
                                              const std::string& name, int dim,
                                              int heads, std::mt19937& rng) {
  if (dim % heads != 0)
    throw std::invalid_argument("attention dim not divisible by heads");
  MultiHeadAttention a;
  a.heads = heads;
  a.dim = dim;
  a.wq = Linear::create(ps, name + ".q", dim, dim, rng);
  a.wk = Linear::create(ps, name + ".k", dim, dim, rng);
  a.wv = Linear::create(ps, name + ".v", dim, dim, rng);
  a.wo = Linear::create(ps, name + ".o", dim, dim, rng);
  return a;
}

Var MultiHeadAttention::forward(Tape& t, ParamStore& ps, Var q_in, Var k_in,
                                Var v_in, const Mat* bias,
                                const std::vector<char>* key_mask,
                                bool bias_inside_scale) const {
  const int dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = wq.forward(t, ps, q_in);
  Var k = wk.forward(t, ps, k_in);
  Var v = wv.forward(t, ps, v_in);
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = t.cols(q, h * dh, dh);
    Var kh = t.cols(k, h * dh, dh);
    Var vh = t.cols(v, h * dh, dh);
    Var logits = t.matmul_nt(qh, kh);
    if (bias) {
      if (bias_inside_scale)
        logits = t.scale(t.add_const(logits, *bias), inv_sqrt);
      else
        logits = t.add_const(t.scale(logits, inv_sqrt), *bias);
    } else {
      logits = t.scale(logits, inv_sqrt);
    }
    Var probs = t.softmax_rows(logits, key_mask);
    outs.push_back(t.matmul(probs, vh));
  }
  return wo.forward(t, ps, t.hconcat(outs));
}

TransformerEncoderLayer TransformerEncoderLayer::create(
    ParamStore& ps, const std::string& name, int dim, int heads, int ff_dim,
    std::mt19937& rng) {
  TransformerEncoderLayer l;
  l.attn = MultiHeadAttention::create(ps, name + ".attn", dim, heads, rng);
  l.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
  l.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
  l.ff1 = Linear::create(ps, name + ".ff1", dim, ff_dim, rng);
  l.ff2 = Linear::create(ps, name + ".ff2", ff_dim, dim, rng);
  return l;
}

Var TransformerEncoderLayer::forward(Tape& t, ParamStore& ps, Var x,
                                     Var pos) const {
  Var qk = t.add(x, pos);
  Var attended = attn.forward(t, ps, qk, qk, x);
  x = ln1.forward(t, ps, t.add(x, attended));
  Var ff = ff2.forward(t, ps, t.relu(ff1.forward(t, ps, x)));
  return ln2.forward(t, ps, t.add(x, ff));
}

TransformerDecoderLayer TransformerDecoderLayer::create(
    ParamStore& ps, const std::string& name, int dim, int heads, int ff_dim,
    std::mt19937& rng) {
  TransformerDecoderLayer l;
  l.self_attn = MultiHeadAttention::create(ps, name + ".self", dim, heads, rng);
  l.cross_attn = MultiHeadAttention::create(ps, name + ".cross", dim, heads, rng);
  l.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
  l.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
  l.ln3 = LayerNorm::create(ps, name + ".ln3", dim);
  l.ff1 = Linear::create(ps, name + ".ff1", dim, ff_dim, rng);
  l.ff2 = Linear::create(ps, name + ".ff2", ff_dim, dim, rng);
  return l;
}

Var TransformerDecoderLayer::forward(Tape& t, ParamStore& ps, Var x,
                                     Var query_pos, Var memory,
                                     Var memory_pos) const {
  Var qk = t.add(x, query_pos);
  Var sa = self_attn.forward(t, ps, qk, qk, x);
  x = ln1.forward(t, ps, t.add(x, sa));
  Var ca = cross_attn.forward(t, ps, t.add(x, query_pos),
                              t.add(memory, memory_pos), memory);
  x = ln2.forward(t, ps, t.add(x, ca));
  Var ff = ff2.forward(t, ps, t.relu(ff1.forward(t, ps, x)));
  return ln3.forward(t, ps, t.add(x, ff));
}

Mat sinusoidal_positions_2d(int h, int w, int dim) {
  if (dim % 4 != 0)
    throw std::invalid_argument("positional dim must be divisible by 4");
  const int quarter = dim / 4;
  Mat pe(h * w, dim);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int row = y * w + x;
      for (int i = 0; i < quarter; ++i) {
        double f = std::pow(10000.0, 2.0 * i / (dim / 2.0));
        pe(row, 2 * i) = std::sin(y / f);
        pe(row, 2 * i + 1) = std::cos(y / f);
        pe(row, dim / 2 + 2 * i) = std::sin(x / f);
        pe(row, dim / 2 + 2 * i + 1) = std::cos(x / f);
      }
    }
  return pe;
}

}  // namespace gtd::nn
