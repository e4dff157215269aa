#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace gtd::ad {

using Mat = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& value() const;
};

/// Reverse-mode tape over dense double matrices. One tape per forward pass;
/// parameters are leaves whose gradients accumulate into external sinks.
class Tape {
 public:
  Var constant(Mat m);
  Var leaf(const Mat& m, Mat* grad_sink);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, Mat c);
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var transpose(Var a);
  Var add_row_broadcast(Var a, Var bias_row);  // bias_row: 1 x d, added to every row

  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var softplus(Var a);

  Var rows(Var a, std::vector<int> idx);
  Var cols(Var a, int start, int n);
  Var vconcat(const std::vector<Var>& parts);
  Var hconcat(const std::vector<Var>& parts);

  /// Row-wise softmax. key_mask (optional, one flag per column) marks
  /// excluded keys; they get exactly zero probability. A fully masked row
  /// throws.
  Var softmax_rows(Var logits, const std::vector<char>* key_mask = nullptr);

  Var layernorm_rows(Var x, Var gamma_row, Var beta_row, double eps = 1e-5);

  /// input: inC x (H*W) row-major spatial layout. weight: outC x (inC*k*k).
  /// bias: outC x 1. Returns outC x (outH*outW).
  Var conv2d(Var input, int H, int W, Var weight, Var bias, int k, int stride,
             int pad, int* out_h, int* out_w);

  /// Scalar node with a caller-supplied local gradient: fn fills
  /// d(value)/d(input) (same shape as input) and returns the value.
  Var custom_scalar(Var input,
                    const std::function<double(const Mat&, Mat&)>& fn);

  /// sum_i w_i * s_i over same-shaped vars (used for loss assembly).
  Var affine_sum(const std::vector<Var>& vars, const std::vector<double>& ws);

  void backward(Var loss);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void()> back;  // empty for constants
  };
  int push(Mat val, std::function<void()> back = {});
  std::vector<std::unique_ptr<Node>> nodes_;

  friend struct Var;
  Node& at(int id) { return *nodes_[id]; }
  const Node& at(int id) const { return *nodes_[id]; }
};

}  // namespace gtd::ad
