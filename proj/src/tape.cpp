#include "gtd/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace gtd::ad {

const Mat& Var::value() const { return tape->value(*this); }

int Tape::push(Mat val, std::function<void()> back) {
  auto n = std::make_unique<Node>();
  n->grad = Mat::Zero(val.rows(), val.cols());
  n->val = std::move(val);
  n->back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Mat& Tape::value(Var v) const { return at(v.id).val; }
const Mat& Tape::grad(Var v) const { return at(v.id).grad; }

Var Tape::constant(Mat m) { return {this, push(std::move(m))}; }

Var Tape::leaf(const Mat& m, Mat* grad_sink) {
  int id = push(m);
  at(id).back = [this, id, grad_sink]() {
    if (grad_sink) *grad_sink += at(id).grad;
  };
  return {this, id};
}

Var Tape::add(Var a, Var b) {
  int id = push(at(a.id).val + at(b.id).val);
  at(id).back = [this, id, a, b]() {
    at(a.id).grad += at(id).grad;
    at(b.id).grad += at(id).grad;
  };
  return {this, id};
}

Var Tape::sub(Var a, Var b) {
  int id = push(at(a.id).val - at(b.id).val);
  at(id).back = [this, id, a, b]() {
    at(a.id).grad += at(id).grad;
    at(b.id).grad -= at(id).grad;
  };
  return {this, id};
}

Var Tape::cmul(Var a, Var b) {
  int id = push(at(a.id).val.cwiseProduct(at(b.id).val));
  at(id).back = [this, id, a, b]() {
    at(a.id).grad += at(id).grad.cwiseProduct(at(b.id).val);
    at(b.id).grad += at(id).grad.cwiseProduct(at(a.id).val);
  };
  return {this, id};
}

Var Tape::scale(Var a, double s) {
  int id = push(at(a.id).val * s);
  at(id).back = [this, id, a, s]() { at(a.id).grad += at(id).grad * s; };
  return {this, id};
}

Var Tape::add_const(Var a, Mat c) {
  int id = push(at(a.id).val + c);
  at(id).back = [this, id, a]() { at(a.id).grad += at(id).grad; };
  return {this, id};
}

Var Tape::matmul(Var a, Var b) {
  int id = push(at(a.id).val * at(b.id).val);
  at(id).back = [this, id, a, b]() {
    at(a.id).grad += at(id).grad * at(b.id).val.transpose();
    at(b.id).grad += at(a.id).val.transpose() * at(id).grad;
  };
  return {this, id};
}

Var Tape::matmul_nt(Var a, Var b) {
  int id = push(at(a.id).val * at(b.id).val.transpose());
  at(id).back = [this, id, a, b]() {
    at(a.id).grad += at(id).grad * at(b.id).val;
    at(b.id).grad += at(id).grad.transpose() * at(a.id).val;
  };
  return {this, id};
}

Var Tape::transpose(Var a) {
  int id = push(at(a.id).val.transpose());
  at(id).back = [this, id, a]() { at(a.id).grad += at(id).grad.transpose(); };
  return {this, id};
}

Var Tape::add_row_broadcast(Var a, Var bias_row) {
  Mat out = at(a.id).val;
  out.rowwise() += at(bias_row.id).val.row(0);
  int id = push(std::move(out));
  at(id).back = [this, id, a, bias_row]() {
    at(a.id).grad += at(id).grad;
    at(bias_row.id).grad.row(0) += at(id).grad.colwise().sum();
  };
  return {this, id};
}

Var Tape::relu(Var a) {
  int id = push(at(a.id).val.cwiseMax(0.0));
  at(id).back = [this, id, a]() {
    at(a.id).grad.array() +=
        at(id).grad.array() * (at(a.id).val.array() > 0.0).cast<double>();
  };
  return {this, id};
}

Var Tape::sigmoid(Var a) {
  Mat out = (1.0 / (1.0 + (-at(a.id).val.array()).exp())).matrix();
  int id = push(std::move(out));
  at(id).back = [this, id, a]() {
    const auto& y = at(id).val.array();
    at(a.id).grad.array() += at(id).grad.array() * y * (1.0 - y);
  };
  return {this, id};
}

Var Tape::tanh_(Var a) {
  int id = push(at(a.id).val.array().tanh().matrix());
  at(id).back = [this, id, a]() {
    const auto& y = at(id).val.array();
    at(a.id).grad.array() += at(id).grad.array() * (1.0 - y * y);
  };
  return {this, id};
}

Var Tape::softplus(Var a) {
  // log(1+exp(x)), stable form
  Mat out = at(a.id).val.unaryExpr([](double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  int id = push(std::move(out));
  at(id).back = [this, id, a]() {
    at(a.id).grad.array() +=
        at(id).grad.array() / (1.0 + (-at(a.id).val.array()).exp());
  };
  return {this, id};
}

Var Tape::rows(Var a, std::vector<int> idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), at(a.id).val.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = at(a.id).val.row(idx[i]);
  int id = push(std::move(out));
  at(id).back = [this, id, a, idx = std::move(idx)]() {
    for (size_t i = 0; i < idx.size(); ++i)
      at(a.id).grad.row(idx[i]) += at(id).grad.row(i);
  };
  return {this, id};
}

Var Tape::cols(Var a, int start, int n) {
  int id = push(at(a.id).val.middleCols(start, n));
  at(id).back = [this, id, a, start, n]() {
    at(a.id).grad.middleCols(start, n) += at(id).grad;
  };
  return {this, id};
}

Var Tape::vconcat(const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  for (auto p : parts) {
    if (at(p.id).val.cols() != at(parts[0].id).val.cols())
      throw std::invalid_argument("vconcat: column count mismatch");
    rows += at(p.id).val.rows();
  }
  Mat out(rows, at(parts[0].id).val.cols());
  Eigen::Index r = 0;
  for (auto p : parts) {
    out.middleRows(r, at(p.id).val.rows()) = at(p.id).val;
    r += at(p.id).val.rows();
  }
  int id = push(std::move(out));
  at(id).back = [this, id, parts]() {
    Eigen::Index r = 0;
    for (auto p : parts) {
      at(p.id).grad += at(id).grad.middleRows(r, at(p.id).val.rows());
      r += at(p.id).val.rows();
    }
  };
  return {this, id};
}

Var Tape::hconcat(const std::vector<Var>& parts) {
  Eigen::Index cols = 0;
  for (auto p : parts) {
    if (at(p.id).val.rows() != at(parts[0].id).val.rows())
      throw std::invalid_argument("hconcat: row count mismatch");
    cols += at(p.id).val.cols();
  }
  Mat out(at(parts[0].id).val.rows(), cols);
  Eigen::Index c = 0;
  for (auto p : parts) {
    out.middleCols(c, at(p.id).val.cols()) = at(p.id).val;
    c += at(p.id).val.cols();
  }
  int id = push(std::move(out));
  at(id).back = [this, id, parts]() {
    Eigen::Index c = 0;
    for (auto p : parts) {
      at(p.id).grad += at(id).grad.middleCols(c, at(p.id).val.cols());
      c += at(p.id).val.cols();
    }
  };
  return {this, id};
}

Var Tape::softmax_rows(Var logits, const std::vector<char>* key_mask) {
  const Mat& z = at(logits.id).val;
  std::vector<char> mask;
  if (key_mask) {
    if (static_cast<Eigen::Index>(key_mask->size()) != z.cols())
      throw std::invalid_argument("softmax_rows: mask size mismatch");
    mask = *key_mask;
  }
  Mat out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < z.cols(); ++c)
      if (mask.empty() || !mask[c]) mx = std::max(mx, z(r, c));
    if (!std::isfinite(mx))
      throw std::runtime_error("softmax_rows: fully masked row");
    double den = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      double e = (mask.empty() || !mask[c]) ? std::exp(z(r, c) - mx) : 0.0;
      out(r, c) = e;
      den += e;
    }
    out.row(r) /= den;
  }
  int id = push(std::move(out));
  at(id).back = [this, id, logits]() {
    const Mat& p = at(id).val;
    const Mat& dp = at(id).grad;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      double dot = p.row(r).dot(dp.row(r));
      at(logits.id).grad.row(r).array() +=
          p.row(r).array() * (dp.row(r).array() - dot);
    }
  };
  return {this, id};
}

Var Tape::layernorm_rows(Var x, Var gamma_row, Var beta_row, double eps) {
  const Mat& xv = at(x.id).val;
  const Eigen::Index d = xv.cols();
  Mat xhat(xv.rows(), d);
  Eigen::VectorXd inv_sigma(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    double mu = xv.row(r).mean();
    double var = (xv.row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = (xv.row(r).array() - mu) * is;
  }
  Mat out = xhat;
  out.array().rowwise() *= at(gamma_row.id).val.row(0).array();
  out.rowwise() += at(beta_row.id).val.row(0);
  int id = push(std::move(out));
  auto xh = std::make_shared<Mat>(std::move(xhat));
  auto is = std::make_shared<Eigen::VectorXd>(std::move(inv_sigma));
  at(id).back = [this, id, x, gamma_row, beta_row, xh, is]() {
    const Mat& dy = at(id).grad;
    const auto& gamma = at(gamma_row.id).val.row(0);
    const Eigen::Index d = dy.cols();
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(gamma);
      double m1 = dxhat.mean();
      double m2 = dxhat.cwiseProduct(xh->row(r)).mean();
      at(x.id).grad.row(r).array() +=
          (*is)(r) * (dxhat.array() - m1 - xh->row(r).array() * m2);
      at(gamma_row.id).grad.row(0) += dy.row(r).cwiseProduct(xh->row(r));
      at(beta_row.id).grad.row(0) += dy.row(r);
    }
    (void)d;
  };
  return {this, id};
}

Var Tape::conv2d(Var input, int H, int W, Var weight, Var bias, int k,
                 int stride, int pad, int* out_h, int* out_w) {
  const Mat& x = at(input.id).val;
  const int in_c = static_cast<int>(x.rows());
  if (x.cols() != static_cast<Eigen::Index>(H) * W)
    throw std::invalid_argument("conv2d: spatial size mismatch");
  const int oh = (H + 2 * pad - k) / stride + 1;
  const int ow = (W + 2 * pad - k) / stride + 1;
  if (out_h) *out_h = oh;
  if (out_w) *out_w = ow;

  // im2col: (in_c*k*k) x (oh*ow)
  auto patches = std::make_shared<Mat>(Mat::Zero(in_c * k * k, oh * ow));
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      int col = oy * ow + ox;
      for (int c = 0; c < in_c; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            int iy = oy * stride + ky - pad;
            int ix = ox * stride + kx - pad;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            (*patches)((c * k + ky) * k + kx, col) = x(c, iy * W + ix);
          }
    }
  Mat out = at(weight.id).val * (*patches);
  out.colwise() += at(bias.id).val.col(0);
  int id = push(std::move(out));
  at(id).back = [this, id, input, weight, bias, patches, H, W, k, stride, pad,
                 oh, ow, in_c]() {
    const Mat& dout = at(id).grad;
    at(weight.id).grad += dout * patches->transpose();
    at(bias.id).grad.col(0) += dout.rowwise().sum();
    Mat dpatch = at(weight.id).val.transpose() * dout;
    Mat& dx = at(input.id).grad;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        int col = oy * ow + ox;
        for (int c = 0; c < in_c; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride + ky - pad;
              int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              dx(c, iy * W + ix) += dpatch((c * k + ky) * k + kx, col);
            }
      }
  };
  return {this, id};
}

Var Tape::custom_scalar(Var input,
                        const std::function<double(const Mat&, Mat&)>& fn) {
  auto local = std::make_shared<Mat>(
      Mat::Zero(at(input.id).val.rows(), at(input.id).val.cols()));
  double v = fn(at(input.id).val, *local);
  Mat out(1, 1);
  out(0, 0) = v;
  int id = push(std::move(out));
  at(id).back = [this, id, input, local]() {
    at(input.id).grad += at(id).grad(0, 0) * (*local);
  };
  return {this, id};
}

Var Tape::affine_sum(const std::vector<Var>& vars,
                     const std::vector<double>& ws) {
  if (vars.empty() || vars.size() != ws.size())
    throw std::invalid_argument("affine_sum: size mismatch");
  Mat out = ws[0] * at(vars[0].id).val;
  for (size_t i = 1; i < vars.size(); ++i) out += ws[i] * at(vars[i].id).val;
  int id = push(std::move(out));
  at(id).back = [this, id, vars, ws]() {
    for (size_t i = 0; i < vars.size(); ++i)
      at(vars[i].id).grad += ws[i] * at(id).grad;
  };
  return {this, id};
}

void Tape::backward(Var loss) {
  for (auto& n : nodes_) n->grad.setZero();
  at(loss.id).grad.setOnes();
  for (int i = loss.id; i >= 0; --i)
    if (nodes_[i]->back) nodes_[i]->back();
}

}  // namespace gtd::ad
