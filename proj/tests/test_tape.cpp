#include <doctest.h>

#include <functional>
#include <random>

#include "gtd/tape.hpp"

using namespace gtd::ad;

namespace {

// Central finite differences of a scalar function of named matrices
// against the analytic gradients from one backward pass.
void check_gradients(std::vector<Mat> inputs,
                     const std::function<Var(Tape&, std::vector<Var>&)>& build,
                     double tol = 1e-6, double h = 1e-6) {
  std::vector<Mat> grads(inputs.size());
  for (size_t k = 0; k < inputs.size(); ++k)
    grads[k] = Mat::Zero(inputs[k].rows(), inputs[k].cols());

  auto eval = [&]() {
    Tape t;
    std::vector<Var> vars;
    for (size_t k = 0; k < inputs.size(); ++k)
      vars.push_back(t.leaf(inputs[k], &grads[k]));
    return build(t, vars).value()(0, 0);
  };

  {
    Tape t;
    std::vector<Var> vars;
    for (size_t k = 0; k < inputs.size(); ++k)
      vars.push_back(t.leaf(inputs[k], &grads[k]));
    Var loss = build(t, vars);
    REQUIRE(loss.value().size() == 1);
    t.backward(loss);
  }

  for (size_t k = 0; k < inputs.size(); ++k)
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k].data()[i];
      inputs[k].data()[i] = saved + h;
      const double up = eval();
      inputs[k].data()[i] = saved - h;
      const double down = eval();
      inputs[k].data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = grads[k].data()[i];
      CHECK(std::abs(fd - an) <= tol * (1.0 + std::abs(fd)));
    }
}

Mat randn(int r, int c, std::mt19937& rng) {
  std::normal_distribution<double> d;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Var sum_all(Tape& t, Var x) {
  // reduce to scalar through matmuls with ones
  Mat lo = Mat::Ones(1, x.value().rows());
  Mat ro = Mat::Ones(x.value().cols(), 1);
  return t.matmul(t.matmul(t.constant(lo), x), t.constant(ro));
}

}  // namespace

TEST_CASE("elementwise + matmul chain gradients") {
  std::mt19937 rng(1);
  check_gradients({randn(3, 4, rng), randn(4, 2, rng)},
                  [](Tape& t, std::vector<Var>& v) {
                    Var y = t.sigmoid(t.matmul(t.relu(v[0]), v[1]));
                    return sum_all(t, t.cmul(y, y));
                  });
}

TEST_CASE("tanh softplus scale add_const gradients") {
  std::mt19937 rng(2);
  check_gradients({randn(2, 5, rng)}, [](Tape& t, std::vector<Var>& v) {
    Var y = t.softplus(t.scale(t.tanh_(v[0]), 1.7));
    return sum_all(t, t.add_const(y, Mat::Constant(2, 5, 0.3)));
  });
}

TEST_CASE("softmax_rows gradient") {
  std::mt19937 rng(3);
  Mat w = randn(3, 4, rng);
  check_gradients({randn(3, 4, rng)}, [w](Tape& t, std::vector<Var>& v) {
    return sum_all(t, t.cmul(t.softmax_rows(v[0]), t.constant(w)));
  });
}

TEST_CASE("masked softmax gradient and exact zeros") {
  std::mt19937 rng(4);
  std::vector<char> mask{0, 1, 0, 1};
  Mat w = randn(2, 4, rng);
  check_gradients({randn(2, 4, rng)}, [w, mask](Tape& t, std::vector<Var>& v) {
    return sum_all(t, t.cmul(t.softmax_rows(v[0], &mask), t.constant(w)));
  });
  Tape t;
  Var sm = t.softmax_rows(t.constant(randn(2, 4, rng)), &mask);
  CHECK(sm.value()(0, 1) == 0.0);
  CHECK(sm.value()(1, 3) == 0.0);
  CHECK(sm.value().row(0).sum() == doctest::Approx(1.0));
  std::vector<char> all{1, 1, 1, 1};
  CHECK_THROWS(t.softmax_rows(t.constant(randn(1, 4, rng)), &all));
}

TEST_CASE("layernorm gradient") {
  std::mt19937 rng(5);
  Mat w = randn(3, 6, rng);
  check_gradients(
      {randn(3, 6, rng), randn(1, 6, rng), randn(1, 6, rng)},
      [w](Tape& t, std::vector<Var>& v) {
        return sum_all(t, t.cmul(t.layernorm_rows(v[0], v[1], v[2]), t.constant(w)));
      },
      1e-5);
}

TEST_CASE("conv2d gradient") {
  std::mt19937 rng(6);
  // 2 input channels on a 6x6 image, 3 output channels, k=3 s=2 p=1
  Mat w = randn(3, 2 * 9, rng);
  Mat b = randn(3, 1, rng);
  Mat x = randn(2, 36, rng);
  Mat mixer = randn(3, 9, rng);
  check_gradients({x, w, b}, [mixer](Tape& t, std::vector<Var>& v) {
    int oh = 0, ow = 0;
    Var y = t.conv2d(v[0], 6, 6, v[1], v[2], 3, 2, 1, &oh, &ow);
    REQUIRE(oh == 3);
    REQUIRE(ow == 3);
    return sum_all(t, t.cmul(t.relu(y), t.constant(mixer)));
  });
}

TEST_CASE("rows cols concat transpose gradients") {
  std::mt19937 rng(7);
  check_gradients({randn(4, 3, rng), randn(2, 3, rng)},
                  [](Tape& t, std::vector<Var>& v) {
                    Var picked = t.rows(v[0], {2, 0});
                    Var joined = t.vconcat({picked, v[1]});    // 4x3
                    Var wide = t.hconcat({joined, t.cols(joined, 0, 2)});
                    Var flipped = t.transpose(wide);           // 5x4
                    return sum_all(t, t.cmul(flipped, flipped));
                  });
  Tape t;
  Var a = t.constant(Mat::Zero(2, 3)), b = t.constant(Mat::Zero(3, 3));
  CHECK_THROWS(t.hconcat({a, b}));
  CHECK_THROWS(t.vconcat({a, t.constant(Mat::Zero(2, 2))}));
}

TEST_CASE("matmul_nt add_row_broadcast sub gradients") {
  std::mt19937 rng(8);
  check_gradients({randn(3, 4, rng), randn(2, 4, rng), randn(1, 2, rng)},
                  [](Tape& t, std::vector<Var>& v) {
                    Var y = t.add_row_broadcast(t.matmul_nt(v[0], v[1]), v[2]);
                    Var z = t.sub(y, t.scale(y, 0.25));
                    return sum_all(t, t.cmul(z, z));
                  });
}

TEST_CASE("custom_scalar and affine_sum gradients") {
  std::mt19937 rng(9);
  check_gradients({randn(1, 4, rng)}, [](Tape& t, std::vector<Var>& v) {
    Var a = t.custom_scalar(v[0], [](const Mat& x, Mat& g) {
      g = 2.0 * x;  // d/dx of sum of squares
      return x.squaredNorm();
    });
    Var b = sum_all(t, t.sigmoid(v[0]));
    return t.affine_sum({a, b}, {0.5, -1.5});
  });
}

TEST_CASE("backward accumulates into external sinks") {
  Mat x = Mat::Constant(1, 1, 2.0);
  Mat g = Mat::Zero(1, 1);
  Tape t;
  Var v = t.leaf(x, &g);
  t.backward(t.cmul(v, v));
  CHECK(g(0, 0) == doctest::Approx(4.0));
  t.backward(t.cmul(v, v));  // second pass accumulates
  CHECK(g(0, 0) == doctest::Approx(8.0));
}
