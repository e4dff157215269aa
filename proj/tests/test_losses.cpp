#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gtd/losses.hpp"

using namespace gtd;
using namespace gtd::losses;

namespace {

double brute_force_cost(const Mat& cost) {
  const int P = static_cast<int>(cost.rows());
  const int G = static_cast<int>(cost.cols());
  std::vector<int> idx(P);
  std::iota(idx.begin(), idx.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (int g = 0; g < G; ++g) s += cost(idx[g], g);
    best = std::min(best, s);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

}  // namespace

TEST_CASE("iou and giou hand cases") {
  BBox unit{0.5, 0.5, 1, 1};                 // corners [0,0]x[1,1]
  BBox shifted{1.5, 1.5, 1, 1};              // corners [1,1]x[2,2]
  BBox big{1.0, 1.0, 2, 2};                  // corners [0,0]x[2,2]
  CHECK(iou(unit, unit) == doctest::Approx(1.0));
  CHECK(iou(unit, shifted) == doctest::Approx(0.0));
  CHECK(giou(unit, unit) == doctest::Approx(1.0));
  // disjoint corner boxes: IoU 0, hull twice the union
  CHECK(giou(unit, shifted) == doctest::Approx(-0.5));
  // nested overlap: inter 1, union 4, hull equals the big box
  CHECK(giou(big, shifted) == doctest::Approx(0.25));
  CHECK(giou(shifted, big) == doctest::Approx(0.25));  // symmetric
  BBox degen{0.5, 0.5, 0, 0.1};
  CHECK_THROWS(giou(unit, degen));
}

TEST_CASE("giou analytic gradient matches finite differences") {
  std::mt19937 rng(0);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::uniform_real_distribution<double> s(0.05, 0.4);
  const double h = 1e-7;
  for (int trial = 0; trial < 50; ++trial) {
    double pred[4] = {u(rng), u(rng), s(rng), s(rng)};
    double gt[4] = {u(rng), u(rng), s(rng), s(rng)};
    double grad[4];
    giou_with_grad(pred, gt, grad);
    for (int k = 0; k < 4; ++k) {
      double save = pred[k], dummy[4];
      pred[k] = save + h;
      double up = giou_with_grad(pred, gt, dummy);
      pred[k] = save - h;
      double down = giou_with_grad(pred, gt, dummy);
      pred[k] = save;
      CHECK(grad[k] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
    }
  }
}

TEST_CASE("l_box of a perfect box is minus lambda_giou") {
  Tape t;
  LossWeights w;
  Mat box(1, 4);
  box << 0.4, 0.6, 0.2, 0.3;
  Var v = l_box(t, t.constant(box), BBox{0.4, 0.6, 0.2, 0.3}, w);
  CHECK(v.value()(0, 0) == doctest::Approx(-2.5));
}

TEST_CASE("l_box finite differences") {
  LossWeights w;
  BBox gt{0.5, 0.5, 0.3, 0.3};
  Mat x(1, 4);
  x << 0.42, 0.57, 0.21, 0.33;
  Mat g = Mat::Zero(1, 4);
  {
    Tape t;
    t.backward(l_box(t, t.leaf(x, &g), gt, w));
  }
  const double h = 1e-7;
  for (int k = 0; k < 4; ++k) {
    auto eval = [&](double v) {
      Mat y = x;
      y(0, k) = v;
      Tape t;
      return l_box(t, t.constant(y), gt, w).value()(0, 0);
    };
    double fd = (eval(x(0, k) + h) - eval(x(0, k) - h)) / (2 * h);
    CHECK(g(0, k) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("l_cls uniform logits and weighting") {
  Tape t;
  Mat z = Mat::Constant(1, 3, 0.7);
  CHECK(l_cls(t, t.constant(z), 1).value()(0, 0) ==
        doctest::Approx(std::log(3.0)));
  CHECK(l_cls(t, t.constant(z), 2, 0.1).value()(0, 0) ==
        doctest::Approx(0.1 * std::log(3.0)));
  CHECK_THROWS(l_cls(t, t.constant(z), 3));
}

TEST_CASE("l_cls gradient matches finite differences") {
  Mat z(1, 5);
  z << 0.3, -1.2, 0.8, 0.0, 2.1;
  Mat g = Mat::Zero(1, 5);
  {
    Tape t;
    t.backward(l_cls(t, t.leaf(z, &g), 2, 0.7));
  }
  const double h = 1e-6;
  for (int k = 0; k < 5; ++k) {
    auto eval = [&](double v) {
      Mat y = z;
      y(0, k) = v;
      Tape t;
      return l_cls(t, t.constant(y), 2, 0.7).value()(0, 0);
    };
    double fd = (eval(z(0, k) + h) - eval(z(0, k) - h)) / (2 * h);
    CHECK(g(0, k) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("l_vec is the euclidean distance with unit gradient") {
  GazeVector gt;
  gt.theta = 1.2;
  gt.phi = -0.4;
  gt.rho = 2.0;
  Mat x(1, 3);
  x << 1.2, -0.4, 3.0;  // only rho off by 1
  Mat g = Mat::Zero(1, 3);
  Tape t;
  Var v = l_vec(t, t.leaf(x, &g), gt);
  CHECK(v.value()(0, 0) == doctest::Approx(1.0));
  t.backward(v);
  CHECK(g(0, 0) == doctest::Approx(0.0));
  CHECK(g(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("l_out values and clamp behavior") {
  Tape t;
  Mat half = Mat::Constant(1, 1, 0.5);
  CHECK(l_out(t, t.constant(half), true).value()(0, 0) ==
        doctest::Approx(std::log(2.0)));
  CHECK(l_out(t, t.constant(half), false).value()(0, 0) ==
        doctest::Approx(std::log(2.0)));
  // saturated inputs clamp to eps: finite value, zero gradient
  Mat zero = Mat::Zero(1, 1), g = Mat::Zero(1, 1);
  Var v = l_out(t, t.leaf(zero, &g), true);
  CHECK(v.value()(0, 0) == doctest::Approx(-std::log(1e-7)));
  t.backward(v);
  CHECK(g(0, 0) == 0.0);
}

TEST_CASE("l_out gradient matches finite differences") {
  for (bool gt_out : {true, false}) {
    Mat p = Mat::Constant(1, 1, 0.37), g = Mat::Zero(1, 1);
    {
      Tape t;
      t.backward(l_out(t, t.leaf(p, &g), gt_out));
    }
    const double h = 1e-7;
    auto eval = [&](double v) {
      Tape t;
      return l_out(t, t.constant(Mat::Constant(1, 1, v)), gt_out).value()(0, 0);
    };
    double fd = (eval(0.37 + h) - eval(0.37 - h)) / (2 * h);
    CHECK(g(0, 0) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("l_heat frobenius norm and lambda") {
  Tape t;
  const int R = 4;
  Mat pred = Mat::Constant(1, R * R, 0.25);
  Mat target = Mat::Zero(R, R);
  // ||0.25 * ones(4x4)||_F = 0.25 * 4 = 1, lambda 2 -> 2
  CHECK(l_heat(t, t.constant(pred), target, 2.0).value()(0, 0) ==
        doctest::Approx(2.0));
  Mat wrong = Mat::Zero(3, 3);
  CHECK_THROWS(l_heat(t, t.constant(pred), wrong, 2.0));
}

TEST_CASE("l_heat gradient matches finite differences") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  const int R = 3;
  Mat pred(1, R * R), target(R, R);
  for (int i = 0; i < R * R; ++i) pred(0, i) = u(rng);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) target(i, j) = u(rng);
  Mat g = Mat::Zero(1, R * R);
  {
    Tape t;
    t.backward(l_heat(t, t.leaf(pred, &g), target, 2.0));
  }
  const double h = 1e-7;
  for (int k = 0; k < R * R; ++k) {
    auto eval = [&](double v) {
      Mat y = pred;
      y(0, k) = v;
      Tape t;
      return l_heat(t, t.constant(y), target, 2.0).value()(0, 0);
    };
    double fd = (eval(pred(0, k) + h) - eval(pred(0, k) - h)) / (2 * h);
    CHECK(g(0, k) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("hungarian hand cases") {
  Mat c(2, 2);
  c << 1, 2, 2, 1;
  Assignment a = hungarian_match(c);
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(a.pairs[1] == std::pair<int, int>{1, 1});
  CHECK(a.total_cost == doctest::Approx(2.0));
  CHECK(a.unmatched.empty());

  // surplus predictions land in unmatched
  Mat tall(4, 2);
  tall << 5, 5, 0, 5, 5, 0, 5, 5;
  Assignment b = hungarian_match(tall);
  CHECK(b.pairs[0] == std::pair<int, int>{1, 0});
  CHECK(b.pairs[1] == std::pair<int, int>{2, 1});
  CHECK(b.unmatched == std::vector<int>{0, 3});

  Mat wide(1, 2);
  CHECK_THROWS(hungarian_match(wide));  // fewer preds than gt
  Mat nanc = Mat::Constant(2, 2, std::nan(""));
  CHECK_THROWS(hungarian_match(nanc));

  Mat nogt(3, 0);
  Assignment e = hungarian_match(nogt);
  CHECK(e.pairs.empty());
  CHECK(e.unmatched == std::vector<int>{0, 1, 2});
}

TEST_CASE("ties break toward the lowest prediction index") {
  Mat c = Mat::Ones(4, 3);  // every assignment is optimal
  Assignment a = hungarian_match(c);
  CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(a.pairs[1] == std::pair<int, int>{1, 1});
  CHECK(a.pairs[2] == std::pair<int, int>{2, 2});
  CHECK(a.unmatched == std::vector<int>{3});
}

TEST_CASE("hungarian matches brute force on random matrices") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const int P = 2 + static_cast<int>(rng() % 5);  // up to 6
    const int G = 1 + static_cast<int>(rng() % P);
    Mat c(P, G);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    Assignment a = hungarian_match(c);
    double got = 0;
    std::vector<char> seen(P, 0);
    for (auto [p, g] : a.pairs) {
      CHECK(!seen[p]);
      seen[p] = 1;
      got += c(p, g);
    }
    CHECK(got == doctest::Approx(brute_force_cost(c)).epsilon(1e-9));
    CHECK(static_cast<int>(a.pairs.size() + a.unmatched.size()) == P);
  }
}

TEST_CASE("matching cost formula") {
  ObjectPrediction p;
  p.bbox = {0.5, 0.5, 0.2, 0.2};
  p.class_probs = {0.7, 0.2, 0.1};
  LossWeights w;
  std::vector<std::pair<BBox, int>> gt = {{{0.5, 0.5, 0.2, 0.2}, 0}};
  Mat c = matching_cost({p}, gt, w);
  // perfect box: l1 0, giou 1 -> cost = -0.7 - 2.5
  CHECK(c(0, 0) == doctest::Approx(-0.7 - 2.5));
}

TEST_CASE("total loss is the weighted sum of the terms") {
  Tape t;
  LossTerms terms;
  terms.cls.push_back(t.constant(Mat::Constant(1, 1, 3.0)));
  terms.vec.push_back(t.constant(Mat::Constant(1, 1, 2.0)));
  terms.out.push_back(t.constant(Mat::Constant(1, 1, 1.0)));
  terms.heat.push_back(t.constant(Mat::Constant(1, 1, 4.0)));
  LossWeights w;
  w.lambda_cls = 2.0;
  w.lambda_vec = 0.5;
  w.lambda_out = 0.0;  // zeroing a lambda removes the term
  auto [total, bd] = total_loss(t, terms, w);
  CHECK(total.value()(0, 0) == doctest::Approx(6.0 + 1.0 + 0.0 + 4.0));
  CHECK(bd.cls == doctest::Approx(6.0));
  CHECK(bd.vec == doctest::Approx(1.0));
  CHECK(bd.out == doctest::Approx(0.0));
  CHECK(bd.heat == doctest::Approx(4.0));
  CHECK(bd.total == doctest::Approx(total.value()(0, 0)));

  LossTerms empty;
  auto [z, zb] = total_loss(t, empty, w);
  CHECK(z.value()(0, 0) == 0.0);
  CHECK(zb.total == 0.0);
}
