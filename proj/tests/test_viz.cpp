#include <doctest.h>

#include <random>

#include "gtd/viz.hpp"

using namespace gtd;
using namespace gtd::viz;

namespace {

ImageRGB gray(int h, int w, double v) {
  ImageRGB img;
  img.r = Mat::Constant(h, w, v);
  img.g = Mat::Constant(h, w, v);
  img.b = Mat::Constant(h, w, v);
  return img;
}

}  // namespace

TEST_CASE("upscaling a constant grid stays constant") {
  Mat grid = Mat::Constant(4, 4, 0.37);
  Mat up = bilinear_upscale(grid, 32, 32);
  REQUIRE(up.rows() == 32);
  REQUIRE(up.cols() == 32);
  CHECK(up.minCoeff() == doctest::Approx(0.37));
  CHECK(up.maxCoeff() == doctest::Approx(0.37));
}

TEST_CASE("upscaling preserves the value range and cell centers") {
  Mat grid = Mat::Zero(4, 4);
  grid(1, 2) = 1.0;
  Mat up = bilinear_upscale(grid, 16, 16);
  CHECK(up.minCoeff() >= 0.0);
  CHECK(up.maxCoeff() <= 1.0);
  // nearest pixel to the hot cell: sample coords (1.125, 2.125), so the
  // bilinear weight on cell (1,2) is 0.875^2
  CHECK(up(6, 10) == doctest::Approx(0.875 * 0.875));
  CHECK(up.maxCoeff() == doctest::Approx(0.875 * 0.875));
  // far corner stays zero
  CHECK(up(15, 0) == doctest::Approx(0.0));
}

TEST_CASE("identity-size upscale reproduces the grid") {
  std::mt19937 rng(0);
  std::uniform_real_distribution<double> u(0, 1);
  Mat grid(5, 7);
  for (Eigen::Index i = 0; i < grid.size(); ++i) grid.data()[i] = u(rng);
  Mat same = bilinear_upscale(grid, 5, 7);
  CHECK((same - grid).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero heatmap leaves base pixels untouched") {
  ImageRGB base = gray(16, 16, 0.6);
  OverlaySpec spec;
  spec.heatmap = Mat::Zero(8, 8);
  ImageRGB out = render_overlay(base, spec);
  CHECK((out.r - base.r).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.g - base.g).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.b - base.b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hot heatmap tints pixels and respects alpha") {
  ImageRGB base = gray(16, 16, 0.5);
  OverlaySpec spec;
  spec.heatmap = Mat::Ones(8, 8);
  spec.alpha = 0.4;
  ImageRGB out = render_overlay(base, spec);
  // every pixel moved, and no channel left [0, 1]
  CHECK((out.r - base.r).cwiseAbs().maxCoeff() > 0.0);
  CHECK(out.r.minCoeff() >= 0.0);
  CHECK(out.r.maxCoeff() <= 1.0);
  // alpha 0 disables the blend entirely
  spec.alpha = 0.0;
  ImageRGB off = render_overlay(base, spec);
  CHECK((off.r - base.r).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rendering is deterministic") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  ImageRGB base = gray(24, 24, 0.3);
  OverlaySpec spec;
  spec.heatmap = Mat(8, 8);
  for (Eigen::Index i = 0; i < spec.heatmap.size(); ++i)
    spec.heatmap.data()[i] = u(rng);
  spec.boxes = {{{0.4, 0.4, 0.3, 0.3}, 0}, {{0.7, 0.7, 0.2, 0.2}, 1}};
  spec.marker = {{0.5, 0.5}};
  ImageRGB a = render_overlay(base, spec);
  ImageRGB b = render_overlay(base, spec);
  CHECK(a.r == b.r);
  CHECK(a.g == b.g);
  CHECK(a.b == b.b);
}

TEST_CASE("boxes draw one-pixel outlines, not fills") {
  ImageRGB base = gray(32, 32, 0.5);
  OverlaySpec spec;
  spec.heatmap = Mat::Zero(8, 8);
  spec.boxes = {{{0.5, 0.5, 0.5, 0.5}, 0}};  // pixels 8..23 square
  ImageRGB out = render_overlay(base, spec);
  // border pixel changed, interior pixel untouched
  bool edge_changed = out.r(8, 16) != 0.5 || out.g(8, 16) != 0.5 ||
                      out.b(8, 16) != 0.5;
  CHECK(edge_changed);
  CHECK(out.r(16, 16) == 0.5);
  CHECK(out.g(16, 16) == 0.5);
  CHECK(out.b(16, 16) == 0.5);
}

TEST_CASE("marker paints a white cross at the gaze point") {
  ImageRGB base = gray(32, 32, 0.0);
  OverlaySpec spec;
  spec.heatmap = Mat::Zero(8, 8);
  spec.marker = {{0.5, 0.5}};
  ImageRGB out = render_overlay(base, spec);
  CHECK(out.r(16, 16) == 1.0);
  CHECK(out.g(16, 16) == 1.0);
  CHECK(out.b(16, 16) == 1.0);
  CHECK(out.r(16, 13) == 1.0);  // horizontal arm
  CHECK(out.r(13, 16) == 1.0);  // vertical arm
  CHECK(out.r(14, 14) == 0.0);  // diagonal stays dark
}
