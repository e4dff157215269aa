#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gtd/grid_io.hpp"
#include "gtd/image_io.hpp"
#include "gtd/scene.hpp"

using namespace gtd;

namespace {

Scene well_formed() {
  Scene s;
  s.image_id = "t";
  s.width = 8;
  s.height = 8;
  s.pixels_r = Mat::Constant(8, 8, 0.5);
  s.pixels_g = Mat::Constant(8, 8, 0.5);
  s.pixels_b = Mat::Constant(8, 8, 0.5);
  s.objects = {{{0.3, 0.3, 0.2, 0.2}, 0}, {{0.7, 0.7, 0.2, 0.2}, 1}};
  GazeAnnotation g;
  g.head_bbox = {0.3, 0.3, 0.2, 0.2};
  g.points = {{0.7, 0.7}};
  g.inside = true;
  s.gazes = {g};
  return s;
}

}  // namespace

TEST_CASE("well-formed scene has no violations") {
  CHECK(validate_scene(well_formed()).empty());
}

TEST_CASE("bbox cx out of range is named") {
  Scene s = well_formed();
  s.objects[1].first.cx = 1.3;
  auto v = validate_scene(s);
  REQUIRE(v.size() >= 1);
  bool names_cx = false;
  for (const auto& msg : v)
    if (msg.find("cx") != std::string::npos) names_cx = true;
  CHECK(names_cx);
}

TEST_CASE("inside=true with empty points is a violation") {
  Scene s = well_formed();
  s.gazes[0].points.clear();
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("inside=false with points is a violation") {
  Scene s = well_formed();
  s.gazes[0].inside = false;
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("gaze head must appear as a head-class object") {
  Scene s = well_formed();
  s.gazes[0].head_bbox.cx = 0.31;
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("validate never throws on weird finite input") {
  Scene s;  // everything empty/zero
  CHECK_NOTHROW(validate_scene(s));
}

TEST_CASE("to_grid_coords corner and boundary cases") {
  CHECK(to_grid_coords(0.0, 0.0, 64) == std::pair<int, int>{0, 0});
  CHECK(to_grid_coords(1.0, 1.0, 64) == std::pair<int, int>{63, 63});
  // floor arithmetic: i from y, j from x
  CHECK(to_grid_coords(0.5, 0.25, 64) == std::pair<int, int>{16, 32});
}

TEST_CASE("to_grid_coords stays in range and rejects bad input") {
  for (double x = 0; x <= 1.0; x += 0.07)
    for (double y = 0; y <= 1.0; y += 0.07) {
      auto [i, j] = to_grid_coords(x, y, 9);
      CHECK(i >= 0);
      CHECK(i < 9);
      CHECK(j >= 0);
      CHECK(j < 9);
    }
  CHECK_THROWS(to_grid_coords(std::nan(""), 0.5, 16));
  CHECK_THROWS(to_grid_coords(0.5, 0.5, 1));
}

TEST_CASE("scene JSON round-trip is bit-exact") {
  Scene s = well_formed();
  s.gazes[0].points.push_back({1.0 / 3.0, 2.0 / 7.0});
  Scene r = scene_from_json(scene_to_json(s));
  CHECK(r.image_id == s.image_id);
  REQUIRE(r.objects.size() == s.objects.size());
  for (size_t k = 0; k < s.objects.size(); ++k) {
    CHECK(r.objects[k].first.cx == s.objects[k].first.cx);
    CHECK(r.objects[k].first.cy == s.objects[k].first.cy);
    CHECK(r.objects[k].first.w == s.objects[k].first.w);
    CHECK(r.objects[k].first.h == s.objects[k].first.h);
    CHECK(r.objects[k].second == s.objects[k].second);
  }
  REQUIRE(r.gazes.size() == 1);
  CHECK(r.gazes[0].points == s.gazes[0].points);
  CHECK(r.gazes[0].inside == s.gazes[0].inside);
}

TEST_CASE("grid files round-trip bit-exactly") {
  Mat g(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j)
      g(i, j) = static_cast<double>(static_cast<float>(0.1 * i + 0.01 * j));
  auto path = (std::filesystem::temp_directory_path() / "t.dgrd").string();
  write_depth_grid(path, g);
  Mat r = read_depth_grid(path);
  REQUIRE(r.rows() == 3);
  REQUIRE(r.cols() == 5);
  CHECK((r - g).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(read_heatmap_grid(path));  // wrong magic
}

TEST_CASE("ppm round-trips after quantization") {
  ImageRGB img;
  img.r = Mat::Constant(4, 6, 37.0 / 255.0);
  img.g = Mat::Constant(4, 6, 0.0);
  img.b = Mat::Constant(4, 6, 1.0);
  auto path = (std::filesystem::temp_directory_path() / "t.ppm").string();
  write_ppm(path, img);
  ImageRGB r = read_ppm(path);
  CHECK((r.r - img.r).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.g - img.g).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.b - img.b).cwiseAbs().maxCoeff() == 0.0);
}
