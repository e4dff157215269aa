#include "gtd/scene.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gtd {

namespace {

bool finite(double v) { return std::isfinite(v); }

void check_bbox(const BBox& b, const std::string& where,
                std::vector<std::string>& out) {
  if (!finite(b.cx) || b.cx < 0.0 || b.cx > 1.0)
    out.push_back(where + ".cx out of [0,1]");
  if (!finite(b.cy) || b.cy < 0.0 || b.cy > 1.0)
    out.push_back(where + ".cy out of [0,1]");
  if (!finite(b.w) || b.w <= 0.0 || b.w > 1.0)
    out.push_back(where + ".w out of (0,1]");
  if (!finite(b.h) || b.h <= 0.0 || b.h > 1.0)
    out.push_back(where + ".h out of (0,1]");
}

}  // namespace

std::vector<std::string> validate_scene(const Scene& scene) {
  std::vector<std::string> v;
  if (scene.width <= 0) v.push_back("width must be positive");
  if (scene.height <= 0) v.push_back("height must be positive");

  auto check_raster = [&](const Mat& m, const std::string& name) {
    if (m.size() == 0) return;
    if (m.rows() != scene.height || m.cols() != scene.width)
      v.push_back(name + " raster shape mismatch");
    if (!m.allFinite() || m.minCoeff() < 0.0 || m.maxCoeff() > 1.0)
      v.push_back(name + " values out of [0,1]");
  };
  check_raster(scene.pixels_r, "pixels_r");
  check_raster(scene.pixels_g, "pixels_g");
  check_raster(scene.pixels_b, "pixels_b");

  if (scene.depth) {
    const Mat& d = *scene.depth;
    if (d.rows() < 1 || d.cols() < 1) v.push_back("depth grid empty");
    else if (!d.allFinite() || d.minCoeff() < 0.0 || d.maxCoeff() > 1.0)
      v.push_back("depth values out of [0,1]");
  }

  for (size_t i = 0; i < scene.objects.size(); ++i) {
    check_bbox(scene.objects[i].first, "objects[" + std::to_string(i) + "].bbox", v);
    if (scene.objects[i].second < 0)
      v.push_back("objects[" + std::to_string(i) + "].label negative");
  }

  for (size_t i = 0; i < scene.gazes.size(); ++i) {
    const auto& g = scene.gazes[i];
    const std::string where = "gazes[" + std::to_string(i) + "]";
    check_bbox(g.head_bbox, where + ".head_bbox", v);
    if (g.inside && g.points.empty())
      v.push_back(where + ".points empty while inside=true");
    if (!g.inside && !g.points.empty())
      v.push_back(where + ".points non-empty while inside=false");
    for (size_t k = 0; k < g.points.size(); ++k) {
      auto [x, y] = g.points[k];
      if (!finite(x) || !finite(y) || x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
        v.push_back(where + ".points[" + std::to_string(k) + "] out of [0,1]^2");
    }
    // Every annotated head must also be an object with the head class (class 0).
    bool found = false;
    for (const auto& [ob, lbl] : scene.objects) {
      if (lbl == 0 && std::abs(ob.cx - g.head_bbox.cx) < 1e-9 &&
          std::abs(ob.cy - g.head_bbox.cy) < 1e-9 &&
          std::abs(ob.w - g.head_bbox.w) < 1e-9 &&
          std::abs(ob.h - g.head_bbox.h) < 1e-9) {
        found = true;
        break;
      }
    }
    if (!found) v.push_back(where + ".head_bbox has no matching head object");
  }
  return v;
}

std::pair<int, int> to_grid_coords(double px, double py, int R) {
  if (!finite(px) || !finite(py))
    throw std::invalid_argument("to_grid_coords: non-finite point");
  if (R < 2) throw std::invalid_argument("to_grid_coords: R must be >= 2");
  auto clampi = [R](int v) { return std::max(0, std::min(R - 1, v)); };
  int i = clampi(static_cast<int>(std::floor(py * R)));
  int j = clampi(static_cast<int>(std::floor(px * R)));
  return {i, j};
}

using json = nlohmann::json;

static json bbox_to_json(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

static BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("bbox must be [cx,cy,w,h]");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["image"] = scene.image_id;
  j["width"] = scene.width;
  j["height"] = scene.height;
  // depth travels as <image_id>.dgrd next to the scene file; the loader
  // resolves it by existence, so the annotation json stays a pure bijection
  json objs = json::array();
  for (const auto& [b, l] : scene.objects)
    objs.push_back({{"bbox", bbox_to_json(b)}, {"label", l}});
  j["objects"] = objs;
  json gazes = json::array();
  for (const auto& g : scene.gazes) {
    json pts = json::array();
    for (auto [x, y] : g.points) pts.push_back(json::array({x, y}));
    gazes.push_back({{"head_bbox", bbox_to_json(g.head_bbox)},
                     {"points", pts},
                     {"inside", g.inside}});
  }
  j["gazes"] = gazes;
  return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
  json j = json::parse(text);
  Scene s;
  s.image_id = j.at("image").get<std::string>();
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  for (const auto& o : j.at("objects"))
    s.objects.emplace_back(bbox_from_json(o.at("bbox")), o.at("label").get<int>());
  for (const auto& g : j.at("gazes")) {
    GazeAnnotation a;
    a.head_bbox = bbox_from_json(g.at("head_bbox"));
    a.inside = g.at("inside").get<bool>();
    for (const auto& p : g.at("points"))
      a.points.emplace_back(p[0].get<double>(), p[1].get<double>());
    s.gazes.push_back(std::move(a));
  }
  return s;
}

}  // namespace gtd
