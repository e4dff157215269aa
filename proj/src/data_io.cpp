#include "gtd/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gtd/grid_io.hpp"
#include "gtd/image_io.hpp"
#include "gtd/losses.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gtd::data {

std::string SynthConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["scenes"] = scenes;
  j["image_size"] = image_size;
  j["grid_res"] = grid_res;
  j["min_objects"] = min_objects;
  j["max_objects"] = max_objects;
  j["min_heads"] = min_heads;
  j["max_heads"] = max_heads;
  j["num_classes"] = num_classes;
  j["gaze_at_object_prob"] = gaze_at_object_prob;
  j["out_of_frame_prob"] = out_of_frame_prob;
  j["depth_mode"] = depth_mode;
  return j.dump(2);
}

SynthConfig SynthConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  SynthConfig c;
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("scenes")) c.scenes = j["scenes"].get<int>();
  if (j.contains("image_size")) c.image_size = j["image_size"].get<int>();
  if (j.contains("grid_res")) c.grid_res = j["grid_res"].get<int>();
  if (j.contains("min_objects")) c.min_objects = j["min_objects"].get<int>();
  if (j.contains("max_objects")) c.max_objects = j["max_objects"].get<int>();
  if (j.contains("min_heads")) c.min_heads = j["min_heads"].get<int>();
  if (j.contains("max_heads")) c.max_heads = j["max_heads"].get<int>();
  if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<int>();
  if (j.contains("gaze_at_object_prob"))
    c.gaze_at_object_prob = j["gaze_at_object_prob"].get<double>();
  if (j.contains("out_of_frame_prob"))
    c.out_of_frame_prob = j["out_of_frame_prob"].get<double>();
  if (j.contains("depth_mode")) c.depth_mode = j["depth_mode"].get<std::string>();
  return c;
}

LoadResult load_dataset(const std::string& dir) {
  LoadResult out;
  const fs::path scenes_dir = fs::path(dir) / "scenes";
  if (!fs::exists(scenes_dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(scenes_dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      std::ifstream is(f);
      std::stringstream ss;
      ss << is.rdbuf();
      Scene s = scene_from_json(ss.str());
      const fs::path img = fs::path(dir) / "images" / (s.image_id + ".ppm");
      if (fs::exists(img)) {
        ImageRGB im = read_ppm(img.string());
        s.pixels_r = im.r;
        s.pixels_g = im.g;
        s.pixels_b = im.b;
      }
      const fs::path dep = fs::path(dir) / "depth" / (s.image_id + ".dgrd");
      if (fs::exists(dep)) s.depth = read_depth_grid(dep.string());
      auto violations = validate_scene(s);
      if (!violations.empty()) {
        for (const auto& v : violations)
          out.rejects.push_back(f.filename().string() + ": " + v);
        continue;
      }
      out.scenes.push_back(std::move(s));
    } catch (const std::exception& e) {
      out.rejects.push_back(f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::string& dir, const std::vector<Scene>& scenes,
                  const std::string& manifest_extra_json) {
  fs::create_directories(fs::path(dir) / "scenes");
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "depth");
  for (const auto& s : scenes) {
    std::ofstream os(fs::path(dir) / "scenes" / (s.image_id + ".json"));
    os << scene_to_json(s);
    if (s.pixels_r.size() > 0) {
      ImageRGB im{s.pixels_r, s.pixels_g, s.pixels_b};
      write_ppm((fs::path(dir) / "images" / (s.image_id + ".ppm")).string(), im);
    }
    if (s.depth)
      write_depth_grid((fs::path(dir) / "depth" / (s.image_id + ".dgrd")).string(),
                       *s.depth);
  }
  json manifest = json::parse(manifest_extra_json);
  manifest["count"] = scenes.size();
  manifest["schema_version"] = 1;
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2);
}

Heatmap gaussian_target(const std::vector<std::pair<double, double>>& gt_points,
                        int R, double sigma_cells) {
  if (gt_points.empty())
    throw std::invalid_argument("gaussian_target: no points");
  if (sigma_cells <= 0)
    throw std::invalid_argument("gaussian_target: sigma must be positive");
  Heatmap h;
  h.grid = Mat::Zero(R, R);
  for (auto [px, py] : gt_points) {
    const double u = px * R, v = py * R;  // continuous cell coordinates
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j) {
        const double dx = u - (j + 0.5), dy = v - (i + 0.5);
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_cells * sigma_cells));
        h.grid(i, j) = std::max(h.grid(i, j), g);
      }
  }
  return h;
}

GazeVector derive_gt_gaze_vector(const BBox& head_bbox,
                                 std::pair<double, double> gt_point, int R,
                                 const std::optional<Mat>& depth) {
  const double dx = (gt_point.first - head_bbox.cx) * R;
  const double dy = -(gt_point.second - head_bbox.cy) * R;  // image y grows downward
  double dz = 0.0;
  if (depth) {
    auto sample = [&](double x, double y) {
      int r = std::min<int>(static_cast<int>(depth->rows()) - 1,
                            std::max(0, static_cast<int>(y * depth->rows())));
      int c = std::min<int>(static_cast<int>(depth->cols()) - 1,
                            std::max(0, static_cast<int>(x * depth->cols())));
      return (*depth)(r, c);
    };
    dz = (sample(gt_point.first, gt_point.second) -
          sample(head_bbox.cx, head_bbox.cy)) * R;
  }
  const double rho = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (rho == 0.0)
    throw std::invalid_argument("derive_gt_gaze_vector: gt point equals head center");
  GazeVector g;
  g.rho = rho;
  g.phi = std::atan2(dy, dx);
  g.theta = depth ? std::acos(std::min(1.0, std::max(-1.0, dz / rho))) : M_PI / 2.0;
  return g;
}

namespace {

struct Palette {
  double r, g, b;
};

Palette class_color(int label) {
  static const Palette table[] = {
      {0.85, 0.65, 0.50},  // head: skin tone
      {0.20, 0.45, 0.85},
      {0.20, 0.75, 0.30},
      {0.85, 0.25, 0.25},
      {0.80, 0.75, 0.20},
      {0.60, 0.30, 0.75},
      {0.25, 0.75, 0.75},
  };
  return table[label % 7];
}

Scene make_scene(const SynthConfig& cfg, int index, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene s;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  s.image_id = buf;
  s.width = s.height = cfg.image_size;
  s.pixels_r = Mat::Constant(cfg.image_size, cfg.image_size, 0.92);
  s.pixels_g = Mat::Constant(cfg.image_size, cfg.image_size, 0.92);
  s.pixels_b = Mat::Constant(cfg.image_size, cfg.image_size, 0.92);

  const int n_heads = cfg.min_heads +
      static_cast<int>(unit(rng) * (cfg.max_heads - cfg.min_heads + 1)) % (cfg.max_heads - cfg.min_heads + 1);
  const int n_objects = cfg.min_objects +
      static_cast<int>(unit(rng) * (cfg.max_objects - cfg.min_objects + 1)) % (cfg.max_objects - cfg.min_objects + 1);

  auto overlaps = [&](const BBox& b) {
    for (const auto& [ob, lbl] : s.objects)
      if (losses::iou(b, ob) > 0.0) return true;
    return false;
  };
  auto place = [&](int label) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      BBox b;
      b.w = 0.12 + 0.15 * unit(rng);
      b.h = 0.12 + 0.15 * unit(rng);
      b.cx = b.w / 2 + 0.02 + (0.96 - b.w) * unit(rng);
      b.cy = b.h / 2 + 0.02 + (0.96 - b.h) * unit(rng);
      if (!overlaps(b)) {
        s.objects.emplace_back(b, label);
        return;
      }
    }
    throw std::runtime_error("generate_synthetic: infeasible packing");
  };

  for (int i = 0; i < n_heads; ++i) place(0);
  std::uniform_int_distribution<int> cls(1, std::max(1, cfg.num_classes - 2));
  for (int i = 0; i < n_objects; ++i) place(cls(rng));

  // render rectangles
  for (const auto& [b, lbl] : s.objects) {
    Palette c = class_color(lbl);
    int x0 = std::max(0, static_cast<int>((b.cx - b.w / 2) * cfg.image_size));
    int x1 = std::min(cfg.image_size - 1,
                      static_cast<int>((b.cx + b.w / 2) * cfg.image_size));
    int y0 = std::max(0, static_cast<int>((b.cy - b.h / 2) * cfg.image_size));
    int y1 = std::min(cfg.image_size - 1,
                      static_cast<int>((b.cy + b.h / 2) * cfg.image_size));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        s.pixels_r(y, x) = c.r;
        s.pixels_g(y, x) = c.g;
        s.pixels_b(y, x) = c.b;
      }
  }

  // depth
  Mat depth = Mat::Constant(cfg.image_size, cfg.image_size, 0.95);
  if (cfg.depth_mode == "layered") {
    for (size_t k = 0; k < s.objects.size(); ++k) {
      const auto& [b, lbl] = s.objects[k];
      double dv = static_cast<double>(
          static_cast<float>(0.1 + 0.7 * k / std::max<size_t>(1, s.objects.size() - 1)));
      int x0 = std::max(0, static_cast<int>((b.cx - b.w / 2) * cfg.image_size));
      int x1 = std::min(cfg.image_size - 1,
                        static_cast<int>((b.cx + b.w / 2) * cfg.image_size));
      int y0 = std::max(0, static_cast<int>((b.cy - b.h / 2) * cfg.image_size));
      int y1 = std::min(cfg.image_size - 1,
                        static_cast<int>((b.cy + b.h / 2) * cfg.image_size));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) depth(y, x) = dv;
    }
  } else {
    depth.setConstant(0.5);
  }
  // keep values exactly representable in float32 so grid files round-trip
  for (int y = 0; y < cfg.image_size; ++y)
    for (int x = 0; x < cfg.image_size; ++x)
      depth(y, x) = static_cast<double>(static_cast<float>(depth(y, x)));
  s.depth = depth;

  // quantize pixels to the 8-bit raster so save/load round-trips bit-exactly
  auto quantize = [](Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = std::lround(m.data()[i] * 255.0) / 255.0;
  };
  quantize(s.pixels_r);
  quantize(s.pixels_g);
  quantize(s.pixels_b);

  // gazes for every head object
  std::vector<int> non_head;
  for (size_t k = 0; k < s.objects.size(); ++k)
    if (s.objects[k].second != 0) non_head.push_back(static_cast<int>(k));
  for (size_t k = 0; k < s.objects.size(); ++k) {
    if (s.objects[k].second != 0) continue;
    GazeAnnotation ga;
    ga.head_bbox = s.objects[k].first;
    if (unit(rng) < cfg.out_of_frame_prob) {
      ga.inside = false;
    } else {
      ga.inside = true;
      std::pair<double, double> pt;
      if (!non_head.empty() && unit(rng) < cfg.gaze_at_object_prob) {
        int pick = non_head[static_cast<int>(unit(rng) * non_head.size()) %
                            non_head.size()];
        pt = {s.objects[pick].first.cx, s.objects[pick].first.cy};
      } else {
        pt = {0.05 + 0.9 * unit(rng), 0.05 + 0.9 * unit(rng)};
      }
      ga.points.push_back(pt);
    }
    s.gazes.push_back(std::move(ga));
  }
  return s;
}

}  // namespace

void generate_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
  if (cfg.scenes < 1) throw std::invalid_argument("generate_synthetic: scenes >= 1");
  if (cfg.min_heads < 1 || cfg.min_objects < 0)
    throw std::invalid_argument("generate_synthetic: bad counts");
  std::vector<Scene> scenes;
  for (int i = 0; i < cfg.scenes; ++i) {
    std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(i));
    scenes.push_back(make_scene(cfg, i, rng));
  }
  json extra;
  extra["seed"] = cfg.seed;
  extra["config"] = json::parse(cfg.to_json());
  save_dataset(out_dir, scenes, extra.dump());
}

}  // namespace gtd::data
