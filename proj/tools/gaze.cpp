#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gtd/data_io.hpp"
#include "gtd/image_io.hpp"
#include "gtd/trainer.hpp"
#include "gtd/viz.hpp"

namespace fs = std::filesystem;

namespace {

// exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<gtd::Scene> load_scenes(const std::string& dir) {
  gtd::data::LoadResult lr = gtd::data::load_dataset(dir);
  for (const auto& r : lr.rejects) std::cerr << "rejected: " << r << "\n";
  if (lr.scenes.empty())
    throw std::runtime_error("no valid scenes in dataset: " + dir);
  return lr.scenes;
}

int run_synth(int n, uint64_t seed, const std::string& out,
              const std::string& config) {
  gtd::data::SynthConfig cfg;
  if (!config.empty()) cfg = gtd::data::SynthConfig::from_json(slurp(config));
  cfg.scenes = n;
  cfg.seed = seed;
  gtd::data::generate_synthetic(cfg, out);
  std::cout << "wrote " << n << " scenes to " << out << "\n";
  return 0;
}

int run_train(const std::string& config, const std::string& data,
              const std::string& out, int epochs, int steps, int64_t seed) {
  gtd::ModelConfig cfg;
  if (!config.empty()) cfg = gtd::ModelConfig::from_json(slurp(config));
  if (epochs >= 0) {
    cfg.train.epochs_main = epochs;
    cfg.train.epochs_tail = 0;
  }
  if (steps >= 0) cfg.train.max_steps = steps;
  if (seed >= 0) cfg.train.seed = static_cast<uint64_t>(seed);
  auto scenes = load_scenes(data);
  gtd::Model model(cfg);
  fs::create_directories(out);
  std::ofstream log(fs::path(out) / "train_log.jsonl");
  gtd::train(model, scenes, out, &log);
  std::cout << "final checkpoint: " << (fs::path(out) / "final.ckpt").string()
            << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& pred, const std::string& out) {
  auto scenes = load_scenes(data);
  gtd::metrics::EvalReport rep;
  if (!pred.empty()) {
    std::vector<gtd::ScenePrediction> records;
    for (const auto& s : scenes)
      records.push_back(gtd::read_prediction(pred, s.image_id));
    rep = gtd::report_from_predictions(scenes, records);
  } else {
    gtd::Model model = gtd::load_checkpoint(ckpt);
    rep = gtd::evaluate(model, scenes);
  }
  const std::string text = rep.to_json();
  if (out.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream os(out);
    os << text;
  }
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& data,
              const std::string& out) {
  gtd::Model model = gtd::load_checkpoint(ckpt);
  auto scenes = load_scenes(data);
  for (const auto& s : scenes)
    gtd::write_prediction(out, gtd::infer_scene(model, s));
  std::cout << "wrote predictions for " << scenes.size() << " scenes to " << out
            << "\n";
  return 0;
}

int run_viz(const std::string& pred, const std::string& data,
            const std::string& id, const std::string& out) {
  auto scenes = load_scenes(data);
  const gtd::Scene* scene = nullptr;
  for (const auto& s : scenes)
    if (s.image_id == id) scene = &s;
  if (!scene) throw std::runtime_error("scene not found: " + id);
  gtd::ScenePrediction sp = gtd::read_prediction(pred, id);
  if (sp.heads.empty()) throw std::runtime_error("prediction has no heads");

  gtd::viz::OverlaySpec spec;
  spec.heatmap = sp.heads[0].heatmap;
  for (const auto& h : sp.heads) {
    spec.heatmap = spec.heatmap.cwiseMax(h.heatmap);
    spec.boxes.emplace_back(h.head_bbox, 0);
    if (h.gazed_object) spec.boxes.emplace_back(h.gazed_object->first, 1);
  }
  spec.marker = sp.heads[0].gaze_point;
  gtd::ImageRGB base{scene->pixels_r, scene->pixels_g, scene->pixels_b};
  gtd::ImageRGB overlay = gtd::viz::render_overlay(base, spec);
  gtd::write_ppm(out, overlay);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Object-aware gaze target detection: synthetic data, training, "
      "evaluation, inference and overlays"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  int n = 10;
  uint64_t seed = 0;
  std::string out_dir, config;
  synth->add_option("--n", n, "number of scenes")
      ->default_val(10)
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "RNG seed; identical seeds give identical datasets")
      ->default_val(0);
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  synth->add_option("--config", config, "synthesis config JSON");

  auto* train = app.add_subcommand("train", "Train a model");
  std::string t_config, t_data, t_out;
  int t_epochs = -1, t_steps = -1;
  int64_t t_seed = -1;
  train->add_option("--config", t_config, "model/training config JSON");
  train->add_option("--data", t_data, "dataset directory")->required();
  train->add_option("--out", t_out, "output directory for checkpoints + log")
      ->required();
  train->add_option("--epochs", t_epochs,
                    "override total epochs (default schedule: 80 at lr 1e-4, "
                    "then 20 at lr 1e-5; backbone always at lr/10)");
  train->add_option("--steps", t_steps, "hard cap on optimizer steps");
  train->add_option("--seed", t_seed, "override training seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or predictions");
  std::string e_ckpt, e_data, e_pred, e_out;
  eval->add_option("--ckpt", e_ckpt, "model checkpoint");
  eval->add_option("--data", e_data, "dataset directory")->required();
  eval->add_option("--pred", e_pred,
                   "evaluate existing prediction files instead of a checkpoint");
  eval->add_option("--out", e_out, "report JSON path (default: stdout)");

  auto* infer = app.add_subcommand("infer", "Write per-scene predictions");
  std::string i_ckpt, i_data, i_out;
  infer->add_option("--ckpt", i_ckpt, "model checkpoint")->required();
  infer->add_option("--data", i_data, "dataset directory")->required();
  infer->add_option("--out", i_out, "output prediction directory")->required();

  auto* viz = app.add_subcommand("viz", "Render a heatmap/box overlay");
  std::string v_pred, v_data, v_id, v_out;
  viz->add_option("--pred", v_pred, "prediction directory")->required();
  viz->add_option("--data", v_data, "dataset directory")->required();
  viz->add_option("--id", v_id, "image id to render")->required();
  viz->add_option("--out", v_out, "output PPM path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth(n, seed, out_dir, config);
    if (*train) return run_train(t_config, t_data, t_out, t_epochs, t_steps, t_seed);
    if (*eval) return run_eval(e_ckpt, e_data, e_pred, e_out);
    if (*infer) return run_infer(i_ckpt, i_data, i_out);
    if (*viz) return run_viz(v_pred, v_data, v_id, v_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const std::string msg = e.what();
    return msg.find("non-finite") != std::string::npos ? kExitNumeric : kExitData;
  }
  return 1;
}
