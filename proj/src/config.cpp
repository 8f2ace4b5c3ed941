#include "crtbev/config.hpp"

#include <cstdlib>
#include <fstream>

#include "crtbev/io.hpp"

namespace crtbev {

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kMotionAware: return "motion-aware";
    case PipelineMode::kNaiveConcat: return "naive-concat";
    case PipelineMode::kCameraOnly: return "camera-only";
  }
  return "motion-aware";
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "motion-aware") return PipelineMode::kMotionAware;
  if (s == "naive-concat") return PipelineMode::kNaiveConcat;
  if (s == "camera-only") return PipelineMode::kCameraOnly;
  throw ConfigError("mode: must be motion-aware, naive-concat, or camera-only");
}

void RunConfig::validate() const {
  try {
    scene.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (n_sequences < 1) throw ConfigError("n_sequences: must be >= 1");
  if (n_frames < 1) throw ConfigError("n_frames: must be >= 1");
  if (mvf.rca_m < 1) throw ConfigError("mvf.rca_m: must be >= 1");
  if (mvf.tau_p < 0.0 || mvf.tau_p > 1.0) throw ConfigError("mvf.tau_p: must be in [0, 1]");
  if (mvf.dims.channels < 1) throw ConfigError("mvf.channels: must be >= 1");
  if (mvf.dims.depth_bins < 1) throw ConfigError("mvf.depth_bins: must be >= 1");
  if (!(mvf.dims.depth_max > mvf.dims.depth_min))
    throw ConfigError("mvf.depth_max: must exceed mvf.depth_min");
  if (mvf.dims.channels != scene.rig.channels)
    throw ConfigError("mvf.channels: must match scene.rig.channels");
  if (!(mfe.tau_iou > 0.0 && mfe.tau_iou <= 1.0))
    throw ConfigError("mfe.tau_iou: must be in (0, 1]");
  if (mfe.loss.depth < 0 || mfe.loss.seg < 0 || mfe.loss.vel < 0 || mfe.loss.occ < 0)
    throw ConfigError("mfe.lambda: loss weights must be >= 0");
  if (mfe.fit.ridge_lambda < 0.0) throw ConfigError("mfe.fit.ridge_lambda: must be >= 0");
  if (mfe.fit.gd_iterations < 0) throw ConfigError("mfe.fit.gd_iterations: must be >= 0");
  if (mfe.fit.background_keep < 0.0 || mfe.fit.background_keep > 1.0)
    throw ConfigError("mfe.fit.background_keep: must be in [0, 1]");
  if (mgtf.n_history < 0) throw ConfigError("mgtf.n_history: must be >= 0");
  if (!(mgtf.t_s > 0.0)) throw ConfigError("mgtf.t_s: must be > 0");
  if (mgtf.tau_v < 0.0) throw ConfigError("mgtf.tau_v: must be >= 0");
  if (eval.tau_det < 0.0 || eval.tau_det > 1.0)
    throw ConfigError("eval.tau_det: must be in [0, 1]");
  if (eval.nms_radius_cells < 0.0) throw ConfigError("eval.nms_radius_cells: must be >= 0");
  for (std::size_t i = 1; i < eval.eval.distance_thresholds.size(); ++i)
    if (!(eval.eval.distance_thresholds[i] > eval.eval.distance_thresholds[i - 1]))
      throw ConfigError("eval.distance_thresholds: must be increasing");
  if (eval.eval.distance_thresholds.empty())
    throw ConfigError("eval.distance_thresholds: must be non-empty");
  if (workers < 1) throw ConfigError("workers: must be >= 1");
  if (bench_iterations < 1) throw ConfigError("bench_iterations: iterations must be >= 1");
  if (bench_warmup < 0) throw ConfigError("bench_warmup: must be >= 0");
}

RunConfig default_run_config() { return RunConfig{}; }

namespace {

// merge-style reader: every key optional, unknown keys rejected
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + key + ": wrong type");
    }
  }

  bool has(const char* key) {
    seen_.push_back(key);
    return j_.contains(key);
  }

  const nlohmann::json& sub(const char* key) const { return j_.at(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : seen_)
        if (it.key() == k) known = true;
      if (!known) throw ConfigError(path_ + it.key() + ": unknown key");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<const char*> seen_;
};

void read_grid(const nlohmann::json& j, GridSpec& grid, const std::string& path) {
  Reader r(j, path);
  r.get("x_cells", grid.x_cells);
  r.get("y_cells", grid.y_cells);
  r.get("cell_size", grid.cell_size);
  if (r.has("origin")) {
    const auto& o = r.sub("origin");
    if (!o.is_array() || o.size() != 2) throw ConfigError(path + "origin: expected [x, y]");
    grid.origin = {o.at(0).get<double>(), o.at(1).get<double>()};
  }
  r.finish();
}

void read_scene(const nlohmann::json& j, SceneConfig& scene, const std::string& path) {
  Reader r(j, path);
  r.get("n_objects", scene.n_objects);
  r.get("speed_min", scene.speed_min);
  r.get("speed_max", scene.speed_max);
  r.get("static_fraction", scene.static_fraction);
  r.get("radar_points_per_object", scene.radar_points_per_object);
  r.get("clutter_points", scene.clutter_points);
  r.get("radar_sigma", scene.radar_sigma);
  r.get("radar_dropout", scene.radar_dropout);
  r.get("sweeps", scene.sweeps);
  r.get("sweep_dt", scene.sweep_dt);
  r.get("radar_vel_noise", scene.radar_vel_noise);
  r.get("feature_noise", scene.feature_noise);
  r.get("t_s", scene.t_s);
  if (r.has("grid")) read_grid(r.sub("grid"), scene.grid, path + "grid.");
  if (r.has("rig")) {
    Reader rr(r.sub("rig"), path + "rig.");
    rr.get("count", scene.rig.count);
    rr.get("image_w", scene.rig.image_w);
    rr.get("image_h", scene.rig.image_h);
    rr.get("hfov_deg", scene.rig.hfov_deg);
    rr.get("mount_height", scene.rig.mount_height);
    rr.get("channels", scene.rig.channels);
    rr.finish();
  }
  if (r.has("ego")) {
    Reader re(r.sub("ego"), path + "ego.");
    re.get("vx", scene.ego_vx);
    re.get("vy", scene.ego_vy);
    re.get("yaw_rate", scene.ego_yaw_rate);
    re.finish();
  }
  r.finish();
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["n_sequences"] = cfg.n_sequences;
  j["n_frames"] = cfg.n_frames;
  j["mode"] = to_string(cfg.mode);
  j["workers"] = cfg.workers;
  nlohmann::json scene = scene_config_to_json(cfg.scene);
  scene.erase("seed");  // per-sequence seeds derive from the root seed
  j["scene"] = scene;
  j["mvf"] = {{"rca_m", cfg.mvf.rca_m},
              {"tau_p", cfg.mvf.tau_p},
              {"channels", cfg.mvf.dims.channels},
              {"depth_bins", cfg.mvf.dims.depth_bins},
              {"depth_min", cfg.mvf.dims.depth_min},
              {"depth_max", cfg.mvf.dims.depth_max}};
  j["mfe"] = {{"tau_iou", cfg.mfe.tau_iou},
              {"lambda_depth", cfg.mfe.loss.depth},
              {"lambda_seg", cfg.mfe.loss.seg},
              {"lambda_vel", cfg.mfe.loss.vel},
              {"lambda_occ", cfg.mfe.loss.occ},
              {"focal_gamma", cfg.mfe.loss.focal_gamma},
              {"focal_alpha", cfg.mfe.loss.focal_alpha},
              {"fit",
               {{"ridge_lambda", cfg.mfe.fit.ridge_lambda},
                {"gd_iterations", cfg.mfe.fit.gd_iterations},
                {"gd_learning_rate", cfg.mfe.fit.gd_learning_rate},
                {"background_keep", cfg.mfe.fit.background_keep}}}};
  j["mgtf"] = {{"n_history", cfg.mgtf.n_history},
               {"t_s", cfg.mgtf.t_s},
               {"tau_v", cfg.mgtf.tau_v},
               {"gate_mode", cfg.mgtf.gate_mode == GateMode::kSoft ? "soft" : "hard"},
               {"tau_b", cfg.mgtf.tau_b},
               {"static_passthrough", cfg.mgtf.static_passthrough},
               {"gate_both_halves", cfg.mgtf.gate_both_halves},
               {"ego_compensation", cfg.mgtf.ego_compensation}};
  j["eval"] = {{"tau_det", cfg.eval.tau_det},
               {"nms_radius_cells", cfg.eval.nms_radius_cells},
               {"distance_thresholds", cfg.eval.eval.distance_thresholds},
               {"velocity_bins", cfg.eval.eval.bin_edges},
               {"oracle_heads", cfg.eval.oracle_heads}};
  j["bench"] = {{"warmup", cfg.bench_warmup}, {"iterations", cfg.bench_iterations}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  Reader r(j, "");
  r.get("seed", cfg.seed);
  r.get("n_sequences", cfg.n_sequences);
  r.get("n_frames", cfg.n_frames);
  if (r.has("mode")) cfg.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
  r.get("workers", cfg.workers);
  if (r.has("scene")) read_scene(r.sub("scene"), cfg.scene, "scene.");
  if (r.has("mvf")) {
    Reader rm(r.sub("mvf"), "mvf.");
    rm.get("rca_m", cfg.mvf.rca_m);
    rm.get("tau_p", cfg.mvf.tau_p);
    rm.get("channels", cfg.mvf.dims.channels);
    rm.get("depth_bins", cfg.mvf.dims.depth_bins);
    rm.get("depth_min", cfg.mvf.dims.depth_min);
    rm.get("depth_max", cfg.mvf.dims.depth_max);
    rm.finish();
  }
  if (r.has("mfe")) {
    Reader rf(r.sub("mfe"), "mfe.");
    rf.get("tau_iou", cfg.mfe.tau_iou);
    rf.get("lambda_depth", cfg.mfe.loss.depth);
    rf.get("lambda_seg", cfg.mfe.loss.seg);
    rf.get("lambda_vel", cfg.mfe.loss.vel);
    rf.get("lambda_occ", cfg.mfe.loss.occ);
    rf.get("focal_gamma", cfg.mfe.loss.focal_gamma);
    rf.get("focal_alpha", cfg.mfe.loss.focal_alpha);
    if (rf.has("fit")) {
      Reader rfit(rf.sub("fit"), "mfe.fit.");
      rfit.get("ridge_lambda", cfg.mfe.fit.ridge_lambda);
      rfit.get("gd_iterations", cfg.mfe.fit.gd_iterations);
      rfit.get("gd_learning_rate", cfg.mfe.fit.gd_learning_rate);
      rfit.get("background_keep", cfg.mfe.fit.background_keep);
      rfit.finish();
    }
    rf.finish();
  }
  if (r.has("mgtf")) {
    Reader rg(r.sub("mgtf"), "mgtf.");
    rg.get("n_history", cfg.mgtf.n_history);
    rg.get("t_s", cfg.mgtf.t_s);
    rg.get("tau_v", cfg.mgtf.tau_v);
    if (rg.has("gate_mode")) {
      const std::string gm = rg.sub("gate_mode").get<std::string>();
      if (gm == "soft") cfg.mgtf.gate_mode = GateMode::kSoft;
      else if (gm == "hard") cfg.mgtf.gate_mode = GateMode::kHard;
      else throw ConfigError("mgtf.gate_mode: must be soft or hard");
    }
    rg.get("tau_b", cfg.mgtf.tau_b);
    rg.get("static_passthrough", cfg.mgtf.static_passthrough);
    rg.get("gate_both_halves", cfg.mgtf.gate_both_halves);
    rg.get("ego_compensation", cfg.mgtf.ego_compensation);
    rg.finish();
  }
  if (r.has("eval")) {
    Reader re(r.sub("eval"), "eval.");
    re.get("tau_det", cfg.eval.tau_det);
    re.get("nms_radius_cells", cfg.eval.nms_radius_cells);
    re.get("distance_thresholds", cfg.eval.eval.distance_thresholds);
    re.get("velocity_bins", cfg.eval.eval.bin_edges);
    re.get("oracle_heads", cfg.eval.oracle_heads);
    re.finish();
  }
  if (r.has("bench")) {
    Reader rb(r.sub("bench"), "bench.");
    rb.get("warmup", cfg.bench_warmup);
    rb.get("iterations", cfg.bench_iterations);
    rb.finish();
  }
  r.finish();

  // one time base and one root seed; scene values are authoritative
  cfg.scene.seed = cfg.seed;
  cfg.mgtf.t_s = cfg.scene.t_s;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace crtbev
