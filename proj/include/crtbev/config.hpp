#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "crtbev/detect.hpp"
#include "crtbev/mfe.hpp"
#include "crtbev/mgtf.hpp"
#include "crtbev/mvf.hpp"
#include "crtbev/scene.hpp"

namespace crtbev {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PipelineMode { kMotionAware, kNaiveConcat, kCameraOnly };

std::string to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(const std::string& s);

struct MvfConfig {
  int rca_m = 128;     // radar cells matched per image column
  double tau_p = 0.25; // perspective foreground threshold
  MvfDims dims;
};

struct MfeConfig {
  double tau_iou = 0.5;
  LossWeights loss;
  FitOptions fit;
};

struct EvalSettings {
  double tau_det = 0.05;
  double nms_radius_cells = 4.0;
  EvalConfig eval;
  bool oracle_heads = false;  // use GT targets instead of fitted heads
};

// Full run configuration; every field has a default, so {} is a valid
// config document. Unknown keys are rejected with their path.
struct RunConfig {
  std::uint64_t seed = 1;
  int n_sequences = 10;
  int n_frames = 7;  // mgtf.n_history + 1 by default
  SceneConfig scene;
  MvfConfig mvf;
  MfeConfig mfe;
  MgtfConfig mgtf;
  EvalSettings eval;
  PipelineMode mode = PipelineMode::kMotionAware;
  int workers = 1;
  int bench_warmup = 1;
  int bench_iterations = 5;

  void validate() const;  // throws ConfigError with a field path
};

RunConfig default_run_config();
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace crtbev
