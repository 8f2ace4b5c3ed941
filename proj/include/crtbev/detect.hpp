#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "crtbev/geometry.hpp"
#include "crtbev/mfe.hpp"

namespace crtbev {

struct Detection {
  Vec2 center;      // meters
  double score = 0.0;
  Vec2 velocity;    // m/s, read from the motion map at the peak
};

// Occupancy peaks above tau_det with greedy radius suppression (higher score
// wins, ties by ascending linear cell index). Deterministic by construction.
std::vector<Detection> detect(const OccupancyMap& occupancy, const MotionMap& motion,
                              double tau_det, double nms_radius_cells);

struct EvalConfig {
  std::vector<double> distance_thresholds{0.5, 1.0, 2.0, 4.0};
  // speed bin lower edges; the last bin is open-ended
  std::vector<double> bin_edges{0.0, 0.5, 2.0, 5.0, 10.0};
  // reference threshold (meters) for counts and error means
  double reference_threshold = 2.0;
};

int speed_bin(double speed, const std::vector<double>& edges);

struct BinReport {
  double lo = 0.0;
  double hi = 0.0;  // +inf for the open bin
  double ap = 0.0;  // mean over distance thresholds
  int gt_count = 0;
  int matched = 0;
  int missed = 0;
  int false_positives = 0;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> ap_per_threshold;
  double mean_ap = 0.0;
  double center_error_mean = 0.0;    // meters, over reference-threshold matches
  double velocity_error_mean = 0.0;  // m/s, over reference-threshold matches
  int gt_count = 0;
  int matched = 0;
  int missed = 0;
  int false_positives = 0;
  std::vector<BinReport> bins;

  nlohmann::json to_json() const;
};

// One scene's detections and ground truth (objects outside the grid extent
// should already be filtered by the caller).
struct ScenePrediction {
  std::vector<Detection> detections;
  std::vector<GtObject> ground_truth;
};

// Greedy matching by descending score against the nearest unmatched GT
// within each distance threshold; AP by all-point interpolation over the
// pooled detections. Per-bin AP restricts GT by true speed and detections
// by predicted speed.
EvalReport match_and_score(const std::vector<ScenePrediction>& scenes,
                           const EvalConfig& cfg);
EvalReport match_and_score(const std::vector<Detection>& dets,
                           const std::vector<GtObject>& gts, const EvalConfig& cfg);

std::string eval_report_csv(const std::vector<EvalReport>& per_scene,
                            const EvalReport& pooled, const EvalConfig& cfg);

struct CompareReport {
  EvalConfig eval;
  EvalReport motion_aware;
  EvalReport naive_concat;
  std::vector<double> gains;  // per bin, ap_A - ap_B

  std::string table() const;
  std::string csv() const;
  nlohmann::json to_json() const;
};

}  // namespace crtbev
