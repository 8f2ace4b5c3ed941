#include "crtbev/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace crtbev {

std::vector<Detection> detect(const OccupancyMap& occupancy, const MotionMap& motion,
                              double tau_det, double nms_radius_cells) {
  if (occupancy.channels != 1 || motion.channels != 2 ||
      !occupancy.spec.same_geometry(motion.spec))
    throw std::invalid_argument("detect: occupancy/motion shape mismatch");
  if (tau_det < 0.0 || tau_det > 1.0)
    throw std::invalid_argument("detect: tau_det must be in [0, 1]");

  const GridSpec& spec = occupancy.spec;
  struct Peak {
    double score;
    int x, y;
  };
  std::vector<Peak> peaks;
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      const double s = occupancy.at(0, x, y);
      if (s < tau_det) continue;
      bool is_peak = true;
      for (int dx = -1; dx <= 1 && is_peak; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx, yy = y + dy;
          if (!spec.contains(xx, yy)) continue;
          if (occupancy.at(0, xx, yy) > s) {
            is_peak = false;
            break;
          }
        }
      }
      if (is_peak) peaks.push_back({s, x, y});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [&](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    return spec.linear_index(a.x, a.y) < spec.linear_index(b.x, b.y);
  });

  std::vector<Detection> out;
  std::vector<Peak> kept;
  const double r2 = nms_radius_cells * nms_radius_cells;
  for (const Peak& p : peaks) {
    bool suppressed = false;
    for (const Peak& k : kept) {
      const double dx = p.x - k.x, dy = p.y - k.y;
      if (dx * dx + dy * dy <= r2) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    kept.push_back(p);
    Detection det;
    det.center = spec.cell_center(p.x, p.y);
    det.score = p.score;
    det.velocity = {motion.at(0, p.x, p.y), motion.at(1, p.x, p.y)};
    out.push_back(det);
  }
  return out;
}

int speed_bin(double speed, const std::vector<double>& edges) {
  int bin = 0;
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (speed >= edges[i]) bin = static_cast<int>(i);
  return bin;
}

namespace {

struct RankedDet {
  double score;
  int scene;
  int index;
  Vec2 center;
  double pred_speed;
};

// all-point interpolated area under the precision-recall curve
double average_precision(std::vector<std::pair<double, bool>> scored, int gt_count) {
  if (gt_count == 0) return 0.0;
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& [score, is_tp] : scored) {
    (void)score;
    is_tp ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / gt_count);
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

// matches[i] = GT index or -1, for one scene at one distance threshold
std::vector<int> greedy_match(const std::vector<Detection>& dets,
                              const std::vector<GtObject>& gts, double threshold) {
  std::vector<int> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<int> matches(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (const int di : order) {
    double best = threshold;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double d = (dets[di].center - gts[g].center.xy()).norm();
      if (d < best || (d == best && best_gt == -1)) {
        best = d;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      matches[di] = best_gt;
      taken[best_gt] = true;
    }
  }
  return matches;
}

}  // namespace

EvalReport match_and_score(const std::vector<ScenePrediction>& scenes,
                           const EvalConfig& cfg) {
  for (std::size_t i = 1; i < cfg.distance_thresholds.size(); ++i)
    if (!(cfg.distance_thresholds[i] > cfg.distance_thresholds[i - 1]))
      throw std::invalid_argument("match_and_score: thresholds must be increasing");

  EvalReport report;
  report.thresholds = cfg.distance_thresholds;
  const int n_bins = static_cast<int>(cfg.bin_edges.size());
  report.bins.resize(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    report.bins[b].lo = cfg.bin_edges[b];
    report.bins[b].hi = b + 1 < n_bins ? cfg.bin_edges[b + 1]
                                       : std::numeric_limits<double>::infinity();
  }
  for (const ScenePrediction& scene : scenes) {
    report.gt_count += static_cast<int>(scene.ground_truth.size());
    for (const GtObject& gt : scene.ground_truth)
      ++report.bins[speed_bin(gt.speed(), cfg.bin_edges)].gt_count;
  }

  std::vector<double> bin_ap_sum(n_bins, 0.0);
  for (const double threshold : cfg.distance_thresholds) {
    std::vector<std::pair<double, bool>> pooled;
    std::vector<std::vector<std::pair<double, bool>>> per_bin(n_bins);
    std::vector<int> bin_gt(n_bins, 0);
    for (int b = 0; b < n_bins; ++b) bin_gt[b] = report.bins[b].gt_count;

    const bool is_reference = threshold == cfg.reference_threshold;
    double center_err_sum = 0.0, vel_err_sum = 0.0;
    int ref_matched = 0, ref_false = 0;
    std::vector<int> ref_bin_matched(n_bins, 0), ref_bin_false(n_bins, 0);

    for (const ScenePrediction& scene : scenes) {
      const std::vector<int> matches = greedy_match(scene.detections,
                                                    scene.ground_truth, threshold);
      for (std::size_t i = 0; i < scene.detections.size(); ++i) {
        const Detection& det = scene.detections[i];
        const bool is_tp = matches[i] >= 0;
        pooled.push_back({det.score, is_tp});
        // subset protocol: TPs land in their matched GT's speed bin, while
        // unmatched detections count as false positives against every bin
        if (is_tp) {
          const int bin =
              speed_bin(scene.ground_truth[matches[i]].speed(), cfg.bin_edges);
          per_bin[bin].push_back({det.score, true});
          if (is_reference) {
            const GtObject& gt = scene.ground_truth[matches[i]];
            center_err_sum += (det.center - gt.center.xy()).norm();
            vel_err_sum += (det.velocity - gt.velocity).norm();
            ++ref_matched;
            ++ref_bin_matched[bin];
          }
        } else {
          for (int b = 0; b < n_bins; ++b) per_bin[b].push_back({det.score, false});
          if (is_reference) {
            ++ref_false;
            for (int b = 0; b < n_bins; ++b) ++ref_bin_false[b];
          }
        }
      }
    }
    report.ap_per_threshold.push_back(average_precision(pooled, report.gt_count));
    for (int b = 0; b < n_bins; ++b)
      bin_ap_sum[b] += average_precision(per_bin[b], bin_gt[b]);

    if (is_reference) {
      report.matched = ref_matched;
      report.missed = report.gt_count - ref_matched;
      report.false_positives = ref_false;
      report.center_error_mean = ref_matched ? center_err_sum / ref_matched : 0.0;
      report.velocity_error_mean = ref_matched ? vel_err_sum / ref_matched : 0.0;
      for (int b = 0; b < n_bins; ++b) {
        report.bins[b].matched = ref_bin_matched[b];
        report.bins[b].missed = report.bins[b].gt_count - ref_bin_matched[b];
        report.bins[b].false_positives = ref_bin_false[b];
      }
    }
  }

  double ap_sum = 0.0;
  for (const double ap : report.ap_per_threshold) ap_sum += ap;
  report.mean_ap = ap_sum / report.ap_per_threshold.size();
  for (int b = 0; b < n_bins; ++b)
    report.bins[b].ap = bin_ap_sum[b] / report.ap_per_threshold.size();
  return report;
}

EvalReport match_and_score(const std::vector<Detection>& dets,
                           const std::vector<GtObject>& gts, const EvalConfig& cfg) {
  return match_and_score(std::vector<ScenePrediction>{{dets, gts}}, cfg);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["thresholds"] = thresholds;
  j["ap_per_threshold"] = ap_per_threshold;
  j["mean_ap"] = mean_ap;
  j["center_error_mean"] = center_error_mean;
  j["velocity_error_mean"] = velocity_error_mean;
  j["gt_count"] = gt_count;
  j["matched"] = matched;
  j["missed"] = missed;
  j["false_positives"] = false_positives;
  nlohmann::json jb = nlohmann::json::array();
  for (const BinReport& b : bins) {
    jb.push_back({{"lo", b.lo},
                  {"hi", std::isfinite(b.hi) ? nlohmann::json(b.hi) : nlohmann::json()},
                  {"ap", b.ap},
                  {"gt_count", b.gt_count},
                  {"matched", b.matched},
                  {"missed", b.missed},
                  {"false_positives", b.false_positives}});
  }
  j["bins"] = jb;
  return j;
}

namespace {

std::string bin_label(const BinReport& b) {
  std::ostringstream os;
  os << "[" << b.lo << "," << (std::isfinite(b.hi) ? std::to_string(b.hi) : "inf") << ")";
  return os.str();
}

}  // namespace

std::string eval_report_csv(const std::vector<EvalReport>& per_scene,
                            const EvalReport& pooled, const EvalConfig& cfg) {
  std::ostringstream os;
  os << "scene_id,bin,threshold,ap,center_err,vel_err\n";
  const auto emit = [&](const std::string& id, const EvalReport& r) {
    for (std::size_t t = 0; t < cfg.distance_thresholds.size(); ++t) {
      os << id << ",all," << cfg.distance_thresholds[t] << ',' << r.ap_per_threshold[t]
         << ',' << r.center_error_mean << ',' << r.velocity_error_mean << '\n';
    }
    for (const BinReport& b : r.bins) {
      os << id << ',' << bin_label(b) << ",mean," << b.ap << ','
         << r.center_error_mean << ',' << r.velocity_error_mean << '\n';
    }
  };
  for (std::size_t s = 0; s < per_scene.size(); ++s)
    emit("seq_" + std::to_string(s), per_scene[s]);
  emit("ALL", pooled);
  return os.str();
}

std::string CompareReport::table() const {
  std::ostringstream os;
  os << "bin            AP(motion-aware)  AP(naive-concat)  gain\n";
  for (std::size_t b = 0; b < gains.size(); ++b) {
    os << bin_label(motion_aware.bins[b]) << "\t" << motion_aware.bins[b].ap << "\t"
       << naive_concat.bins[b].ap << "\t" << gains[b] << "\n";
  }
  os << "overall\t" << motion_aware.mean_ap << "\t" << naive_concat.mean_ap << "\t"
     << motion_aware.mean_ap - naive_concat.mean_ap << "\n";
  return os.str();
}

std::string CompareReport::csv() const {
  std::ostringstream os;
  os << "bin,ap_motion_aware,ap_naive_concat,gain\n";
  for (std::size_t b = 0; b < gains.size(); ++b) {
    os << bin_label(motion_aware.bins[b]) << ',' << motion_aware.bins[b].ap << ','
       << naive_concat.bins[b].ap << ',' << gains[b] << '\n';
  }
  os << "overall," << motion_aware.mean_ap << ',' << naive_concat.mean_ap << ','
     << motion_aware.mean_ap - naive_concat.mean_ap << '\n';
  return os.str();
}

nlohmann::json CompareReport::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["motion_aware"] = motion_aware.to_json();
  j["naive_concat"] = naive_concat.to_json();
  j["gains"] = gains;
  return j;
}

}  // namespace crtbev
