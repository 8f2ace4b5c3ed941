#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crtbev/detect.hpp"
#include "crtbev/rng.hpp"
#include "oracles.hpp"

using namespace crtbev;

namespace {

const GridSpec kSpec{16, 16, 0.5, {-4.0, -4.0}};

GtObject gt_at(double x, double y, Vec2 vel = {0, 0}) {
  GtObject obj;
  obj.center = {x, y, 0.75};
  obj.dims = {2.0, 1.0, 1.5};
  obj.velocity = vel;
  return obj;
}

Detection det_at(double x, double y, double score, Vec2 vel = {0, 0}) {
  Detection d;
  d.center = {x, y};
  d.score = score;
  d.velocity = vel;
  return d;
}

}  // namespace

TEST_SUITE_BEGIN("detect");

TEST_CASE("detect: zero occupancy yields no detections") {
  const OccupancyMap occ(kSpec, 1);
  const MotionMap motion(kSpec, 2);
  CHECK(detect(occ, motion, 0.5, 2.0).empty());
}

TEST_CASE("detect: a single peak becomes one detection at the cell center") {
  OccupancyMap occ(kSpec, 1);
  occ.at(0, 5, 9) = 0.9;
  MotionMap motion(kSpec, 2);
  motion.at(0, 5, 9) = 2.5;
  motion.at(1, 5, 9) = -1.0;
  const std::vector<Detection> dets = detect(occ, motion, 0.5, 2.0);
  REQUIRE(dets.size() == 1);
  const Vec2 center = kSpec.cell_center(5, 9);
  CHECK(dets[0].center.x == center.x);
  CHECK(dets[0].center.y == center.y);
  CHECK(dets[0].score == 0.9);
  CHECK(dets[0].velocity.x == 2.5);
  CHECK(dets[0].velocity.y == -1.0);
}

TEST_CASE("detect: the higher of two close peaks survives suppression") {
  OccupancyMap occ(kSpec, 1);
  occ.at(0, 5, 5) = 0.7;
  occ.at(0, 7, 5) = 0.9;  // 2 cells away
  const MotionMap motion(kSpec, 2);
  const std::vector<Detection> dets = detect(occ, motion, 0.5, 3.0);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].score == 0.9);
  // beyond the radius both survive
  const std::vector<Detection> loose = detect(occ, motion, 0.5, 1.5);
  CHECK(loose.size() == 2);
}

TEST_CASE("detect: matches an exhaustive greedy suppression oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    OccupancyMap occ(kSpec, 1);
    MotionMap motion(kSpec, 2);
    for (double& v : occ.data) v = rng.uniform();
    const double radius = rng.uniform(1.0, 4.0);
    const std::vector<Detection> dets = detect(occ, motion, 0.3, radius);

    // independent peak + greedy suppression pass
    struct Peak {
      double s;
      int x, y;
    };
    std::vector<Peak> peaks;
    for (int x = 0; x < kSpec.x_cells; ++x) {
      for (int y = 0; y < kSpec.y_cells; ++y) {
        const double s = occ.at(0, x, y);
        if (s < 0.3) continue;
        bool top = true;
        for (int dx = -1; dx <= 1; ++dx)
          for (int dy = -1; dy <= 1; ++dy) {
            if (!dx && !dy) continue;
            if (kSpec.contains(x + dx, y + dy) && occ.at(0, x + dx, y + dy) > s)
              top = false;
          }
        if (top) peaks.push_back({s, x, y});
      }
    }
    std::stable_sort(peaks.begin(), peaks.end(), [&](const Peak& a, const Peak& b) {
      if (a.s != b.s) return a.s > b.s;
      return kSpec.linear_index(a.x, a.y) < kSpec.linear_index(b.x, b.y);
    });
    std::vector<Peak> kept;
    for (const Peak& p : peaks) {
      bool ok = true;
      for (const Peak& k : kept) {
        const double dx = p.x - k.x, dy = p.y - k.y;
        if (dx * dx + dy * dy <= radius * radius) ok = false;
      }
      if (ok) kept.push_back(p);
    }
    REQUIRE(dets.size() == kept.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const Vec2 c = kSpec.cell_center(kept[i].x, kept[i].y);
      CHECK(dets[i].center.x == c.x);
      CHECK(dets[i].center.y == c.y);
    }
  }
}

TEST_CASE("detect: plateau ties break by ascending linear index") {
  OccupancyMap occ(kSpec, 1);
  occ.at(0, 4, 4) = 0.8;
  occ.at(0, 4, 5) = 0.8;  // same score, adjacent
  const MotionMap motion(kSpec, 2);
  const std::vector<Detection> dets = detect(occ, motion, 0.5, 2.0);
  REQUIRE(dets.size() == 1);
  const Vec2 c = kSpec.cell_center(4, 4);
  CHECK(dets[0].center.x == c.x);
  CHECK(dets[0].center.y == c.y);
}

TEST_CASE("detect: tau_det outside [0, 1] is rejected") {
  const OccupancyMap occ(kSpec, 1);
  const MotionMap motion(kSpec, 2);
  CHECK_THROWS_AS(detect(occ, motion, -0.1, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(detect(occ, motion, 1.1, 2.0), std::invalid_argument);
}

TEST_CASE("match_and_score: perfect detections score AP 1 at every threshold") {
  const std::vector<GtObject> gts{gt_at(0, 0), gt_at(3, 1), gt_at(-2, 2)};
  std::vector<Detection> dets;
  for (const GtObject& g : gts) dets.push_back(det_at(g.center.x, g.center.y, 1.0));
  const EvalReport report = match_and_score(dets, gts, EvalConfig{});
  for (const double ap : report.ap_per_threshold) CHECK(ap == doctest::Approx(1.0));
  CHECK(report.matched == 3);
  CHECK(report.missed == 0);
  CHECK(report.false_positives == 0);
  CHECK(report.center_error_mean == doctest::Approx(0.0));
}

TEST_CASE("match_and_score: no detections means AP 0 and everything missed") {
  const std::vector<GtObject> gts{gt_at(0, 0), gt_at(3, 1)};
  const EvalReport report = match_and_score({}, gts, EvalConfig{});
  for (const double ap : report.ap_per_threshold) CHECK(ap == 0.0);
  CHECK(report.matched == 0);
  CHECK(report.missed == 2);
}

TEST_CASE("match_and_score: a lower-scored far false positive keeps AP 1") {
  // hand PR curve: TP at score 0.9 reaches recall 1 before the FP at 0.8
  const std::vector<GtObject> gts{gt_at(0, 0)};
  const std::vector<Detection> dets{det_at(0.1, 0.0, 0.9), det_at(30.0, 30.0, 0.8)};
  const EvalReport report = match_and_score(dets, gts, EvalConfig{});
  for (const double ap : report.ap_per_threshold) CHECK(ap == doctest::Approx(1.0));
  CHECK(report.false_positives == 1);
}

TEST_CASE("match_and_score: AP is monotone in the distance threshold") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<GtObject> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 6; ++i)
      gts.push_back(gt_at(rng.uniform(-8, 8), rng.uniform(-8, 8)));
    for (int i = 0; i < 8; ++i) {
      // detections scattered near (or not so near) the GT objects
      const GtObject& g = gts[rng.below(gts.size())];
      dets.push_back(det_at(g.center.x + rng.normal(0, 1.2),
                            g.center.y + rng.normal(0, 1.2), rng.uniform()));
    }
    const EvalReport report = match_and_score(dets, gts, EvalConfig{});
    for (std::size_t t = 1; t < report.ap_per_threshold.size(); ++t)
      CHECK(report.ap_per_threshold[t] >= report.ap_per_threshold[t - 1] - 1e-12);
  }
}

TEST_CASE("match_and_score: per-bin AP separates speeds") {
  EvalConfig cfg;
  const std::vector<GtObject> gts{gt_at(0, 0, {0, 0}), gt_at(4, 0, {3, 0}),
                                  gt_at(-4, 0, {12, 0})};
  std::vector<Detection> dets;
  for (const GtObject& g : gts)
    dets.push_back(det_at(g.center.x, g.center.y, 1.0, g.velocity));
  const EvalReport report = match_and_score(dets, gts, cfg);
  REQUIRE(report.bins.size() == 5);
  CHECK(report.bins[0].gt_count == 1);  // static
  CHECK(report.bins[2].gt_count == 1);  // [2, 5)
  CHECK(report.bins[4].gt_count == 1);  // [10, inf)
  CHECK(report.bins[0].ap == doctest::Approx(1.0));
  CHECK(report.bins[2].ap == doctest::Approx(1.0));
  CHECK(report.bins[4].ap == doctest::Approx(1.0));
  CHECK(report.bins[1].gt_count == 0);
}

TEST_CASE("speed_bin: bin edges are lower-inclusive") {
  const std::vector<double> edges{0.0, 0.5, 2.0, 5.0, 10.0};
  CHECK(speed_bin(0.0, edges) == 0);
  CHECK(speed_bin(0.49, edges) == 0);
  CHECK(speed_bin(0.5, edges) == 1);
  CHECK(speed_bin(2.0, edges) == 2);
  CHECK(speed_bin(9.99, edges) == 3);
  CHECK(speed_bin(25.0, edges) == 4);
}

TEST_CASE("eval report serializes to JSON and CSV") {
  const std::vector<GtObject> gts{gt_at(0, 0)};
  const std::vector<Detection> dets{det_at(0.1, 0.0, 0.9)};
  const EvalReport report = match_and_score(dets, gts, EvalConfig{});
  const nlohmann::json j = report.to_json();
  CHECK(j.at("mean_ap").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("bins").size() == 5);
  const std::string csv = eval_report_csv({report}, report, EvalConfig{});
  CHECK(csv.find("scene_id,bin,threshold,ap,center_err,vel_err") == 0);
  CHECK(csv.find("ALL,") != std::string::npos);
}

TEST_SUITE_END();
