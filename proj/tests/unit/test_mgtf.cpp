#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "crtbev/mfe.hpp"
#include "crtbev/mgtf.hpp"
#include "crtbev/rng.hpp"
#include "oracles.hpp"

using namespace crtbev;

namespace {

const GridSpec kSpec{12, 12, 0.5, {-3.0, -3.0}};

MotionMap uniform_motion(const GridSpec& spec, double vx, double vy) {
  MotionMap m(spec, 2);
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      m.at(0, x, y) = vx;
      m.at(1, x, y) = vy;
    }
  }
  return m;
}

ShiftField random_shift_field(const GridSpec& spec, Rng& rng) {
  MotionMap motion(spec, 2);
  for (double& v : motion.data) v = rng.uniform(-4.0, 4.0);
  return compute_shift(motion, 0.5, 1.0, spec.cell_size);
}

}  // namespace

TEST_SUITE_BEGIN("mgtf");

TEST_CASE("compute_shift: arithmetic from the shift definition") {
  const MotionMap m = uniform_motion(kSpec, 2.0, 0.0);
  const ShiftField s = compute_shift(m, 0.5, 1.0, 0.5);
  CHECK(s.delta.at(0, 3, 3) == doctest::Approx(2.0));
  CHECK(s.delta.at(1, 3, 3) == doctest::Approx(0.0));
  CHECK(s.dynamic[kSpec.linear_index(3, 3)] == 1);  // speed 2 > 1
}

TEST_CASE("compute_shift: below-threshold speed stays static") {
  const MotionMap m = uniform_motion(kSpec, 0.4, 0.3);  // speed 0.5
  const ShiftField s = compute_shift(m, 0.5, 1.0, 0.5);
  CHECK(s.dynamic[0] == 0);
  CHECK(s.delta.at(0, 0, 0) == doctest::Approx(0.4));
}

TEST_CASE("compute_shift: zero velocity is static with zero shift") {
  const MotionMap m(kSpec, 2);
  const ShiftField s = compute_shift(m, 0.5, 1.0, 0.5);
  for (const std::uint8_t d : s.dynamic) CHECK(d == 0);
  for (const double v : s.delta.data) CHECK(v == 0.0);
}

TEST_CASE("warp: all-static field is a bit-exact identity") {
  Rng rng(1);
  const Grid2D prev = oracles::random_grid(kSpec, 3, rng);
  const ShiftField s = compute_shift(MotionMap(kSpec, 2), 0.5, 1.0, 0.5);
  const Grid2D out = warp(prev, s);
  CHECK(out.data == prev.data);
}

TEST_CASE("warp: a single dynamic cell moves by its rounded shift") {
  Rng rng(2);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  MotionMap motion(kSpec, 2);
  motion.at(0, 4, 6) = 2.0;  // shift +2 cells in x at t_s=0.5, cell 0.5
  const ShiftField s = compute_shift(motion, 0.5, 1.0, 0.5);
  const Grid2D out = warp(prev, s);
  // the moved feature averages with the static passthrough already at (6, 6)
  for (int c = 0; c < 2; ++c) {
    CHECK(out.at(c, 6, 6) ==
          doctest::Approx(0.5 * (prev.at(c, 4, 6) + prev.at(c, 6, 6))));
    CHECK(out.at(c, 4, 6) == 0.0);  // source left empty
  }
}

TEST_CASE("warp: two dynamic sources landing together are averaged") {
  Grid2D prev(kSpec, 1);
  prev.at(0, 2, 5) = 3.0;
  prev.at(0, 4, 5) = 5.0;
  MotionMap motion(kSpec, 2);
  motion.at(0, 2, 5) = 4.0;   // +4 cells -> (6, 5)
  motion.at(0, 4, 5) = 2.0;   // +2 cells -> (6, 5)
  motion.at(0, 6, 5) = 2.0;   // target itself moves away, no passthrough there
  const ShiftField s = compute_shift(motion, 0.5, 1.0, 0.5);
  const Grid2D out = warp(prev, s);
  CHECK(out.at(0, 6, 5) == doctest::Approx(4.0));  // mean of 3 and 5
}

TEST_CASE("warp: rounding is half away from zero") {
  Grid2D prev(kSpec, 1);
  prev.at(0, 6, 6) = 1.0;
  MotionMap motion(kSpec, 2);
  // passthrough off so the moved value is not averaged with the empty target
  SUBCASE("positive half rounds up") {
    motion.at(0, 6, 6) = 1.5;  // delta +1.5 cells -> +2
    const Grid2D out = warp(prev, compute_shift(motion, 0.5, 1.0, 0.5), false);
    CHECK(out.at(0, 8, 6) == doctest::Approx(1.0));
  }
  SUBCASE("negative half rounds down") {
    motion.at(0, 6, 6) = -1.5;  // delta -1.5 cells -> -2
    const Grid2D out = warp(prev, compute_shift(motion, 0.5, 1.0, 0.5), false);
    CHECK(out.at(0, 4, 6) == doctest::Approx(1.0));
  }
}

TEST_CASE("warp: literal reading drops static cells") {
  Rng rng(3);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  MotionMap motion(kSpec, 2);
  motion.at(0, 4, 6) = 2.0;
  const ShiftField s = compute_shift(motion, 0.5, 1.0, 0.5);
  const Grid2D out = warp(prev, s, /*static_passthrough=*/false);
  double mass = 0.0;
  for (const double v : out.data) mass += std::abs(v);
  double moved = 0.0;
  for (int c = 0; c < 2; ++c) moved += std::abs(prev.at(c, 4, 6));
  CHECK(mass == doctest::Approx(moved));
  CHECK(out.at(0, 6, 6) == doctest::Approx(prev.at(0, 4, 6)));
}

TEST_CASE("warp: matches the brute-force enumeration oracle exactly") {
  Rng rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const int xc = 4 + static_cast<int>(rng.below(12));
    const int yc = 4 + static_cast<int>(rng.below(12));
    const GridSpec spec{xc, yc, 0.5, {-xc * 0.25, -yc * 0.25}};
    const int channels = 1 + static_cast<int>(rng.below(4));
    const Grid2D prev = oracles::random_grid(spec, channels, rng);
    const ShiftField s = random_shift_field(spec, rng);
    const bool passthrough = rng.bernoulli(0.8);
    const Grid2D got = warp(prev, s, passthrough);
    const Grid2D want = oracles::brute_force_warp(prev, s, passthrough);
    CHECK(got.data == want.data);  // exact, same addition order
  }
}

TEST_CASE("warp: cells outside the image of the shift map stay zero") {
  Rng rng(5);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  const ShiftField s = random_shift_field(kSpec, rng);
  const Grid2D out = warp(prev, s);
  // recompute the landing set independently
  std::vector<bool> landed(kSpec.cell_count(), false);
  for (int i = 0; i < kSpec.x_cells; ++i) {
    for (int j = 0; j < kSpec.y_cells; ++j) {
      int ti = i, tj = j;
      if (s.dynamic[kSpec.linear_index(i, j)]) {
        ti = i + static_cast<int>(std::round(s.delta.at(0, i, j)));
        tj = j + static_cast<int>(std::round(s.delta.at(1, i, j)));
      }
      if (kSpec.contains(ti, tj)) landed[kSpec.linear_index(ti, tj)] = true;
    }
  }
  for (int x = 0; x < kSpec.x_cells; ++x)
    for (int y = 0; y < kSpec.y_cells; ++y)
      if (!landed[kSpec.linear_index(x, y)])
        for (int c = 0; c < 2; ++c) CHECK(out.at(c, x, y) == 0.0);
}

TEST_CASE("fuse_step: unit occupancy reduces the plain concatenation") {
  Rng rng(6);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  const Grid2D curr = oracles::random_grid(kSpec, 2, rng);
  OccupancyMap occ(kSpec, 1);
  for (double& v : occ.data) v = 1.0;
  MgtfConfig cfg;
  const MgtfWeights w = MgtfWeights::averaging(2);
  const Grid2D out = fuse_step(prev, curr, occ, cfg, w.reduce);
  for (int x = 0; x < kSpec.x_cells; ++x)
    for (int y = 0; y < kSpec.y_cells; ++y)
      for (int c = 0; c < 2; ++c)
        CHECK(out.at(c, x, y) ==
              doctest::Approx(0.5 * (prev.at(c, x, y) + curr.at(c, x, y))).epsilon(1e-12));
}

TEST_CASE("fuse_step: zero occupancy with zero bias gives a zero grid") {
  Rng rng(7);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  const Grid2D curr = oracles::random_grid(kSpec, 2, rng);
  const OccupancyMap occ(kSpec, 1);
  MgtfConfig cfg;
  const MgtfWeights w = MgtfWeights::averaging(2);  // zero bias
  const Grid2D out = fuse_step(prev, curr, occ, cfg, w.reduce);
  for (const double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("fuse_step: random case matches the per-element oracle") {
  Rng rng(8);
  MgtfWeights w;
  w.reduce = LinearLayer::seeded(2, 4, rng);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  const Grid2D curr = oracles::random_grid(kSpec, 2, rng);
  OccupancyMap occ(kSpec, 1);
  for (double& v : occ.data) v = rng.uniform();
  MgtfConfig cfg;
  const Grid2D out = fuse_step(prev, curr, occ, cfg, w.reduce);
  for (int x = 0; x < kSpec.x_cells; ++x) {
    for (int y = 0; y < kSpec.y_cells; ++y) {
      const double g = occ.at(0, x, y);
      const double concat[4] = {g * prev.at(0, x, y), g * prev.at(1, x, y),
                                g * curr.at(0, x, y), g * curr.at(1, x, y)};
      for (int c = 0; c < 2; ++c) {
        double want = w.reduce.bias[c];
        for (int i = 0; i < 4; ++i) want += w.reduce.weight[c * 4 + i] * concat[i];
        CHECK(out.at(c, x, y) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("fuse_step: hard gating thresholds at tau_b") {
  Rng rng(9);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  const Grid2D curr = oracles::random_grid(kSpec, 2, rng);
  OccupancyMap occ(kSpec, 1);
  occ.at(0, 2, 2) = 0.04;  // below tau_b = 0.05
  occ.at(0, 3, 3) = 0.06;
  MgtfConfig cfg;
  cfg.gate_mode = GateMode::kHard;
  const MgtfWeights w = MgtfWeights::averaging(2);
  const Grid2D out = fuse_step(prev, curr, occ, cfg, w.reduce);
  CHECK(out.at(0, 2, 2) == 0.0);
  CHECK(out.at(0, 3, 3) ==
        doctest::Approx(0.5 * (prev.at(0, 3, 3) + curr.at(0, 3, 3))));
}

TEST_CASE("fuse_step: optional single-half gating keeps the current frame") {
  Rng rng(10);
  const Grid2D prev = oracles::random_grid(kSpec, 2, rng);
  const Grid2D curr = oracles::random_grid(kSpec, 2, rng);
  const OccupancyMap occ(kSpec, 1);  // zeros
  MgtfConfig cfg;
  cfg.gate_both_halves = false;
  const MgtfWeights w = MgtfWeights::averaging(2);
  const Grid2D out = fuse_step(prev, curr, occ, cfg, w.reduce);
  for (int x = 0; x < kSpec.x_cells; ++x)
    for (int y = 0; y < kSpec.y_cells; ++y)
      for (int c = 0; c < 2; ++c)
        CHECK(out.at(c, x, y) == doctest::Approx(0.5 * curr.at(c, x, y)));
}

namespace {

BevSequence static_sequence(int n_frames, const std::vector<double>& cell_values) {
  BevSequence seq;
  for (int k = 0; k < n_frames; ++k) {
    seq.timestamps.push_back(0.5 * k);
    Grid2D b(kSpec, 1);
    for (double& v : b.data) v = cell_values[k];
    seq.bev.push_back(std::move(b));
    seq.motion.push_back(MotionMap(kSpec, 2));
    OccupancyMap occ(kSpec, 1);
    for (double& v : occ.data) v = 1.0;
    seq.occupancy.push_back(std::move(occ));
  }
  return seq;
}

}  // namespace

TEST_CASE("run_mgtf: N = 0 reduces to the final conv of the last map") {
  Rng rng(11);
  BevSequence seq;
  seq.timestamps = {1.0};
  seq.bev.push_back(oracles::random_grid(kSpec, 2, rng));
  seq.motion.push_back(MotionMap(kSpec, 2));
  OccupancyMap occ(kSpec, 1);
  seq.occupancy.push_back(occ);
  const MgtfWeights w = MgtfWeights::averaging(2);
  MgtfConfig cfg;
  MemoryBank bank(1);
  const Grid2D out = run_mgtf(seq, cfg, w, bank);
  CHECK(out.data == seq.bev[0].data);  // identity final conv
}

TEST_CASE("run_mgtf: static averaging cascade matches the closed form") {
  // values v0..v3 with averaging reduction: final = v0/8 + v1/8 + v2/4 + v3/2
  const BevSequence seq = static_sequence(4, {1.0, 2.0, 4.0, 8.0});
  const MgtfWeights w = MgtfWeights::averaging(1);
  MgtfConfig cfg;
  MemoryBank bank(4);
  const Grid2D out = run_mgtf(seq, cfg, w, bank);
  const double want = 1.0 / 8 + 2.0 / 8 + 4.0 / 4 + 8.0 / 2;
  for (const double v : out.data) CHECK(v == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("run_mgtf: warm bank rerun is bit-identical and skips recomputation") {
  Rng rng(12);
  BevSequence seq;
  for (int k = 0; k < 4; ++k) {
    seq.timestamps.push_back(0.5 * k);
    seq.bev.push_back(oracles::random_grid(kSpec, 2, rng));
    MotionMap motion(kSpec, 2);
    for (double& v : motion.data) v = rng.uniform(-3, 3);
    seq.motion.push_back(std::move(motion));
    OccupancyMap occ(kSpec, 1);
    for (double& v : occ.data) v = rng.uniform();
    seq.occupancy.push_back(std::move(occ));
  }
  const MgtfWeights w = MgtfWeights::averaging(2);
  MgtfConfig cfg;

  MemoryBank cold(4);
  const Grid2D first = run_mgtf(seq, cfg, w, cold);
  CHECK(cold.size() == 4);
  const Grid2D warm_rerun = run_mgtf(seq, cfg, w, cold);
  CHECK(first.data == warm_rerun.data);

  // a prefix-warmed bank must agree too
  MemoryBank prefix(4);
  BevSequence head = seq;
  head.timestamps.resize(2);
  head.bev.resize(2);
  head.motion.resize(2);
  head.occupancy.resize(2);
  run_mgtf(head, cfg, w, prefix);
  const Grid2D from_prefix = run_mgtf(seq, cfg, w, prefix);
  CHECK(first.data == from_prefix.data);
}

TEST_CASE("run_mgtf: misaligned sequences are rejected") {
  BevSequence seq = static_sequence(3, {1, 2, 3});
  seq.motion.pop_back();
  const MgtfWeights w = MgtfWeights::averaging(1);
  MgtfConfig cfg;
  MemoryBank bank(3);
  CHECK_THROWS_AS(run_mgtf(seq, cfg, w, bank), std::invalid_argument);
}

TEST_CASE("run_mgtf: oracle motion aligns a moving object's features") {
  // one object moving +4 m/s in x over 3 frames; cell 0.5 m, t_s 0.5 s
  const GridSpec spec{24, 12, 0.5, {-2.0, -3.0}};
  std::vector<GtObject> objects(1);
  objects[0].center = {0.0, 0.0, 0.75};
  objects[0].dims = {2.0, 1.0, 1.5};
  objects[0].velocity = {4.0, 0.0};

  BevSequence seq;
  std::vector<Targets> targets;
  for (int k = 0; k < 3; ++k) {
    GtObject obj = objects[0];
    obj.center.x = 0.0 + 4.0 * 0.5 * k;
    Targets t = make_targets(spec, {obj}, 0.5);
    seq.timestamps.push_back(0.5 * k);
    seq.bev.push_back(t.occupancy);  // indicator features
    seq.motion.push_back(t.motion);
    seq.occupancy.push_back(t.occupancy);
    targets.push_back(std::move(t));
  }
  const MgtfWeights w = MgtfWeights::averaging(1);
  MgtfConfig cfg;
  MemoryBank bank(3);
  const Grid2D out = run_mgtf(seq, cfg, w, bank);

  // support must equal the final-frame GT cells (IoU 1.0)
  int inter = 0, uni = 0;
  double com_x = 0.0, com_y = 0.0, mass = 0.0;
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      const bool got = out.at(0, x, y) > 1e-12;
      const bool want = targets[2].occupancy.at(0, x, y) >= 0.5;
      inter += got && want;
      uni += got || want;
      if (got) {
        const Vec2 c = spec.cell_center(x, y);
        com_x += out.at(0, x, y) * c.x;
        com_y += out.at(0, x, y) * c.y;
        mass += out.at(0, x, y);
      }
    }
  }
  CHECK(inter == uni);  // support IoU exactly 1
  com_x /= mass;
  com_y /= mass;
  CHECK(std::abs(com_x - 4.0) <= spec.cell_size);
  CHECK(std::abs(com_y - 0.0) <= spec.cell_size);
}

TEST_CASE("memory bank: capacity bound and minimum-timestamp eviction") {
  MemoryBank bank(3);
  for (int k = 0; k < 5; ++k) bank.put(0.5 * k, Grid2D(kSpec, 1));
  CHECK(bank.size() == 3);
  CHECK(bank.find(0.0) == nullptr);
  CHECK(bank.find(0.5) == nullptr);
  CHECK(bank.find(1.0) != nullptr);
  CHECK(bank.find(2.0) != nullptr);
}

TEST_CASE("memory bank: retrieval returns exactly what was stored") {
  Rng rng(13);
  MemoryBank bank(2);
  const Grid2D g = oracles::random_grid(kSpec, 3, rng);
  bank.put(1.5, g);
  const Grid2D* found = bank.find(1.5);
  REQUIRE(found != nullptr);
  CHECK(found->data == g.data);
}

TEST_CASE("memory bank: disk round trip is bit-exact") {
  Rng rng(14);
  MemoryBank bank(4);
  for (int k = 0; k < 3; ++k) bank.put(0.5 * k, oracles::random_grid(kSpec, 2, rng));
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "crtbev_test_bank";
  std::filesystem::remove_all(dir);
  bank.save(dir);
  const MemoryBank loaded = MemoryBank::load(dir);
  REQUIRE(loaded.size() == bank.size());
  for (const auto& [key, grid] : bank.entries()) {
    const auto it = loaded.entries().find(key);
    REQUIRE(it != loaded.entries().end());
    CHECK(it->second.data == grid.data);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("run_mgtf: ego compensation re-aligns a world-fixed object") {
  // a static object watched from an ego that advances one cell per frame;
  // its BEV cell drifts backwards unless past grids are re-sampled
  const GridSpec spec{16, 8, 0.5, {-4.0, -2.0}};
  const MgtfWeights w = MgtfWeights::averaging(1);
  BevSequence seq;
  const int obj_x_world = 10;  // world cell index at frame 0
  for (int k = 0; k < 3; ++k) {
    seq.timestamps.push_back(0.5 * k);
    Grid2D b(spec, 1);
    b.at(0, obj_x_world - k, 4) = 1.0;  // ego moved +k cells, object recedes
    seq.bev.push_back(std::move(b));
    seq.motion.push_back(MotionMap(spec, 2));
    OccupancyMap occ(spec, 1);
    for (double& v : occ.data) v = 1.0;
    seq.occupancy.push_back(std::move(occ));
    Pose pose;
    pose.t = {0.5 * k, 0.0, 0.0};  // world <- ego_k
    seq.ego_poses.push_back(pose);
  }

  MgtfConfig cfg;
  cfg.ego_compensation = true;
  MemoryBank bank(3);
  const Grid2D out = run_mgtf(seq, cfg, w, bank);
  // all mass sits where the object is in the final ego frame
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      if (x == obj_x_world - 2 && y == 4) {
        CHECK(out.at(0, x, y) == doctest::Approx(1.0));
      } else {
        CHECK(out.at(0, x, y) == 0.0);
      }
    }
  }

  // without compensation the history smears across the drift trail
  MgtfConfig off;
  MemoryBank bank2(3);
  const Grid2D smeared = run_mgtf(seq, off, w, bank2);
  int support = 0;
  for (const double v : smeared.data) support += v > 1e-12;
  CHECK(support > 1);
}

TEST_CASE("ego_align: one-cell translation shifts the grid") {
  Rng rng(15);
  const Grid2D past = oracles::random_grid(kSpec, 2, rng);
  Pose past_pose;                       // identity
  Pose curr_pose;
  curr_pose.t = {0.5, 0.0, 0.0};        // ego advanced one cell in x
  const Grid2D aligned = ego_align(past, past_pose, curr_pose);
  for (int x = 0; x < kSpec.x_cells - 1; ++x)
    for (int y = 0; y < kSpec.y_cells; ++y)
      for (int c = 0; c < 2; ++c)
        CHECK(aligned.at(c, x, y) == doctest::Approx(past.at(c, x + 1, y)));
}

TEST_SUITE_END();
