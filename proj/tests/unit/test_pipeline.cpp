#include <doctest.h>

#include <cmath>

#include "crtbev/pipeline.hpp"
#include "oracles.hpp"

using namespace crtbev;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.n_sequences = 3;
  cfg.n_frames = 3;
  cfg.scene.grid = {32, 32, 0.5, {-8.0, -8.0}};
  cfg.scene.n_objects = 3;
  cfg.scene.speed_min = 0.0;
  cfg.scene.speed_max = 6.0;
  cfg.scene.radar_points_per_object = 8;
  cfg.scene.clutter_points = 10;
  cfg.scene.rig.count = 2;
  cfg.scene.rig.image_w = 24;
  cfg.scene.rig.image_h = 16;
  cfg.scene.rig.channels = 6;
  cfg.mvf.dims.channels = 6;
  cfg.mvf.dims.depth_bins = 12;
  cfg.mvf.dims.depth_max = 24.0;
  cfg.mvf.rca_m = 16;
  cfg.mgtf.n_history = 2;
  cfg.mfe.fit.gd_iterations = 40;
  cfg.eval.nms_radius_cells = 4.0;
  cfg.validate();
  return cfg;
}

// hand-placed constant-velocity scene; objects given by their final state
FrameSequence manual_sequence(const std::vector<GtObject>& final_objects,
                              const SceneConfig& cfg, int n_frames) {
  FrameSequence seq;
  seq.t_s = cfg.t_s;
  const std::vector<CameraModel> rig = build_camera_rig(cfg.rig);
  for (int k = 0; k < n_frames; ++k) {
    Frame frame;
    frame.timestamp = k * cfg.t_s;
    const double dt = (n_frames - 1 - k) * cfg.t_s;
    for (GtObject obj : final_objects) {
      obj.center.x -= obj.velocity.x * dt;
      obj.center.y -= obj.velocity.y * dt;
      frame.objects.push_back(obj);
    }
    Rng radar_rng(derive_seed(derive_seed(cfg.seed, "radar"), static_cast<std::uint64_t>(k)));
    frame.radar = sample_radar(frame.objects, cfg, frame.timestamp, radar_rng);
    for (std::size_t i = 0; i < rig.size(); ++i) {
      Rng cam_rng(derive_seed(derive_seed(cfg.seed, "camera"),
                              static_cast<std::uint64_t>(k) * 1000 + i));
      frame.cameras.push_back(render_camera(frame.objects, rig[i], cfg.rig.channels,
                                            cfg, static_cast<int>(i), cam_rng));
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("sequence maps and run are deterministic") {
  const RunConfig cfg = tiny_run_config();
  const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
  const PipelineContext ctx = PipelineContext::create(cfg);
  const std::vector<Grid2D> a = sequence_bev_maps(seqs[0], ctx, cfg.mode);
  const std::vector<Grid2D> b = sequence_bev_maps(seqs[0], ctx, cfg.mode);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);

  const SequenceResult r1 = run_sequence(seqs[0], ctx);
  const SequenceResult r2 = run_sequence(seqs[0], ctx);
  CHECK(r1.final_bev.data == r2.final_bev.data);
  REQUIRE(r1.detections.size() == r2.detections.size());
  for (std::size_t i = 0; i < r1.detections.size(); ++i)
    CHECK(r1.detections[i].score == r2.detections[i].score);
}

TEST_CASE("camera-only maps ignore the radar stream entirely") {
  const RunConfig cfg = tiny_run_config();
  std::vector<FrameSequence> seqs = generate_scene_set(cfg);
  const PipelineContext ctx = PipelineContext::create(cfg);
  const std::vector<Grid2D> before = sequence_bev_maps(seqs[0], ctx, PipelineMode::kCameraOnly);
  for (Frame& frame : seqs[0].frames) frame.radar.points.clear();
  const std::vector<Grid2D> after = sequence_bev_maps(seqs[0], ctx, PipelineMode::kCameraOnly);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].data == after[i].data);
  // fused mode does depend on radar
  const std::vector<FrameSequence> fresh = generate_scene_set(cfg);
  const std::vector<Grid2D> fused = sequence_bev_maps(fresh[0], ctx, PipelineMode::kMotionAware);
  const std::vector<Grid2D> gutted = sequence_bev_maps(seqs[0], ctx, PipelineMode::kMotionAware);
  bool differs = false;
  for (std::size_t i = 0; i < fused.size() && !differs; ++i)
    differs = fused[i].data != gutted[i].data;
  CHECK(differs);
}

TEST_CASE("naive-concat equals motion-aware with an infinite velocity threshold") {
  RunConfig cfg = tiny_run_config();
  const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
  PipelineContext ctx = PipelineContext::create(cfg);

  cfg.mode = PipelineMode::kNaiveConcat;
  PipelineContext naive_ctx = ctx;
  naive_ctx.cfg = cfg;
  const SequenceResult naive = run_sequence(seqs[0], naive_ctx);

  RunConfig inf_cfg = tiny_run_config();
  inf_cfg.mgtf.tau_v = 1e18;  // nothing ever counts as dynamic
  PipelineContext inf_ctx = ctx;
  inf_ctx.cfg = inf_cfg;
  const SequenceResult frozen = run_sequence(seqs[0], inf_ctx);

  CHECK(naive.final_bev.data == frozen.final_bev.data);
  CHECK(naive.occupancy_final.data == frozen.occupancy_final.data);
}

TEST_CASE("oracle heads on a noiseless scene give AP 1 at 2 m") {
  RunConfig cfg = tiny_run_config();
  cfg.scene.radar_sigma = 0.0;
  cfg.scene.radar_dropout = 0.0;
  cfg.scene.radar_vel_noise = 0.0;
  cfg.eval.oracle_heads = true;
  cfg.eval.nms_radius_cells = 12.0;  // wider than any object footprint
  cfg.validate();

  std::vector<GtObject> objects(3);
  objects[0].center = {5.0, 5.0, 0.75};
  objects[0].dims = {3.0, 1.6, 1.5};
  objects[0].velocity = {0.0, 0.0};
  objects[1].center = {5.0, -5.0, 0.75};
  objects[1].dims = {2.5, 1.4, 1.4};
  objects[1].velocity = {4.0, 0.0};
  objects[1].yaw = 0.0;
  objects[2].center = {-5.0, 0.0, 0.75};
  objects[2].dims = {2.0, 1.2, 1.3};
  objects[2].velocity = {0.0, 2.0};
  objects[2].yaw = 1.5707963267948966;

  const FrameSequence seq = manual_sequence(objects, cfg.scene, cfg.n_frames);
  const PipelineContext ctx = PipelineContext::create(cfg);
  const SequenceResult result = run_sequence(seq, ctx);
  REQUIRE(result.eval_gt.size() == 3);

  EvalConfig ec = cfg.eval.eval;
  const EvalReport report = match_and_score({{result.detections, result.eval_gt}}, ec);
  // AP at the 2 m threshold (third entry of 0.5/1/2/4)
  CHECK(report.ap_per_threshold[2] == doctest::Approx(1.0));
  CHECK(report.missed == 0);
}

TEST_CASE("compare_pipelines: identical configurations give zero gains") {
  RunConfig cfg = tiny_run_config();
  cfg.mgtf.disable_warp = true;  // both branches now run naive concatenation
  const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
  const CompareReport report = compare_pipelines(seqs, cfg);
  for (const double g : report.gains) CHECK(g == 0.0);
}

TEST_CASE("compare_pipelines: static-only scenes give exactly zero gains") {
  RunConfig cfg = tiny_run_config();
  cfg.scene.static_fraction = 1.0;  // velocity targets all zero -> zero head
  const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
  const CompareReport report = compare_pipelines(seqs, cfg);
  for (const double g : report.gains) CHECK(std::abs(g) <= 0.01);
}

TEST_CASE("fit_sequences: fused features beat camera-only on velocity MSE") {
  RunConfig cfg = tiny_run_config();
  cfg.scene.speed_min = 1.0;  // make sure moving targets exist
  cfg.scene.static_fraction = 0.3;
  const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
  const PipelineContext ctx = PipelineContext::create(cfg);
  const FitResult fused = fit_sequences(seqs, ctx, PipelineMode::kMotionAware);
  const FitResult camera = fit_sequences(seqs, ctx, PipelineMode::kCameraOnly);
  CHECK(fused.l_vel < camera.l_vel);
}

TEST_CASE("parallel_for: results do not depend on the worker count") {
  RunConfig cfg = tiny_run_config();
  cfg.workers = 3;
  const std::vector<FrameSequence> par = generate_scene_set(cfg);
  cfg.workers = 1;
  const std::vector<FrameSequence> ser = generate_scene_set(cfg);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    REQUIRE(par[i].frames.size() == ser[i].frames.size());
    for (std::size_t k = 0; k < par[i].frames.size(); ++k) {
      CHECK(par[i].frames[k].cameras[0].features.data ==
            ser[i].frames[k].cameras[0].features.data);
      CHECK(par[i].frames[k].radar.points.size() ==
            ser[i].frames[k].radar.points.size());
    }
  }
}

TEST_CASE("parallel_for: exceptions from workers are rethrown") {
  CHECK_THROWS_AS(parallel_for(8, 4, [](int i) {
    if (i == 5) throw std::runtime_error("boom");
  }), std::runtime_error);
}

TEST_CASE("bench_pipeline: schema and stage consistency") {
  RunConfig cfg = tiny_run_config();
  // enough work per stage that scheduler noise stays well under the 10% band
  cfg.scene.grid = {48, 48, 0.5, {-12.0, -12.0}};
  cfg.scene.rig.count = 3;
  cfg.scene.rig.image_w = 32;
  cfg.scene.rig.image_h = 24;
  cfg.n_frames = 4;
  cfg.mvf.rca_m = 32;
  cfg.bench_warmup = 1;
  cfg.bench_iterations = 7;
  const nlohmann::json result = bench_pipeline(cfg);
  REQUIRE(result.contains("stages"));
  double stage_sum = 0.0;
  for (const char* stage : {"radar_encode", "mvf", "mfe", "mgtf", "detect"}) {
    REQUIRE(result.at("stages").contains(stage));
    const double ms = result.at("stages").at(stage).at("median_ms").get<double>();
    CHECK(ms >= 0.0);
    stage_sum += ms;
  }
  const double total = result.at("end_to_end").at("median_ms").get<double>();
  CHECK(stage_sum == doctest::Approx(total).epsilon(0.10));

  cfg.bench_iterations = 0;
  CHECK_THROWS_WITH_AS(bench_pipeline(cfg), doctest::Contains("iterations must be >= 1"),
                       ConfigError);
}

TEST_SUITE_END();
