#include "crtbev/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "crtbev/io.hpp"

namespace crtbev {

PipelineWeights seeded_pipeline_weights(const RunConfig& cfg) {
  PipelineWeights w;
  const std::uint64_t weights_seed = derive_seed(cfg.seed, "weights");
  w.mvf = MvfWeights::seeded(cfg.mvf.dims, weights_seed);
  Rng head_rng(derive_seed(weights_seed, "heads"));
  const int c = cfg.mvf.dims.channels;
  w.velocity = HeadWeights::seeded(c, c, 2, head_rng);
  w.occupancy = HeadWeights::seeded(c, c, 1, head_rng);
  w.mgtf = MgtfWeights::averaging(c);
  return w;
}

void save_heads(const std::filesystem::path& path, const HeadWeights& velocity,
                const HeadWeights& occupancy) {
  WeightBundle bundle;
  const auto put_head = [&bundle](const std::string& prefix, const HeadWeights& h) {
    bundle.put(prefix + ".w3", h.mid_ch, h.in_ch * 9, h.w3);
    bundle.put(prefix + ".b3", h.mid_ch, 1, h.b3);
    bundle.put_layer(prefix + ".w1", h.w1);
  };
  put_head("velocity", velocity);
  put_head("occupancy", occupancy);
  bundle.save(path);
}

void load_heads(const std::filesystem::path& path, HeadWeights& velocity,
                HeadWeights& occupancy) {
  const WeightBundle bundle = WeightBundle::load(path);
  const auto get_head = [&bundle](const std::string& prefix) {
    HeadWeights h;
    const WeightBundle::Entry& w3 = bundle.get(prefix + ".w3");
    h.mid_ch = w3.rows;
    h.in_ch = w3.cols / 9;
    h.w3 = w3.data;
    h.b3 = bundle.get(prefix + ".b3").data;
    h.w1 = bundle.get_layer(prefix + ".w1");
    h.out_ch = h.w1.out_dim;
    return h;
  };
  velocity = get_head("velocity");
  occupancy = get_head("occupancy");
}

PipelineContext PipelineContext::create(const RunConfig& cfg) {
  PipelineContext ctx;
  ctx.cfg = cfg;
  ctx.weights = seeded_pipeline_weights(cfg);
  const std::vector<CameraModel> rig = build_camera_rig(cfg.scene.rig);
  ctx.groups.reserve(rig.size());
  for (const CameraModel& cam : rig)
    ctx.groups.push_back(azimuth_group(cam, cfg.scene.grid, cfg.mvf.rca_m));
  return ctx;
}

std::vector<Grid2D> sequence_bev_maps(const FrameSequence& seq,
                                      const PipelineContext& ctx,
                                      PipelineMode mode) {
  const bool camera_only = mode == PipelineMode::kCameraOnly;
  std::vector<Grid2D> maps;
  maps.reserve(seq.frames.size());
  for (const Frame& frame : seq.frames) {
    Grid2D radar_bev(ctx.cfg.scene.grid, ctx.cfg.mvf.dims.channels);
    if (!camera_only)
      radar_bev = radar_bev_encode(frame.radar, ctx.cfg.scene.grid,
                                   ctx.weights.mvf.pillar, ctx.cfg.scene.sweep_dt);
    maps.push_back(mvf_forward(frame.cameras, radar_bev, ctx.groups, ctx.weights.mvf,
                               ctx.cfg.mvf.tau_p, /*use_rca=*/!camera_only,
                               /*fuse_radar=*/!camera_only));
  }
  return maps;
}

FrameEstimates estimate_motion(const std::vector<Grid2D>& bev_maps,
                               const FrameSequence& seq,
                               const PipelineContext& ctx) {
  FrameEstimates est;
  est.motion.reserve(bev_maps.size());
  est.occupancy.reserve(bev_maps.size());
  for (std::size_t k = 0; k < bev_maps.size(); ++k) {
    if (ctx.cfg.eval.oracle_heads) {
      Targets t = make_targets(ctx.cfg.scene.grid, seq.frames[k].objects,
                               ctx.cfg.mfe.tau_iou);
      est.motion.push_back(std::move(t.motion));
      est.occupancy.push_back(std::move(t.occupancy));
    } else {
      est.motion.push_back(velocity_head(bev_maps[k], ctx.weights.velocity));
      est.occupancy.push_back(occupancy_head(bev_maps[k], ctx.weights.occupancy));
    }
  }
  return est;
}

std::vector<GtObject> eval_ground_truth(const Frame& frame, const GridSpec& grid) {
  std::vector<GtObject> gts;
  for (const GtObject& obj : frame.objects)
    if (grid.cell_of(obj.center.xy())) gts.push_back(obj);
  return gts;
}

namespace {

MgtfConfig mgtf_config_for_mode(const RunConfig& cfg, PipelineMode mode) {
  MgtfConfig m = cfg.mgtf;
  if (mode == PipelineMode::kNaiveConcat) m.disable_warp = true;
  return m;
}

SequenceResult finish_sequence(const FrameSequence& seq,
                               const std::vector<Grid2D>& maps,
                               const FrameEstimates& est,
                               const PipelineContext& ctx, PipelineMode mode) {
  const MgtfConfig mgtf_cfg = mgtf_config_for_mode(ctx.cfg, mode);
  // the temporal window is the last n_history + 1 frames
  const std::size_t window =
      std::min(maps.size(), static_cast<std::size_t>(mgtf_cfg.n_history) + 1);
  const std::size_t first = maps.size() - window;
  BevSequence bev_seq;
  for (std::size_t k = first; k < maps.size(); ++k) {
    bev_seq.timestamps.push_back(seq.frames[k].timestamp);
    bev_seq.bev.push_back(maps[k]);
    bev_seq.motion.push_back(est.motion[k]);
    bev_seq.occupancy.push_back(est.occupancy[k]);
    bev_seq.ego_poses.push_back(seq.frames[k].ego_pose);
  }

  MemoryBank bank(mgtf_cfg.n_history + 1);
  SequenceResult result;
  result.final_bev = run_mgtf(bev_seq, mgtf_cfg, ctx.weights.mgtf, bank);

  if (ctx.cfg.eval.oracle_heads) {
    Targets t = make_targets(ctx.cfg.scene.grid, seq.frames.back().objects,
                             ctx.cfg.mfe.tau_iou);
    result.motion_final = std::move(t.motion);
    result.occupancy_final = std::move(t.occupancy);
  } else {
    result.motion_final = velocity_head(result.final_bev, ctx.weights.velocity);
    result.occupancy_final = occupancy_head(result.final_bev, ctx.weights.occupancy);
  }
  result.detections = detect(result.occupancy_final, result.motion_final,
                             ctx.cfg.eval.tau_det, ctx.cfg.eval.nms_radius_cells);
  result.eval_gt = eval_ground_truth(seq.frames.back(), ctx.cfg.scene.grid);
  return result;
}

}  // namespace

SequenceResult run_sequence(const FrameSequence& seq, const PipelineContext& ctx) {
  const std::vector<Grid2D> maps = sequence_bev_maps(seq, ctx, ctx.cfg.mode);
  const FrameEstimates est = estimate_motion(maps, seq, ctx);
  return finish_sequence(seq, maps, est, ctx, ctx.cfg.mode);
}

FitResult fit_sequences(const std::vector<FrameSequence>& seqs,
                        const PipelineContext& ctx, PipelineMode mode) {
  if (seqs.empty()) throw std::invalid_argument("fit: need at least one sequence");
  std::vector<std::vector<Grid2D>> all_maps(seqs.size());
  std::vector<std::vector<Targets>> all_targets(seqs.size());
  parallel_for(static_cast<int>(seqs.size()), ctx.cfg.workers, [&](int i) {
    all_maps[i] = sequence_bev_maps(seqs[i], ctx, mode);
    for (const Frame& frame : seqs[i].frames)
      all_targets[i].push_back(
          make_targets(ctx.cfg.scene.grid, frame.objects, ctx.cfg.mfe.tau_iou));
  });
  std::vector<FitSample> samples;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t k = 0; k < all_maps[i].size(); ++k) {
      samples.push_back({&all_maps[i][k], &all_targets[i][k].motion,
                         &all_targets[i][k].occupancy});
    }
  }
  FitOptions opt = ctx.cfg.mfe.fit;
  opt.focal_gamma = ctx.cfg.mfe.loss.focal_gamma;
  opt.focal_alpha = ctx.cfg.mfe.loss.focal_alpha;
  opt.subsample_seed = derive_seed(ctx.cfg.seed, "fit_subsample");
  return fit_heads(samples, opt);
}

CompareReport compare_pipelines(const std::vector<FrameSequence>& seqs,
                                const RunConfig& cfg) {
  PipelineContext ctx = PipelineContext::create(cfg);

  // shared per-frame maps and heads: the two branches differ only in MGTF
  std::vector<std::vector<Grid2D>> all_maps(seqs.size());
  parallel_for(static_cast<int>(seqs.size()), cfg.workers, [&](int i) {
    all_maps[i] = sequence_bev_maps(seqs[i], ctx, PipelineMode::kMotionAware);
  });

  if (!cfg.eval.oracle_heads) {
    std::vector<std::vector<Targets>> all_targets(seqs.size());
    parallel_for(static_cast<int>(seqs.size()), cfg.workers, [&](int i) {
      for (const Frame& frame : seqs[i].frames)
        all_targets[i].push_back(
            make_targets(cfg.scene.grid, frame.objects, cfg.mfe.tau_iou));
    });
    std::vector<FitSample> samples;
    for (std::size_t i = 0; i < seqs.size(); ++i)
      for (std::size_t k = 0; k < all_maps[i].size(); ++k)
        samples.push_back({&all_maps[i][k], &all_targets[i][k].motion,
                           &all_targets[i][k].occupancy});
    FitOptions opt = cfg.mfe.fit;
    opt.focal_gamma = cfg.mfe.loss.focal_gamma;
    opt.focal_alpha = cfg.mfe.loss.focal_alpha;
    opt.subsample_seed = derive_seed(cfg.seed, "fit_subsample");
    const FitResult fit = fit_heads(samples, opt);
    ctx.weights.velocity = fit.velocity;
    ctx.weights.occupancy = fit.occupancy;
    ctx.weights.heads_fitted = true;
  }

  std::vector<ScenePrediction> preds_a(seqs.size()), preds_b(seqs.size());
  parallel_for(static_cast<int>(seqs.size()), cfg.workers, [&](int i) {
    const FrameEstimates est = estimate_motion(all_maps[i], seqs[i], ctx);
    const SequenceResult a =
        finish_sequence(seqs[i], all_maps[i], est, ctx, PipelineMode::kMotionAware);
    const SequenceResult b =
        finish_sequence(seqs[i], all_maps[i], est, ctx, PipelineMode::kNaiveConcat);
    preds_a[i] = {a.detections, a.eval_gt};
    preds_b[i] = {b.detections, b.eval_gt};
  });

  CompareReport report;
  report.eval = cfg.eval.eval;
  report.motion_aware = match_and_score(preds_a, cfg.eval.eval);
  report.naive_concat = match_and_score(preds_b, cfg.eval.eval);
  report.gains.resize(report.motion_aware.bins.size());
  for (std::size_t b = 0; b < report.gains.size(); ++b)
    report.gains[b] = report.motion_aware.bins[b].ap - report.naive_concat.bins[b].ap;
  return report;
}

std::vector<FrameSequence> generate_scene_set(const RunConfig& cfg) {
  const std::uint64_t scene_stream = derive_seed(cfg.seed, "scene");
  std::vector<FrameSequence> seqs(cfg.n_sequences);
  parallel_for(cfg.n_sequences, cfg.workers, [&](int i) {
    SceneConfig scene_cfg = cfg.scene;
    scene_cfg.seed = derive_seed(scene_stream, static_cast<std::uint64_t>(i));
    seqs[i] = generate_sequence(scene_cfg, cfg.n_frames);
  });
  return seqs;
}

nlohmann::json bench_pipeline(const RunConfig& cfg) {
  if (cfg.bench_iterations < 1) throw ConfigError("bench.iterations: iterations must be >= 1");
  PipelineContext ctx = PipelineContext::create(cfg);
  SceneConfig scene_cfg = cfg.scene;
  scene_cfg.seed = derive_seed(derive_seed(cfg.seed, "scene"), std::uint64_t{0});
  const FrameSequence seq = generate_sequence(scene_cfg, cfg.n_frames);

  using Clock = std::chrono::steady_clock;
  const auto time_ms = [](const std::function<void()>& fn) {
    const auto t0 = Clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };

  std::vector<Grid2D> radar_grids;
  std::vector<Grid2D> maps;
  FrameEstimates est;
  SequenceResult result;
  const auto stage_radar = [&] {
    radar_grids.clear();
    for (const Frame& frame : seq.frames)
      radar_grids.push_back(radar_bev_encode(frame.radar, cfg.scene.grid,
                                             ctx.weights.mvf.pillar, cfg.scene.sweep_dt));
  };
  const auto stage_mvf = [&] {
    maps.clear();
    for (std::size_t k = 0; k < seq.frames.size(); ++k)
      maps.push_back(mvf_forward(seq.frames[k].cameras, radar_grids[k], ctx.groups,
                                 ctx.weights.mvf, cfg.mvf.tau_p, true, true));
  };
  const auto stage_mfe = [&] { est = estimate_motion(maps, seq, ctx); };
  const auto stage_mgtf = [&] {
    const std::size_t window =
        std::min(maps.size(), static_cast<std::size_t>(cfg.mgtf.n_history) + 1);
    const std::size_t first = maps.size() - window;
    BevSequence bev_seq;
    for (std::size_t k = first; k < maps.size(); ++k) {
      bev_seq.timestamps.push_back(seq.frames[k].timestamp);
      bev_seq.bev.push_back(maps[k]);
      bev_seq.motion.push_back(est.motion[k]);
      bev_seq.occupancy.push_back(est.occupancy[k]);
    }
    MemoryBank bank(cfg.mgtf.n_history + 1);
    result.final_bev = run_mgtf(bev_seq, cfg.mgtf, ctx.weights.mgtf, bank);
  };
  const auto stage_detect = [&] {
    result.motion_final = velocity_head(result.final_bev, ctx.weights.velocity);
    result.occupancy_final = occupancy_head(result.final_bev, ctx.weights.occupancy);
    result.detections = detect(result.occupancy_final, result.motion_final,
                               cfg.eval.tau_det, cfg.eval.nms_radius_cells);
  };

  struct Stage {
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Stage> stages = {{"radar_encode", stage_radar},
                                     {"mvf", stage_mvf},
                                     {"mfe", stage_mfe},
                                     {"mgtf", stage_mgtf},
                                     {"detect", stage_detect}};

  nlohmann::json out;
  out["format_version"] = 1;
  out["warmup"] = cfg.bench_warmup;
  out["iterations"] = cfg.bench_iterations;
  nlohmann::json jstages;
  for (int i = 0; i < cfg.bench_warmup; ++i)
    for (const Stage& s : stages) s.fn();
  std::vector<std::vector<double>> samples(stages.size());
  std::vector<double> end_to_end;
  for (int i = 0; i < cfg.bench_iterations; ++i) {
    double total = 0.0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const double ms = time_ms(stages[s].fn);
      samples[s].push_back(ms);
      total += ms;
    }
    end_to_end.push_back(total);
  }
  for (std::size_t s = 0; s < stages.size(); ++s)
    jstages[stages[s].name] = {{"median_ms", median(samples[s])}};
  out["stages"] = jstages;
  out["end_to_end"] = {{"median_ms", median(end_to_end)}};
  return out;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace crtbev
