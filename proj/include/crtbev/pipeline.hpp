#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "crtbev/config.hpp"
#include "crtbev/detect.hpp"
#include "crtbev/mfe.hpp"
#include "crtbev/mgtf.hpp"
#include "crtbev/mvf.hpp"
#include "crtbev/scene.hpp"

namespace crtbev {

struct PipelineWeights {
  MvfWeights mvf;
  HeadWeights velocity;
  HeadWeights occupancy;
  MgtfWeights mgtf;
  bool heads_fitted = false;
};

// All weights derive from the "weights" substream of the root seed; the
// MGTF reduction starts as a per-channel average with an identity output
// conv so the recurrence is a running average of aligned features.
PipelineWeights seeded_pipeline_weights(const RunConfig& cfg);

void save_heads(const std::filesystem::path& path, const HeadWeights& velocity,
                const HeadWeights& occupancy);
void load_heads(const std::filesystem::path& path, HeadWeights& velocity,
                HeadWeights& occupancy);

// Immutable per-run state: config, weights, azimuth groups for the rig.
struct PipelineContext {
  RunConfig cfg;
  PipelineWeights weights;
  std::vector<std::vector<std::vector<int>>> groups;  // per camera, per column

  static PipelineContext create(const RunConfig& cfg);
};

// Per-frame fused BEV maps for one sequence. Camera-only mode skips RCA and
// returns the lifted camera BEV unfused; the other modes share identical
// outputs (they differ only inside MGTF).
std::vector<Grid2D> sequence_bev_maps(const FrameSequence& seq,
                                      const PipelineContext& ctx,
                                      PipelineMode mode);

// Motion/occupancy maps per frame: fitted (or seeded) heads on the fused
// maps, or GT targets when cfg.eval.oracle_heads is set.
struct FrameEstimates {
  std::vector<MotionMap> motion;
  std::vector<OccupancyMap> occupancy;
};
FrameEstimates estimate_motion(const std::vector<Grid2D>& bev_maps,
                               const FrameSequence& seq,
                               const PipelineContext& ctx);

struct SequenceResult {
  Grid2D final_bev;
  MotionMap motion_final;
  OccupancyMap occupancy_final;
  std::vector<Detection> detections;
  std::vector<GtObject> eval_gt;  // final-frame objects inside the grid
};

SequenceResult run_sequence(const FrameSequence& seq, const PipelineContext& ctx);

// Head fitting over per-frame fused maps and rasterized targets of the
// given sequences (mode decides the feature source).
FitResult fit_sequences(const std::vector<FrameSequence>& seqs,
                        const PipelineContext& ctx, PipelineMode mode);

// Motion-aware vs naive-concatenation comparison on identical scenes,
// seeds, weights, and fitted heads.
CompareReport compare_pipelines(const std::vector<FrameSequence>& seqs,
                                const RunConfig& cfg);

// Per-stage wall-clock medians, milliseconds.
nlohmann::json bench_pipeline(const RunConfig& cfg);

// Runs fn(i) for i in [0, n) on `workers` threads; exceptions rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

// cfg.n_sequences seeded sequences; sequence i draws from substream
// (root seed, "scene", i) so sets are reproducible element-wise.
std::vector<FrameSequence> generate_scene_set(const RunConfig& cfg);

std::vector<GtObject> eval_ground_truth(const Frame& frame, const GridSpec& grid);

}  // namespace crtbev
