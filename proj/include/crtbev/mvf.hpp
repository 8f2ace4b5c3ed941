#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "crtbev/geometry.hpp"
#include "crtbev/scene.hpp"
#include "crtbev/weights.hpp"

namespace crtbev {

// Per-pixel depth distribution plus foreground score.
struct DepthSegOutput {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<double> depth_prob;        // bins * h * w, softmaxed per pixel
  std::vector<double> foreground_score;  // h * w, in [0, 1]
  std::vector<double> bin_edges;         // bins + 1, increasing, meters

  double prob(int k, int h, int w) const {
    return depth_prob[(static_cast<std::size_t>(k) * height + h) * width + w];
  }
  double fg(int h, int w) const {
    return foreground_score[static_cast<std::size_t>(h) * width + w];
  }
  double bin_center(int k) const { return 0.5 * (bin_edges[k] + bin_edges[k + 1]); }
};

std::vector<double> uniform_bin_edges(double lo, double hi, int bins);

struct MvfDims {
  int channels = 12;      // camera feature channels == BEV channels
  int depth_bins = 32;
  double depth_min = 1.0;
  double depth_max = 60.0;
  int radar_point_dim = 3 + kRadarFeatureDim + 1;  // x_rel, y_rel, z, feature..., sweep_age
};

struct MvfWeights {
  MvfDims dims;
  std::uint64_t init_seed = 0;

  Mlp2 compress_w;          // C -> C -> C, applied per column after max-pool over h
  Mlp2 compress_h;          // C -> C -> C, applied per row after max-pool over w
  LinearLayer fuse_mlp1;    // 2C -> C
  LinearLayer fuse_mlp2;    // C -> C
  LinearLayer fuse_mlp3;    // C -> 1 (attention logit)
  LinearLayer persp_conv;   // 1x1: 2C -> C
  LinearLayer depth_seg;    // 1x1: C -> bins + 1
  LinearLayer gate_cam;     // 1x1: 2C -> C
  LinearLayer gate_radar;   // 1x1: 2C -> C
  LinearLayer fuse_conv;    // 1x1: 2C -> C
  LinearLayer pillar;       // point_dim -> C, purely linear

  static MvfWeights seeded(const MvfDims& dims, std::uint64_t seed);

  // single-file binary bundle; round-trips bit-exactly
  void save(const std::filesystem::path& path) const;
  static MvfWeights load(const std::filesystem::path& path);
};

// --- operations ---

// Max-pool the feature map along height and width, then run the compress
// MLPs. Returns (W_c: C x 1 x W, H_c: C x H x 1).
std::pair<CameraFeatureMap, CameraFeatureMap> compress_features(
    const CameraFeatureMap& fmap, const MvfWeights& w);

// For each image column, the M radar cells whose azimuth is closest to the
// column azimuth (wrapped difference, ties by ascending linear cell index).
// Cells whose center coincides with the ego origin carry no azimuth and are
// excluded from the candidate set.
std::vector<std::vector<int>> azimuth_group(const CameraModel& cam,
                                            const GridSpec& radar_grid, int m);

// Attention-weighted fusion of one compressed column with its M matched
// radar features (radar_feats is M x C, row-major).
std::vector<double> pixelwise_fuse(const std::vector<double>& wc_column,
                                   const std::vector<double>& radar_feats, int m,
                                   const MvfWeights& w);

// Optionally returns the softmax attention weights.
std::vector<double> pixelwise_fuse(const std::vector<double>& wc_column,
                                   const std::vector<double>& radar_feats, int m,
                                   const MvfWeights& w, std::vector<double>* attn_out,
                                   std::vector<double>* intermediates_out);

// F_bar(c,h,j) = W_bar(c,j) * H_c(c,h); output = Conv1x1(concat(F_bar, F)).
CameraFeatureMap enhance_perspective(const CameraFeatureMap& fmap,
                                     const CameraFeatureMap& w_bar,
                                     const CameraFeatureMap& h_c,
                                     const MvfWeights& w);

// 1x1 head: first `bins` channels softmaxed per pixel, last channel sigmoided.
DepthSegOutput depth_seg_head(const CameraFeatureMap& fmap, const MvfWeights& w);

// Foreground pixels (score >= tau_p) splat prob * feature at each depth-bin
// center along their ego-frame ray; sum-pooled per BEV cell.
Grid2D lift_to_bev(const CameraFeatureMap& fmap, const DepthSegOutput& depth,
                   const CameraModel& cam, const GridSpec& grid, double tau_p);

// Simplified pillar encoder: per-cell max-pool of per-point linear embeddings
// of (x_rel, y_rel, z, feature..., sweep_age). Empty cells are zero. The
// embedding is affine, so any feature shared by all points of a cell (the
// per-object velocity channels in particular) passes through the max-pool
// additively and stays linearly recoverable downstream.
Grid2D radar_bev_encode(const RadarPointCloud& cloud, const GridSpec& grid,
                        const LinearLayer& pillar, double sweep_dt);

// Per-modality sigmoid gates followed by a 1x1 fusion conv.
Grid2D gated_fuse(const Grid2D& cam_bev, const Grid2D& radar_bev,
                  const MvfWeights& w);

// Full per-frame MVF forward: RCA-enhanced perspective features, lift, and
// gated fusion with the radar BEV grid. `groups` must come from
// azimuth_group for the same cameras/grid. With use_rca = false the RCA step
// is skipped (W_bar = W_c), which is the camera-only configuration.
Grid2D mvf_forward(const std::vector<CameraView>& cameras, const Grid2D& radar_bev,
                   const std::vector<std::vector<std::vector<int>>>& groups,
                   const MvfWeights& w, double tau_p, bool use_rca,
                   bool fuse_radar);

}  // namespace crtbev
