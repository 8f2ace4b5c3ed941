#pragma once

#include <cstdint>
#include <vector>

#include "crtbev/geometry.hpp"
#include "crtbev/mvf.hpp"
#include "crtbev/scene.hpp"
#include "crtbev/weights.hpp"

namespace crtbev {

// channels = 2 (v_x, v_y) per cell
using MotionMap = Grid2D;
// channels = 1, values in [0, 1]
using OccupancyMap = Grid2D;

// Linear head: zero-padded 3x3 conv followed by a 1x1 conv, no activation
// between, so the composition is one linear map on 3x3 patches.
struct HeadWeights {
  int in_ch = 0;
  int mid_ch = 0;
  int out_ch = 0;
  std::vector<double> w3;  // mid * in * 3 * 3
  std::vector<double> b3;  // mid
  LinearLayer w1;          // out x mid

  static HeadWeights seeded(int in, int mid, int out, Rng& rng);
  // Wraps an effective patch-space map (rows: out, cols: 9 * in + 1 with the
  // bias last) as a 3x3 conv plus identity 1x1.
  static HeadWeights from_patch_weights(int in_ch, int out_ch,
                                        const std::vector<double>& patch_w);
  std::vector<double> to_patch_weights() const;  // out x (9 * in + 1), row-major
};

Grid2D head_forward(const Grid2D& bev, const HeadWeights& w);

MotionMap velocity_head(const Grid2D& bev, const HeadWeights& w);
OccupancyMap occupancy_head(const Grid2D& bev, const HeadWeights& w);

// Eq. targets: cells whose footprint-coverage ratio reaches tau_iou get
// occupancy 1 and the velocity of the object with the largest per-object
// overlap (ties by object order); everything else is (0, 0) / 0.
struct Targets {
  MotionMap motion;
  OccupancyMap occupancy;
};
Targets make_targets(const GridSpec& grid, const std::vector<GtObject>& objects,
                     double tau_iou);

struct LossWeights {
  double depth = 3.0;
  double seg = 25.0;
  double vel = 1.0;
  double occ = 30.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

struct LossBreakdown {
  double total = 0.0;
  double depth = 0.0;
  double seg = 0.0;
  double vel = 0.0;
  double occ = 0.0;
};

// Binary focal loss on a probability (clamped to [eps, 1 - eps]).
double focal_loss(double p, int target, double gamma, double alpha);
// d(focal)/dz where p = sigmoid(z).
double focal_loss_grad_z(double p, int target, double gamma, double alpha);

// total = depth * L_depth + seg * L_seg + vel * L_vel + occ * L_occ.
// L_vel: MSE over all cells and both channels. L_occ: mean focal loss.
// L_depth: BCE of the depth distribution against the one-hot GT bin, over
// pixels with finite GT depth. L_seg: BCE of the foreground score against
// the finite-depth mask, over all pixels.
LossBreakdown mfe_loss(const MotionMap& motion, const OccupancyMap& occupancy,
                       const MotionMap& motion_gt, const OccupancyMap& occupancy_gt,
                       const DepthSegOutput& depth_pred, const DepthImage& depth_gt,
                       const LossWeights& lw);

// One (fused BEV, targets) triple for head fitting.
struct FitSample {
  const Grid2D* bev = nullptr;
  const MotionMap* motion_gt = nullptr;
  const OccupancyMap* occupancy_gt = nullptr;
};

struct FitOptions {
  double ridge_lambda = 1e-4;
  int gd_iterations = 300;
  double gd_learning_rate = 2.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  // keep all positive cells; keep this fraction of background cells
  double background_keep = 1.0;
  std::uint64_t subsample_seed = 0;
};

struct FitResult {
  HeadWeights velocity;
  HeadWeights occupancy;
  double l_vel = 0.0;   // final MSE of the velocity head on the fit set
  double l_occ = 0.0;   // final focal loss of the occupancy head on the fit set
  int n_samples = 0;    // cells used
  double ridge_lambda = 0.0;
};

// Flattened per-cell 3x3 patch dataset used by both fitters.
struct PatchDataset {
  int dim = 0;      // 9 * channels + 1 (bias last)
  std::size_t n = 0;
  std::vector<double> x;      // n * dim
  std::vector<double> occ_y;  // n, 0/1
  std::vector<double> vel_y;  // n * 2
};
PatchDataset build_patch_dataset(const std::vector<FitSample>& samples,
                                 const FitOptions& opt);

// Mean focal loss over the dataset for patch weights w (dim entries), and
// optionally its analytic gradient.
double occupancy_loss_and_grad(const PatchDataset& data,
                               const std::vector<double>& w, double gamma,
                               double alpha, std::vector<double>* grad_out);

// Solves (X^T X + lambda I) w = X^T y per target column by Cholesky.
// Throws std::runtime_error("ill-conditioned fit; increase ridge lambda")
// when the normal matrix is not positive definite.
std::vector<double> ridge_solve(const PatchDataset& data,
                                const std::vector<double>& targets, int n_targets,
                                double lambda);

// Velocity head by closed-form ridge regression (exact ERM for the linear
// head); occupancy head by full-batch gradient descent on the focal loss.
FitResult fit_heads(const std::vector<FitSample>& samples, const FitOptions& opt);

}  // namespace crtbev
