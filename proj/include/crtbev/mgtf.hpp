#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "crtbev/geometry.hpp"
#include "crtbev/mfe.hpp"
#include "crtbev/weights.hpp"

namespace crtbev {

// Per-cell shift in cell units plus a dynamic mask (speed > tau_v).
struct ShiftField {
  Grid2D delta;                       // channels = 2: (dx, dy)
  std::vector<std::uint8_t> dynamic;  // one flag per cell
};

ShiftField compute_shift(const MotionMap& motion, double t_s, double tau_v,
                         double cell_size);

// Scatter warp: every dynamic source cell lands at (i + round(dx),
// j + round(dy)); static cells pass through unshifted (set
// static_passthrough = false for the literal reading that drops them).
// Target cells average their contributors; empty targets are zero.
// Rounding is half-away-from-zero.
Grid2D warp(const Grid2D& prev, const ShiftField& shifts,
            bool static_passthrough = true);

enum class GateMode { kSoft, kHard };

struct MgtfConfig {
  int n_history = 6;      // frames fused before the current one
  double t_s = 0.5;       // seconds per frame (2 Hz keyframes)
  double tau_v = 1.0;     // m/s; dynamic-cell threshold
  GateMode gate_mode = GateMode::kSoft;
  double tau_b = 0.05;    // hard-gate threshold on the occupancy score
  bool static_passthrough = true;
  bool gate_both_halves = true;  // false gates only the shifted half
  bool disable_warp = false;     // naive concatenation baseline
  bool ego_compensation = false; // rigid re-sampling of past grids first
};

struct MgtfWeights {
  LinearLayer reduce;      // 1x1: 2C -> C, applied after each fuse step
  LinearLayer final_conv;  // 1x1: C -> C, applied to the last fused map

  // reduce = per-channel average of the two halves, final = identity; keeps
  // the recurrence a running average so per-frame heads stay calibrated
  static MgtfWeights averaging(int channels);
  static MgtfWeights seeded(int channels, std::uint64_t seed);
};

// One recurrent step: concat(warped_prev, current), occupancy gate, reduce.
Grid2D fuse_step(const Grid2D& warped_prev, const Grid2D& current,
                 const OccupancyMap& occupancy, const MgtfConfig& cfg,
                 const LinearLayer& reduce);

// Cache of fused maps keyed by timestamp (microseconds); holds at most
// `capacity` entries, evicting the smallest timestamp first.
class MemoryBank {
 public:
  explicit MemoryBank(int capacity) : capacity_(capacity) {}

  static std::int64_t key_of(double timestamp);
  void put(double timestamp, Grid2D grid);
  const Grid2D* find(double timestamp) const;
  std::size_t size() const { return entries_.size(); }
  int capacity() const { return capacity_; }
  const std::map<std::int64_t, Grid2D>& entries() const { return entries_; }

  void save(const std::filesystem::path& dir) const;
  static MemoryBank load(const std::filesystem::path& dir);

 private:
  int capacity_ = 0;
  std::map<std::int64_t, Grid2D> entries_;
};

// Aligned per-timestamp inputs, oldest first.
struct BevSequence {
  std::vector<double> timestamps;
  std::vector<Grid2D> bev;
  std::vector<MotionMap> motion;
  std::vector<OccupancyMap> occupancy;
  // world <- ego poses; required when cfg.ego_compensation is set
  std::vector<Pose> ego_poses;
};

// Nearest-cell rigid resampling of a past grid into the current ego frame.
Grid2D ego_align(const Grid2D& past, const Pose& world_from_past,
                 const Pose& world_from_current);

// Recurrent motion-guided fusion over the whole sequence. Fused maps are
// cached in the bank; timestamps already present are reused, so a warm
// rerun is bit-identical to a cold one. Returns final_conv(B_hat_t).
Grid2D run_mgtf(const BevSequence& seq, const MgtfConfig& cfg,
                const MgtfWeights& w, MemoryBank& bank);

}  // namespace crtbev
