#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "crtbev/geometry.hpp"
#include "crtbev/rng.hpp"

namespace crtbev {

struct RadarPoint {
  Vec3 position;
  // rcs, radial velocity, measured vx, measured vy (the last two emulate
  // Doppler-compensated velocity channels of automotive radar clouds)
  std::vector<double> feature;
  int sweep_index = 0;
};

constexpr int kRadarFeatureDim = 4;

struct RadarPointCloud {
  std::vector<RadarPoint> points;
  double timestamp = 0.0;
};

// Per-camera dense features, channel-major (c, h, w).
struct CameraFeatureMap {
  int camera_id = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  CameraFeatureMap() = default;
  CameraFeatureMap(int id, int ch, int h, int w)
      : camera_id(id), channels(ch), height(h), width(w),
        data(static_cast<std::size_t>(ch) * h * w, 0.0) {}

  double& at(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  double at(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
};

// Row-major depth image; background pixels hold +infinity.
struct DepthImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  DepthImage() = default;
  DepthImage(int h, int w)
      : height(h), width(w),
        data(static_cast<std::size_t>(h) * w,
             std::numeric_limits<double>::infinity()) {}

  double& at(int h, int w) { return data[static_cast<std::size_t>(h) * width + w]; }
  double at(int h, int w) const { return data[static_cast<std::size_t>(h) * width + w]; }
};

struct CameraView {
  CameraModel model;
  CameraFeatureMap features;
  DepthImage depth_gt;
};

struct Frame {
  double timestamp = 0.0;
  RadarPointCloud radar;
  std::vector<CameraView> cameras;
  std::vector<GtObject> objects;  // current ego frame
  Pose ego_pose;                  // world <- ego
};

struct FrameSequence {
  std::vector<Frame> frames;  // oldest first, spacing t_s
  double t_s = 0.5;
};

struct CameraRigSpec {
  int count = 4;          // evenly spaced yaws starting at 0 (forward)
  int image_w = 64;
  int image_h = 48;
  double hfov_deg = 100.0;
  double mount_height = 1.5;  // meters
  int channels = 12;          // rendered feature channels
};

struct SceneConfig {
  int n_objects = 8;
  double speed_min = 0.0;   // m/s
  double speed_max = 8.0;
  double static_fraction = 0.25;
  int radar_points_per_object = 20;  // per sweep
  int clutter_points = 40;           // per frame
  double radar_sigma = 0.1;          // position noise, meters
  double radar_dropout = 0.1;
  int sweeps = 6;
  double sweep_dt = 1.0 / 12.0;  // seconds between sweeps
  double radar_vel_noise = 0.2;  // m/s on measured velocity channels
  double feature_noise = 0.25;   // camera background texture amplitude
  double t_s = 0.5;              // frame period, seconds (2 Hz keyframes)
  std::uint64_t seed = 1;
  GridSpec grid{96, 96, 0.5, {-24.0, -24.0}};
  CameraRigSpec rig;
  // optional constant ego twist (default: static ego)
  double ego_vx = 0.0;
  double ego_vy = 0.0;
  double ego_yaw_rate = 0.0;

  void validate() const;  // throws std::invalid_argument
};

std::vector<CameraModel> build_camera_rig(const CameraRigSpec& rig);

// Deterministic per-class feature signature painted on object pixels.
std::vector<double> class_signature(int class_id, int channels, std::uint64_t seed);

// Constant-twist ego pose at time t (world <- ego), identity at t = 0.
Pose ego_pose_at(const SceneConfig& cfg, double t);

// --- operations ---

// Seeded multi-frame scene: objects placed without BEV overlap across all
// frames and propagated at constant velocity. Throws std::runtime_error
// ("scene overconstrained") when placement keeps failing.
FrameSequence generate_sequence(const SceneConfig& cfg, int n_frames);

// Accumulated multi-sweep radar cloud for one frame. Sweep s lags the frame
// time by s * sweep_dt; object points are drawn on the current footprint and
// back-propagated by -velocity * lag.
RadarPointCloud sample_radar(const std::vector<GtObject>& objects,
                             const SceneConfig& cfg, double timestamp, Rng& rng);

// Painted feature render plus z-buffered ray-box ground-truth depth.
CameraView render_camera(const std::vector<GtObject>& objects,
                         const CameraModel& cam, int channels,
                         const SceneConfig& cfg, int camera_id, Rng& rng);

// Nearest ray-box hit; returns +infinity when the ray misses the box.
double ray_box_distance(const Vec3& origin, const Vec3& unit_dir,
                        const GtObject& obj);

}  // namespace crtbev
