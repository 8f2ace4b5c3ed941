#include "crtbev/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crtbev {

void SceneConfig::validate() const {
  grid.validate();
  if (n_objects < 0) throw std::invalid_argument("scene: n_objects must be >= 0");
  if (speed_min < 0.0 || speed_max < speed_min)
    throw std::invalid_argument("scene: speed range must satisfy 0 <= min <= max");
  if (static_fraction < 0.0 || static_fraction > 1.0)
    throw std::invalid_argument("scene: static_fraction must be in [0, 1]");
  if (radar_dropout < 0.0 || radar_dropout > 1.0)
    throw std::invalid_argument("scene: radar_dropout must be in [0, 1]");
  if (radar_points_per_object < 0 || clutter_points < 0)
    throw std::invalid_argument("scene: point counts must be >= 0");
  if (sweeps < 1) throw std::invalid_argument("scene: sweeps must be >= 1");
  if (!(sweep_dt > 0.0)) throw std::invalid_argument("scene: sweep_dt must be > 0");
  if (!(t_s > 0.0)) throw std::invalid_argument("scene: t_s must be > 0");
  if (radar_sigma < 0.0) throw std::invalid_argument("scene: radar_sigma must be >= 0");
  if (rig.count < 1) throw std::invalid_argument("scene: rig.count must be >= 1");
  if (rig.image_w < 2 || rig.image_h < 2)
    throw std::invalid_argument("scene: camera image must be at least 2x2");
  if (!(rig.hfov_deg > 0.0 && rig.hfov_deg < 180.0))
    throw std::invalid_argument("scene: hfov_deg must be in (0, 180)");
  if (rig.channels < 1) throw std::invalid_argument("scene: rig.channels must be >= 1");
}

std::vector<CameraModel> build_camera_rig(const CameraRigSpec& rig) {
  std::vector<CameraModel> cams;
  cams.reserve(rig.count);
  const double hfov = rig.hfov_deg * std::numbers::pi / 180.0;
  const double fx = (rig.image_w / 2.0) / std::tan(hfov / 2.0);
  for (int i = 0; i < rig.count; ++i) {
    CameraModel cam;
    cam.fx = fx;
    cam.fy = fx;
    cam.cx = rig.image_w / 2.0;
    cam.cy = rig.image_h / 2.0;
    cam.image_w = rig.image_w;
    cam.image_h = rig.image_h;
    cam.pose.r = Mat3::rot_z(2.0 * std::numbers::pi * i / rig.count);
    cam.pose.t = {0.0, 0.0, rig.mount_height};
    cams.push_back(cam);
  }
  return cams;
}

std::vector<double> class_signature(int class_id, int channels, std::uint64_t seed) {
  Rng rng(derive_seed(derive_seed(seed, "class_signature"),
                      static_cast<std::uint64_t>(class_id)));
  std::vector<double> sig(channels);
  for (double& v : sig) v = rng.uniform(0.2, 1.0);
  return sig;
}

Pose ego_pose_at(const SceneConfig& cfg, double t) {
  Pose pose;
  const double w = cfg.ego_yaw_rate;
  const Vec2 v{cfg.ego_vx, cfg.ego_vy};
  if (std::abs(w) < 1e-12) {
    pose.r = Mat3::identity();
    pose.t = {v.x * t, v.y * t, 0.0};
    return pose;
  }
  // constant body twist: closed-form SE(2) exponential
  const double th = w * t;
  const double s = std::sin(th), c = std::cos(th);
  pose.r = Mat3::rot_z(th);
  pose.t = {(s * v.x - (1.0 - c) * v.y) / w, ((1.0 - c) * v.x + s * v.y) / w, 0.0};
  return pose;
}

namespace {

Vec2 sample_in_footprint(const GtObject& obj, Rng& rng) {
  const double lx = rng.uniform(-0.5, 0.5) * obj.dims.x;
  const double ly = rng.uniform(-0.5, 0.5) * obj.dims.y;
  const double c = std::cos(obj.yaw), s = std::sin(obj.yaw);
  return {obj.center.x + c * lx - s * ly, obj.center.y + s * lx + c * ly};
}

bool footprints_clash(const GtObject& a, const GtObject& b, double margin) {
  // inflate both boxes and test the rotated rectangles via clipping
  GtObject ai = a, bi = b;
  ai.dims.x += margin;
  ai.dims.y += margin;
  bi.dims.x += margin;
  bi.dims.y += margin;
  const Polygon2D inter = clip_convex(bev_footprint(ai), bev_footprint(bi));
  return inter.vertices.size() >= 3 && inter.signed_area() > 1e-12;
}

GtObject object_at_time(const GtObject& end_state, double dt_before_end) {
  GtObject o = end_state;
  o.center.x -= o.velocity.x * dt_before_end;
  o.center.y -= o.velocity.y * dt_before_end;
  return o;
}

}  // namespace

FrameSequence generate_sequence(const SceneConfig& cfg, int n_frames) {
  cfg.validate();
  if (n_frames < 1) throw std::invalid_argument("generate_sequence: n_frames must be >= 1");

  Rng obj_rng(derive_seed(cfg.seed, "objects"));

  // Objects are sampled by their state at the final frame so that every
  // object is inside the grid when the fused frame is evaluated; earlier
  // positions follow from the constant-velocity model.
  const double span_x = cfg.grid.x_cells * cfg.grid.cell_size;
  const double span_y = cfg.grid.y_cells * cfg.grid.cell_size;
  const double margin = 3.0;
  const double lo_x = cfg.grid.origin.x + margin;
  const double hi_x = cfg.grid.origin.x + span_x - margin;
  const double lo_y = cfg.grid.origin.y + margin;
  const double hi_y = cfg.grid.origin.y + span_y - margin;
  if (lo_x >= hi_x || lo_y >= hi_y)
    throw std::runtime_error("scene overconstrained: grid too small for placement margin");

  std::vector<GtObject> end_states;
  int attempts = 0;
  const int max_attempts = 200 * std::max(1, cfg.n_objects);
  while (static_cast<int>(end_states.size()) < cfg.n_objects) {
    if (++attempts > max_attempts)
      throw std::runtime_error("scene overconstrained: could not place objects without overlap");
    GtObject obj;
    obj.dims = {obj_rng.uniform(2.5, 5.0), obj_rng.uniform(1.4, 2.4),
                obj_rng.uniform(1.2, 2.2)};
    obj.class_id = static_cast<int>(obj_rng.below(3));
    obj.yaw = wrap_angle(obj_rng.uniform(-std::numbers::pi, std::numbers::pi));
    obj.center = {obj_rng.uniform(lo_x, hi_x), obj_rng.uniform(lo_y, hi_y),
                  obj.dims.z / 2.0};
    if (obj_rng.bernoulli(cfg.static_fraction)) {
      obj.velocity = {0.0, 0.0};
    } else {
      const double speed = obj_rng.uniform(cfg.speed_min, cfg.speed_max);
      obj.velocity = {speed * std::cos(obj.yaw), speed * std::sin(obj.yaw)};
    }
    // reject trajectories that collide with an accepted object in any frame
    bool ok = true;
    for (int k = 0; k < n_frames && ok; ++k) {
      const double dt = (n_frames - 1 - k) * cfg.t_s;
      const GtObject cand = object_at_time(obj, dt);
      for (const GtObject& other_end : end_states) {
        if (footprints_clash(cand, object_at_time(other_end, dt), 0.5)) {
          ok = false;
          break;
        }
      }
    }
    if (ok) end_states.push_back(obj);
  }

  FrameSequence seq;
  seq.t_s = cfg.t_s;
  seq.frames.reserve(n_frames);
  const std::vector<CameraModel> rig = build_camera_rig(cfg.rig);
  for (int k = 0; k < n_frames; ++k) {
    Frame frame;
    frame.timestamp = k * cfg.t_s;
    frame.ego_pose = ego_pose_at(cfg, frame.timestamp);
    const double dt = (n_frames - 1 - k) * cfg.t_s;
    frame.objects.reserve(end_states.size());
    for (const GtObject& end : end_states) frame.objects.push_back(object_at_time(end, dt));

    Rng radar_rng(derive_seed(derive_seed(cfg.seed, "radar"), static_cast<std::uint64_t>(k)));
    frame.radar = sample_radar(frame.objects, cfg, frame.timestamp, radar_rng);

    frame.cameras.reserve(rig.size());
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

RadarPointCloud sample_radar(const std::vector<GtObject>& objects,
                             const SceneConfig& cfg, double timestamp, Rng& rng) {
  RadarPointCloud cloud;
  cloud.timestamp = timestamp;
  for (const GtObject& obj : objects) {
    for (int s = 0; s < cfg.sweeps; ++s) {
      const double lag = s * cfg.sweep_dt;
      for (int p = 0; p < cfg.radar_points_per_object; ++p) {
        // draw regardless of dropout so the point stream is stable
        const Vec2 on_box = sample_in_footprint(obj, rng);
        const double z = rng.uniform(0.0, obj.dims.z);
        const double nx = rng.normal(0.0, cfg.radar_sigma);
        const double ny = rng.normal(0.0, cfg.radar_sigma);
        const double rcs = rng.uniform(0.3, 1.0);
        const double vxm = obj.velocity.x + rng.normal(0.0, cfg.radar_vel_noise);
        const double vym = obj.velocity.y + rng.normal(0.0, cfg.radar_vel_noise);
        const bool dropped = rng.bernoulli(cfg.radar_dropout);
        if (dropped) continue;
        RadarPoint pt;
        pt.position = {on_box.x - obj.velocity.x * lag + nx,
                       on_box.y - obj.velocity.y * lag + ny, z};
        const double range = std::max(pt.position.xy().norm(), 1e-6);
        const double vr = (obj.velocity.x * pt.position.x +
                           obj.velocity.y * pt.position.y) / range;
        pt.feature = {rcs, vr, vxm, vym};
        pt.sweep_index = s;
        cloud.points.push_back(std::move(pt));
      }
    }
  }
  const double span_x = cfg.grid.x_cells * cfg.grid.cell_size;
  const double span_y = cfg.grid.y_cells * cfg.grid.cell_size;
  for (int p = 0; p < cfg.clutter_points; ++p) {
    RadarPoint pt;
    pt.position = {cfg.grid.origin.x + rng.uniform() * span_x,
                   cfg.grid.origin.y + rng.uniform() * span_y,
                   rng.uniform(0.0, 3.0)};
    pt.feature = {rng.uniform(0.0, 0.4), rng.normal(0.0, 0.4),
                  rng.normal(0.0, 0.4), rng.normal(0.0, 0.4)};
    pt.sweep_index = static_cast<int>(rng.below(cfg.sweeps));
    cloud.points.push_back(std::move(pt));
  }
  return cloud;
}

double ray_box_distance(const Vec3& origin, const Vec3& unit_dir, const GtObject& obj) {
  // slab test in the object frame (box centered at obj.center, yawed)
  const double c = std::cos(obj.yaw), s = std::sin(obj.yaw);
  const Vec3 rel = origin - obj.center;
  const Vec3 o{c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z};
  const Vec3 d{c * unit_dir.x + s * unit_dir.y, -s * unit_dir.x + c * unit_dir.y,
               unit_dir.z};
  const double half[3] = {obj.dims.x / 2.0, obj.dims.y / 2.0, obj.dims.z / 2.0};
  const double os[3] = {o.x, o.y, o.z};
  const double ds[3] = {d.x, d.y, d.z};
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ds[a]) < 1e-12) {
      if (std::abs(os[a]) > half[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (-half[a] - os[a]) / ds[a];
    double t1 = (half[a] - os[a]) / ds[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::numeric_limits<double>::infinity();
  }
  return t_near;
}

CameraView render_camera(const std::vector<GtObject>& objects,
                         const CameraModel& cam, int channels,
                         const SceneConfig& cfg, int camera_id, Rng& rng) {
  CameraView view;
  view.model = cam;
  view.model.validate();
  view.features = CameraFeatureMap(camera_id, channels, cam.image_h, cam.image_w);
  view.depth_gt = DepthImage(cam.image_h, cam.image_w);

  std::vector<std::vector<double>> signatures;
  signatures.reserve(objects.size());
  for (const GtObject& obj : objects)
    signatures.push_back(class_signature(obj.class_id, channels, cfg.seed));

  const Vec3 origin = cam.pose.t;
  for (int h = 0; h < cam.image_h; ++h) {
    for (int w = 0; w < cam.image_w; ++w) {
      const Vec3 dir = cam.pixel_ray_ego(w + 0.5, h + 0.5);
      double best = std::numeric_limits<double>::infinity();
      int best_obj = -1;
      for (std::size_t i = 0; i < objects.size(); ++i) {
        const double t = ray_box_distance(origin, dir, objects[i]);
        if (t < best) {
          best = t;
          best_obj = static_cast<int>(i);
        }
      }
      // noise is drawn per pixel so the render stream does not depend on hits
      std::vector<double> noise(channels);
      for (double& v : noise) v = rng.normal(0.0, cfg.feature_noise);
      if (best_obj >= 0) {
        view.depth_gt.at(h, w) = best;
        for (int ch = 0; ch < channels; ++ch)
          view.features.at(ch, h, w) = signatures[best_obj][ch];
      } else {
        for (int ch = 0; ch < channels; ++ch) view.features.at(ch, h, w) = noise[ch];
      }
    }
  }
  return view;
}

}  // namespace crtbev
