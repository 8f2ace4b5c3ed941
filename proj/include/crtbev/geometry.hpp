#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace crtbev {

// Conventions used throughout:
//   ego frame: x forward, y left, z up
//   image:     x right, y down (so image-x right maps to ego -y for a
//              forward camera, image-y down maps to ego -z)
// Camera rays are expressed in a forward-left-up camera frame; the camera
// pose rotates that frame into the ego frame.

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec2 xy() const { return {x, y}; }
};

// Row-major 3x3 rotation matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 rot_z(double yaw);

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transposed() const;
  Mat3 mul(const Mat3& o) const;
  bool is_rotation(double tol = 1e-9) const;
};

// Rigid transform: p_out = r * p_in + t.
struct Pose {
  Mat3 r;
  Vec3 t;

  Vec3 apply(const Vec3& p) const { return r.apply(p) + t; }
  Vec3 rotate(const Vec3& v) const { return r.apply(v); }
  Pose inverse() const;
  Pose compose(const Pose& inner) const;  // apply inner first, then this
};

struct GridSpec {
  int x_cells = 0;
  int y_cells = 0;
  double cell_size = 0.0;
  Vec2 origin;  // lower-left corner of cell (0, 0)

  void validate() const;  // throws std::invalid_argument
  int cell_count() const { return x_cells * y_cells; }
  int linear_index(int x, int y) const { return x * y_cells + y; }
  bool contains(int x, int y) const {
    return x >= 0 && x < x_cells && y >= 0 && y < y_cells;
  }
  Vec2 cell_center(int x, int y) const {
    return {origin.x + (x + 0.5) * cell_size, origin.y + (y + 0.5) * cell_size};
  }
  // Cell of a metric point; cells are closed on their lower-left edges.
  std::optional<std::pair<int, int>> cell_of(const Vec2& p) const {
    const int x = static_cast<int>(std::floor((p.x - origin.x) / cell_size));
    const int y = static_cast<int>(std::floor((p.y - origin.y) / cell_size));
    if (!contains(x, y)) return std::nullopt;
    return std::make_pair(x, y);
  }
  bool same_geometry(const GridSpec& o) const {
    return x_cells == o.x_cells && y_cells == o.y_cells &&
           cell_size == o.cell_size && origin.x == o.origin.x &&
           origin.y == o.origin.y;
  }
};

// Dense channel-major (channel, x, y) feature grid.
struct Grid2D {
  GridSpec spec;
  int channels = 0;
  std::vector<double> data;

  Grid2D() = default;
  Grid2D(const GridSpec& s, int ch)
      : spec(s), channels(ch),
        data(static_cast<std::size_t>(ch) * s.x_cells * s.y_cells, 0.0) {}

  double& at(int c, int x, int y) {
    return data[(static_cast<std::size_t>(c) * spec.x_cells + x) * spec.y_cells + y];
  }
  double at(int c, int x, int y) const {
    return data[(static_cast<std::size_t>(c) * spec.x_cells + x) * spec.y_cells + y];
  }
  bool all_finite() const;
};

struct CameraModel {
  double fx = 0.0, fy = 0.0;  // pixels
  double cx = 0.0, cy = 0.0;  // pixels
  Pose pose;                  // ego <- camera
  int image_w = 0, image_h = 0;

  void validate() const;
  // Ray through pixel (u, v) in the forward-left-up camera frame (not unit).
  Vec3 pixel_ray_cam(double u, double v) const {
    return {1.0, -(u - cx) / fx, -(v - cy) / fy};
  }
  // Unit ray direction in the ego frame.
  Vec3 pixel_ray_ego(double u, double v) const {
    Vec3 d = pixel_ray_cam(u, v);
    d = pose.rotate(d);
    const double n = d.norm();
    return {d.x / n, d.y / n, d.z / n};
  }
};

struct GtObject {
  Vec3 center;        // meters, ego/world frame
  Vec3 dims;          // length (along heading), width, height; meters
  double yaw = 0.0;   // radians, in (-pi, pi]
  Vec2 velocity;      // m/s, planar
  int class_id = 0;

  double speed() const { return velocity.norm(); }
};

// Simple polygon, counter-clockwise, signed area > 0.
struct Polygon2D {
  std::vector<Vec2> vertices;

  double signed_area() const;
  void validate() const;  // >= 3 vertices, CCW, non-self-intersecting
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

// --- core-geometry operations ---

// Azimuth of the ego-frame ray through pixel (j + 0.5, cy) of column j.
double azimuth_of_column(const CameraModel& cam, int j);

// Azimuth of the center of cell (x, y) relative to the ego origin.
// Throws std::invalid_argument("degenerate azimuth") if the center is (0, 0).
double azimuth_of_cell(const GridSpec& spec, int x, int y);

// BEV footprint of an oriented box: 4-vertex CCW rectangle.
Polygon2D bev_footprint(const GtObject& obj);

// Intersection of two convex CCW polygons (Sutherland-Hodgman).
Polygon2D clip_convex(const Polygon2D& subject, const Polygon2D& clip);

// Fraction of cell (x, y) covered by the union of the given footprints.
// Footprints are assumed pairwise disjoint (the scene generator guarantees
// it); a summed coverage above the cell area raises std::runtime_error.
double cell_box_overlap_ratio(const GridSpec& spec, int x, int y,
                              const std::vector<Polygon2D>& polys);

}  // namespace crtbev
