#include "crtbev/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crtbev {

Mat3 Mat3::rot_z(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 r;
  r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  r.m = {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
  return r;
}

Mat3 Mat3::mul(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
      r.m[3 * i + j] = s;
    }
  }
  return r;
}

bool Mat3::is_rotation(double tol) const {
  const Mat3 should_be_id = mul(transposed());
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(should_be_id.m[3 * i + j] - want) > tol) return false;
    }
  }
  const double det =
      m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
      m[2] * (m[3] * m[7] - m[4] * m[6]);
  return std::abs(det - 1.0) <= tol;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.r = r.transposed();
  const Vec3 it = inv.r.apply(t);
  inv.t = {-it.x, -it.y, -it.z};
  return inv;
}

Pose Pose::compose(const Pose& inner) const {
  Pose out;
  out.r = r.mul(inner.r);
  out.t = r.apply(inner.t) + t;
  return out;
}

void GridSpec::validate() const {
  if (x_cells <= 0) throw std::invalid_argument("grid: x_cells must be > 0");
  if (y_cells <= 0) throw std::invalid_argument("grid: y_cells must be > 0");
  if (!(cell_size > 0.0)) throw std::invalid_argument("grid: cell_size must be > 0");
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y))
    throw std::invalid_argument("grid: origin must be finite");
}

bool Grid2D::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw std::invalid_argument("camera: focal lengths must be > 0");
  if (image_w <= 0 || image_h <= 0)
    throw std::invalid_argument("camera: image size must be positive");
  if (!pose.r.is_rotation(1e-8))
    throw std::invalid_argument("camera: pose rotation is not orthonormal");
}

double Polygon2D::signed_area() const {
  double a = 0.0;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = vertices[i];
    const Vec2& q = vertices[(i + 1) % n];
    a += p.cross(q);
  }
  return 0.5 * a;
}

namespace {

bool segments_intersect_interior(const Vec2& a, const Vec2& b, const Vec2& c,
                                 const Vec2& d) {
  const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q - p).cross(r - p);
  };
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 &&
         o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace

void Polygon2D::validate() const {
  if (vertices.size() < 3)
    throw std::invalid_argument("polygon: needs at least 3 vertices");
  if (!(signed_area() > 0.0))
    throw std::invalid_argument("polygon: must be counter-clockwise with positive area");
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
      if (segments_intersect_interior(vertices[i], vertices[(i + 1) % n],
                                      vertices[j], vertices[(j + 1) % n]))
        throw std::invalid_argument("polygon: self-intersecting");
    }
  }
}

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

double azimuth_of_column(const CameraModel& cam, int j) {
  if (j < 0 || j >= cam.image_w)
    throw std::invalid_argument("azimuth_of_column: column out of range");
  const Vec3 d = cam.pose.rotate(cam.pixel_ray_cam(j + 0.5, cam.cy));
  return wrap_angle(std::atan2(d.y, d.x));
}

double azimuth_of_cell(const GridSpec& spec, int x, int y) {
  if (!spec.contains(x, y))
    throw std::invalid_argument("azimuth_of_cell: cell out of range");
  const Vec2 c = spec.cell_center(x, y);
  if (c.x == 0.0 && c.y == 0.0)
    throw std::invalid_argument("degenerate azimuth");
  return wrap_angle(std::atan2(c.y, c.x));
}

Polygon2D bev_footprint(const GtObject& obj) {
  const double hl = 0.5 * obj.dims.x;
  const double hw = 0.5 * obj.dims.y;
  const double c = std::cos(obj.yaw);
  const double s = std::sin(obj.yaw);
  // CCW in the local frame: (+l,+w), (-l,+w), (-l,-w), (+l,-w)
  const Vec2 local[4] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  Polygon2D poly;
  poly.vertices.reserve(4);
  for (const Vec2& p : local) {
    poly.vertices.push_back({obj.center.x + c * p.x - s * p.y,
                             obj.center.y + s * p.x + c * p.y});
  }
  return poly;
}

Polygon2D clip_convex(const Polygon2D& subject, const Polygon2D& clip) {
  std::vector<Vec2> out = subject.vertices;
  const std::size_t nc = clip.vertices.size();
  for (std::size_t e = 0; e < nc && !out.empty(); ++e) {
    const Vec2 a = clip.vertices[e];
    const Vec2 b = clip.vertices[(e + 1) % nc];
    const Vec2 edge = b - a;
    std::vector<Vec2> in;
    in.swap(out);
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = in[i];
      const Vec2 q = in[(i + 1) % n];
      const double side_p = edge.cross(p - a);
      const double side_q = edge.cross(q - a);
      const bool p_in = side_p >= 0.0;
      const bool q_in = side_q >= 0.0;
      if (p_in) out.push_back(p);
      if (p_in != q_in) {
        const double t = side_p / (side_p - side_q);
        out.push_back(p + (q - p) * t);
      }
    }
  }
  Polygon2D r;
  r.vertices = std::move(out);
  return r;
}

double cell_box_overlap_ratio(const GridSpec& spec, int x, int y,
                              const std::vector<Polygon2D>& polys) {
  if (!spec.contains(x, y))
    throw std::invalid_argument("cell_box_overlap_ratio: cell out of range");
  const Vec2 lo{spec.origin.x + x * spec.cell_size,
                spec.origin.y + y * spec.cell_size};
  Polygon2D cell;
  cell.vertices = {{lo.x, lo.y},
                   {lo.x + spec.cell_size, lo.y},
                   {lo.x + spec.cell_size, lo.y + spec.cell_size},
                   {lo.x, lo.y + spec.cell_size}};
  const double cell_area = spec.cell_size * spec.cell_size;
  double covered = 0.0;
  for (const Polygon2D& poly : polys) {
    const Polygon2D inter = clip_convex(cell, poly);
    if (inter.vertices.size() >= 3) covered += inter.signed_area();
  }
  if (covered > cell_area * (1.0 + 1e-9))
    throw std::runtime_error("cell_box_overlap_ratio: overlapping footprints violate the disjointness guarantee");
  return std::min(1.0, covered / cell_area);
}

}  // namespace crtbev
