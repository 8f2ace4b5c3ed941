#include <doctest.h>

#include <cmath>
#include <numbers>

#include "crtbev/geometry.hpp"
#include "crtbev/rng.hpp"
#include "oracles.hpp"

using namespace crtbev;

namespace {

CameraModel forward_camera(int w = 64, int h = 48, double fx = 32.0) {
  CameraModel cam;
  cam.fx = fx;
  cam.fy = fx;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.image_w = w;
  cam.image_h = h;
  return cam;
}

GtObject box(double cx, double cy, double l, double w, double yaw,
             Vec2 vel = {0, 0}) {
  GtObject obj;
  obj.center = {cx, cy, 0.75};
  obj.dims = {l, w, 1.5};
  obj.yaw = yaw;
  obj.velocity = vel;
  return obj;
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("azimuth_of_column: principal ray of a forward camera is 0") {
  CameraModel cam = forward_camera(80);
  cam.cx = 32.5;  // principal column at j = 32 (j + 0.5 == cx)
  CHECK(azimuth_of_column(cam, 32) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("azimuth_of_column: one focal length right of center is -pi/4") {
  CameraModel cam = forward_camera(80);
  cam.cx = 32.5;
  // j + 0.5 == cx + fx; image-x right maps to ego -y
  const int j = 64;
  CHECK(azimuth_of_column(cam, j) == doctest::Approx(-std::numbers::pi / 4).epsilon(1e-12));
}

TEST_CASE("azimuth_of_column: camera yaw adds to the azimuth") {
  CameraModel cam = forward_camera(80);
  cam.cx = 32.5;
  cam.pose.r = Mat3::rot_z(std::numbers::pi / 2);
  CHECK(azimuth_of_column(cam, 32) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
}

TEST_CASE("azimuth_of_column: out-of-range column is rejected") {
  CameraModel cam = forward_camera();
  CHECK_THROWS_AS(azimuth_of_column(cam, -1), std::invalid_argument);
  CHECK_THROWS_AS(azimuth_of_column(cam, cam.image_w), std::invalid_argument);
}

TEST_CASE("azimuth_of_column: monotone across a forward camera's FOV") {
  CameraModel cam = forward_camera(97, 48, 40.0);
  double prev = azimuth_of_column(cam, 0);
  for (int j = 1; j < cam.image_w; ++j) {
    const double a = azimuth_of_column(cam, j);
    CHECK(a < prev);  // image-x right sweeps azimuth from +left to -right
    prev = a;
  }
}

TEST_CASE("azimuth_of_cell: axis and diagonal cases") {
  GridSpec spec{10, 10, 1.0, {-5.0, -5.0}};
  // cell (9, 4): center (4.5, -0.5)? use explicit constructions instead
  GridSpec right{1, 1, 10.0, {0.0, -5.0}};   // center (5, 0)
  CHECK(azimuth_of_cell(right, 0, 0) == doctest::Approx(0.0));
  GridSpec up{1, 1, 10.0, {-5.0, 0.0}};      // center (0, 5)
  CHECK(azimuth_of_cell(up, 0, 0) == doctest::Approx(std::numbers::pi / 2));
  GridSpec diag{1, 1, 6.0, {-6.0, -6.0}};    // center (-3, -3)
  CHECK(azimuth_of_cell(diag, 0, 0) == doctest::Approx(-3 * std::numbers::pi / 4));
  (void)spec;
}

TEST_CASE("azimuth_of_cell: degenerate center cell throws") {
  GridSpec spec{1, 1, 2.0, {-1.0, -1.0}};  // center exactly (0, 0)
  CHECK_THROWS_WITH_AS(azimuth_of_cell(spec, 0, 0), "degenerate azimuth",
                       std::invalid_argument);
}

TEST_CASE("azimuth_of_cell: antisymmetric under point reflection") {
  GridSpec spec{16, 16, 0.5, {-4.0, -4.0}};
  for (int x = 0; x < 16; ++x) {
    for (int y = 0; y < 16; ++y) {
      // the reflected cell of (x, y) is (15 - x, 15 - y) for this grid
      const double a = azimuth_of_cell(spec, x, y);
      const double b = azimuth_of_cell(spec, 15 - x, 15 - y);
      const double diff = std::abs(wrap_angle(a - b));
      CHECK(diff == doctest::Approx(std::numbers::pi).epsilon(1e-12));
    }
  }
}

TEST_CASE("bev_footprint: axis-aligned box") {
  const Polygon2D poly = bev_footprint(box(0, 0, 2, 1, 0));
  REQUIRE(poly.vertices.size() == 4);
  CHECK(poly.vertices[0].x == doctest::Approx(1.0));
  CHECK(poly.vertices[0].y == doctest::Approx(0.5));
  CHECK(poly.vertices[1].x == doctest::Approx(-1.0));
  CHECK(poly.vertices[1].y == doctest::Approx(0.5));
  CHECK(poly.vertices[2].x == doctest::Approx(-1.0));
  CHECK(poly.vertices[2].y == doctest::Approx(-0.5));
  CHECK(poly.vertices[3].x == doctest::Approx(1.0));
  CHECK(poly.vertices[3].y == doctest::Approx(-0.5));
  CHECK(poly.signed_area() > 0.0);
  CHECK_NOTHROW(poly.validate());
}

TEST_CASE("bev_footprint: quarter turn swaps extents") {
  const Polygon2D poly = bev_footprint(box(0, 0, 2, 1, std::numbers::pi / 2));
  double max_x = 0, max_y = 0;
  for (const Vec2& v : poly.vertices) {
    max_x = std::max(max_x, std::abs(v.x));
    max_y = std::max(max_y, std::abs(v.y));
  }
  CHECK(max_x == doctest::Approx(0.5));
  CHECK(max_y == doctest::Approx(1.0));
}

TEST_CASE("bev_footprint: yaw pi/4 vertices at rotated-axis distance") {
  const Polygon2D poly = bev_footprint(box(0, 0, 2, 1, std::numbers::pi / 4));
  const double want = std::sqrt(1.0 * 1.0 + 0.5 * 0.5);  // 1.118033988749895
  for (const Vec2& v : poly.vertices) CHECK(v.norm() == doctest::Approx(want).epsilon(1e-12));
  // rotation-matrix oracle for the first vertex (+l/2, +w/2)
  const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  CHECK(poly.vertices[0].x == doctest::Approx(c * 1.0 - s * 0.5).epsilon(1e-12));
  CHECK(poly.vertices[0].y == doctest::Approx(s * 1.0 + c * 0.5).epsilon(1e-12));
}

TEST_CASE("bev_footprint: area equals length * width") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const GtObject obj = box(rng.uniform(-10, 10), rng.uniform(-10, 10),
                             rng.uniform(0.3, 6.0), rng.uniform(0.3, 4.0),
                             rng.uniform(-3.14, 3.14));
    const double area = bev_footprint(obj).signed_area();
    CHECK(area == doctest::Approx(obj.dims.x * obj.dims.y).epsilon(1e-12));
  }
}

TEST_CASE("cell_box_overlap_ratio: canonical full/empty/half cases") {
  GridSpec spec{4, 4, 1.0, {0.0, 0.0}};
  SUBCASE("cell fully inside a box") {
    const std::vector<Polygon2D> polys{bev_footprint(box(1.5, 1.5, 4, 4, 0))};
    CHECK(cell_box_overlap_ratio(spec, 1, 1, polys) == doctest::Approx(1.0));
  }
  SUBCASE("cell disjoint from all boxes") {
    const std::vector<Polygon2D> polys{bev_footprint(box(10, 10, 2, 2, 0))};
    CHECK(cell_box_overlap_ratio(spec, 0, 0, polys) == doctest::Approx(0.0));
  }
  SUBCASE("box covering exactly the left half of the cell") {
    // cell (1,1) spans [1,2]x[1,2]; box spans x in [0.5, 1.5]
    const std::vector<Polygon2D> polys{bev_footprint(box(1.0, 1.5, 1.0, 2.0, 0))};
    CHECK(cell_box_overlap_ratio(spec, 1, 1, polys) == doctest::Approx(0.5));
  }
}

TEST_CASE("cell_box_overlap_ratio: in range, monotone under added polygons") {
  Rng rng(11);
  GridSpec spec{6, 6, 0.7, {-2.1, -2.1}};
  for (int trial = 0; trial < 100; ++trial) {
    const int x = static_cast<int>(rng.below(6));
    const int y = static_cast<int>(rng.below(6));
    std::vector<Polygon2D> polys;
    double prev = 0.0;
    for (int b = 0; b < 3; ++b) {
      // far-apart centers keep the footprints disjoint
      polys.push_back(bev_footprint(box(-20.0 + 20.0 * b + rng.uniform(-1, 1),
                                        rng.uniform(-2, 2), rng.uniform(0.5, 3),
                                        rng.uniform(0.5, 2), rng.uniform(-3, 3))));
      const double r = cell_box_overlap_ratio(spec, x, y, polys);
      CHECK(r >= prev);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      prev = r;
    }
  }
}

TEST_CASE("cell_box_overlap_ratio: matches Monte-Carlo supersampling") {
  Rng rng(42);
  GridSpec spec{8, 8, 0.5, {-2.0, -2.0}};
  for (int trial = 0; trial < 200; ++trial) {
    const int x = static_cast<int>(rng.below(8));
    const int y = static_cast<int>(rng.below(8));
    const Vec2 center = spec.cell_center(x, y);
    const std::vector<Polygon2D> polys{bev_footprint(
        box(center.x + rng.uniform(-1.0, 1.0), center.y + rng.uniform(-1.0, 1.0),
            rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5), rng.uniform(-3.14, 3.14)))};
    const double exact = cell_box_overlap_ratio(spec, x, y, polys);
    const double mc = oracles::mc_overlap_ratio(spec, x, y, polys, 100, rng);
    CHECK(std::abs(exact - mc) < 0.01);
  }
}

TEST_CASE("cell_box_overlap_ratio: overlapping footprints are flagged") {
  GridSpec spec{2, 2, 1.0, {0.0, 0.0}};
  const std::vector<Polygon2D> polys{bev_footprint(box(1, 1, 2, 2, 0)),
                                     bev_footprint(box(1.2, 1.0, 2, 2, 0.3))};
  CHECK_THROWS_AS(cell_box_overlap_ratio(spec, 0, 0, polys), std::runtime_error);
}

TEST_CASE("clip_convex: rectangle against rectangle") {
  Polygon2D a;
  a.vertices = {{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  Polygon2D b;
  b.vertices = {{1, 1}, {3, 1}, {3, 3}, {1, 3}};
  const Polygon2D inter = clip_convex(a, b);
  CHECK(inter.signed_area() == doctest::Approx(1.0));
}

TEST_CASE("polygon validate rejects degenerate input") {
  Polygon2D two;
  two.vertices = {{0, 0}, {1, 0}};
  CHECK_THROWS_AS(two.validate(), std::invalid_argument);
  Polygon2D clockwise;
  clockwise.vertices = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  CHECK_THROWS_AS(clockwise.validate(), std::invalid_argument);
  Polygon2D bowtie;
  bowtie.vertices = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK_THROWS_AS(bowtie.validate(), std::invalid_argument);
}

TEST_CASE("pose compose/inverse round trip") {
  Pose p;
  p.r = Mat3::rot_z(0.7);
  p.t = {1.0, -2.0, 0.5};
  const Pose id = p.compose(p.inverse());
  CHECK(id.t.norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(id.r.is_rotation());
  const Vec3 v{3.0, 4.0, 5.0};
  const Vec3 round = p.inverse().apply(p.apply(v));
  CHECK((round - v).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_SUITE_END();
