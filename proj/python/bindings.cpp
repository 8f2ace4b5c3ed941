#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crtbev/config.hpp"
#include "crtbev/detect.hpp"
#include "crtbev/geometry.hpp"
#include "crtbev/io.hpp"
#include "crtbev/mfe.hpp"
#include "crtbev/mgtf.hpp"
#include "crtbev/pipeline.hpp"

namespace py = pybind11;
using namespace crtbev;

namespace {

GridSpec spec_from_args(int x_cells, int y_cells, double cell_size,
                        std::pair<double, double> origin) {
  GridSpec spec{x_cells, y_cells, cell_size, {origin.first, origin.second}};
  spec.validate();
  return spec;
}

py::array_t<double> grid_to_numpy(const Grid2D& grid) {
  py::array_t<double> out({grid.channels, grid.spec.x_cells, grid.spec.y_cells});
  std::copy(grid.data.begin(), grid.data.end(), out.mutable_data());
  return out;
}

Grid2D grid_from_numpy(const py::array_t<double>& array, const GridSpec& spec) {
  const auto buf = array.unchecked<3>();
  if (buf.shape(1) != spec.x_cells || buf.shape(2) != spec.y_cells)
    throw std::invalid_argument("array shape does not match the grid spec");
  Grid2D grid(spec, static_cast<int>(buf.shape(0)));
  std::size_t i = 0;
  for (py::ssize_t c = 0; c < buf.shape(0); ++c)
    for (py::ssize_t x = 0; x < buf.shape(1); ++x)
      for (py::ssize_t y = 0; y < buf.shape(2); ++y) grid.data[i++] = buf(c, x, y);
  return grid;
}

std::vector<GtObject> objects_from_numpy(const py::array_t<double>& array) {
  // rows: cx, cy, length, width, yaw, vx, vy
  const auto buf = array.unchecked<2>();
  if (buf.shape(1) != 7)
    throw std::invalid_argument("objects array must have 7 columns (cx, cy, l, w, yaw, vx, vy)");
  std::vector<GtObject> objects;
  objects.reserve(buf.shape(0));
  for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
    GtObject obj;
    obj.center = {buf(i, 0), buf(i, 1), 0.75};
    obj.dims = {buf(i, 2), buf(i, 3), 1.5};
    obj.yaw = buf(i, 4);
    obj.velocity = {buf(i, 5), buf(i, 6)};
    objects.push_back(obj);
  }
  return objects;
}

}  // namespace

PYBIND11_MODULE(_crtbev, m) {
  m.doc() = "camera-radar-temporal BEV fusion kernels";

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init(&spec_from_args), py::arg("x_cells"), py::arg("y_cells"),
           py::arg("cell_size"), py::arg("origin"))
      .def_readonly("x_cells", &GridSpec::x_cells)
      .def_readonly("y_cells", &GridSpec::y_cells)
      .def_readonly("cell_size", &GridSpec::cell_size)
      .def("cell_center",
           [](const GridSpec& spec, int x, int y) {
             const Vec2 c = spec.cell_center(x, y);
             return std::make_pair(c.x, c.y);
           })
      .def("__repr__", [](const GridSpec& spec) {
        return "GridSpec(" + std::to_string(spec.x_cells) + "x" +
               std::to_string(spec.y_cells) + ", cell " +
               std::to_string(spec.cell_size) + " m)";
      });

  m.def("azimuth_of_cell", &azimuth_of_cell, py::arg("spec"), py::arg("x"), py::arg("y"));

  m.def(
      "azimuth_of_column",
      [](double fx, double cx, int image_w, int image_h, double yaw, int column) {
        CameraModel cam;
        cam.fx = fx;
        cam.fy = fx;
        cam.cx = cx;
        cam.cy = image_h / 2.0;
        cam.image_w = image_w;
        cam.image_h = image_h;
        cam.pose.r = Mat3::rot_z(yaw);
        return azimuth_of_column(cam, column);
      },
      py::arg("fx"), py::arg("cx"), py::arg("image_w"), py::arg("image_h"),
      py::arg("camera_yaw"), py::arg("column"));

  m.def(
      "bev_footprint",
      [](double cx, double cy, double length, double width, double yaw) {
        GtObject obj;
        obj.center = {cx, cy, 0.75};
        obj.dims = {length, width, 1.5};
        obj.yaw = yaw;
        const Polygon2D poly = bev_footprint(obj);
        py::array_t<double> out({static_cast<py::ssize_t>(4), static_cast<py::ssize_t>(2)});
        auto buf = out.mutable_unchecked<2>();
        for (int i = 0; i < 4; ++i) {
          buf(i, 0) = poly.vertices[i].x;
          buf(i, 1) = poly.vertices[i].y;
        }
        return out;
      },
      py::arg("cx"), py::arg("cy"), py::arg("length"), py::arg("width"), py::arg("yaw"));

  m.def(
      "cell_box_overlap_ratio",
      [](const GridSpec& spec, int x, int y, const py::array_t<double>& objects) {
        std::vector<Polygon2D> polys;
        for (const GtObject& obj : objects_from_numpy(objects))
          polys.push_back(bev_footprint(obj));
        return cell_box_overlap_ratio(spec, x, y, polys);
      },
      py::arg("spec"), py::arg("x"), py::arg("y"), py::arg("objects"));

  m.def(
      "make_targets",
      [](const GridSpec& spec, const py::array_t<double>& objects, double tau_iou) {
        const Targets t = make_targets(spec, objects_from_numpy(objects), tau_iou);
        return std::make_pair(grid_to_numpy(t.motion), grid_to_numpy(t.occupancy));
      },
      py::arg("spec"), py::arg("objects"), py::arg("tau_iou") = 0.5);

  m.def(
      "warp",
      [](const py::array_t<double>& features, const py::array_t<double>& motion,
         const GridSpec& spec, double t_s, double tau_v, bool static_passthrough) {
        const Grid2D prev = grid_from_numpy(features, spec);
        const MotionMap m_grid = grid_from_numpy(motion, spec);
        const ShiftField shifts = compute_shift(m_grid, t_s, tau_v, spec.cell_size);
        return grid_to_numpy(warp(prev, shifts, static_passthrough));
      },
      py::arg("features"), py::arg("motion"), py::arg("spec"), py::arg("t_s") = 0.5,
      py::arg("tau_v") = 1.0, py::arg("static_passthrough") = true);

  m.def(
      "detect",
      [](const py::array_t<double>& occupancy, const py::array_t<double>& motion,
         const GridSpec& spec, double tau_det, double nms_radius_cells) {
        const OccupancyMap occ = grid_from_numpy(occupancy, spec);
        const MotionMap mot = grid_from_numpy(motion, spec);
        const std::vector<Detection> dets = detect(occ, mot, tau_det, nms_radius_cells);
        py::list out;
        for (const Detection& d : dets) {
          py::dict item;
          item["center"] = std::make_pair(d.center.x, d.center.y);
          item["score"] = d.score;
          item["velocity"] = std::make_pair(d.velocity.x, d.velocity.y);
          out.append(item);
        }
        return out;
      },
      py::arg("occupancy"), py::arg("motion"), py::arg("spec"), py::arg("tau_det") = 0.05,
      py::arg("nms_radius_cells") = 4.0);

  m.def(
      "generate_summary",
      [](const std::string& config_json) {
        const RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json));
        const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
        py::list per_seq;
        std::uint64_t fingerprint = 0xcbf29ce484222325ULL;
        for (const FrameSequence& seq : seqs) {
          py::dict item;
          item["frames"] = seq.frames.size();
          item["objects"] = seq.frames.front().objects.size();
          item["radar_points"] = seq.frames.front().radar.points.size();
          per_seq.append(item);
          for (const Frame& frame : seq.frames)
            for (const RadarPoint& p : frame.radar.points)
              fingerprint ^= fnv1a64(&p.position, sizeof(p.position)) * 0x100000001b3ULL;
        }
        py::dict out;
        out["sequences"] = per_seq;
        out["fingerprint"] = fingerprint;
        return out;
      },
      py::arg("config_json"));

  m.def(
      "run_compare",
      [](const std::string& config_json) {
        const RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json));
        const std::vector<FrameSequence> seqs = generate_scene_set(cfg);
        const CompareReport report = compare_pipelines(seqs, cfg);
        py::dict out;
        py::list bins, gains, ap_a, ap_b;
        for (std::size_t b = 0; b < report.gains.size(); ++b) {
          bins.append(std::make_pair(report.motion_aware.bins[b].lo,
                                     report.motion_aware.bins[b].hi));
          ap_a.append(report.motion_aware.bins[b].ap);
          ap_b.append(report.naive_concat.bins[b].ap);
          gains.append(report.gains[b]);
        }
        out["bins"] = bins;
        out["ap_motion_aware"] = ap_a;
        out["ap_naive_concat"] = ap_b;
        out["gains"] = gains;
        out["mean_ap_motion_aware"] = report.motion_aware.mean_ap;
        out["mean_ap_naive_concat"] = report.naive_concat.mean_ap;
        return out;
      },
      py::arg("config_json"));

  m.attr("__version__") = "0.1.0";
}
