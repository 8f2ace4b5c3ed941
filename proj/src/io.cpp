#include "crtbev/io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace crtbev {

namespace {

constexpr std::uint32_t kGridMagic = 0x47545243;    // "CRTG"
constexpr std::uint32_t kCameraMagic = 0x42545243;  // "CRTB"

void rename_into_place(const std::filesystem::path& tmp,
                       const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string());
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open " + tmp.string());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  rename_into_place(tmp, path);
}

void write_bytes_atomic(const std::filesystem::path& path,
                        const std::vector<char>& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  rename_into_place(tmp, path);
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

void save_grid(const std::filesystem::path& path, const Grid2D& grid) {
  std::vector<char> bytes;
  bytes.resize(16 + grid.data.size() * sizeof(double));
  const std::uint32_t header[4] = {kGridMagic, static_cast<std::uint32_t>(grid.channels),
                                   static_cast<std::uint32_t>(grid.spec.x_cells),
                                   static_cast<std::uint32_t>(grid.spec.y_cells)};
  std::memcpy(bytes.data(), header, 16);
  std::memcpy(bytes.data() + 16, grid.data.data(), grid.data.size() * sizeof(double));
  write_bytes_atomic(path, bytes);
}

Grid2D load_grid(const std::filesystem::path& path, const GridSpec* spec) {
  const std::string bytes = read_text(path);
  if (bytes.size() < 16) throw IoError("truncated grid file " + path.string());
  std::uint32_t header[4];
  std::memcpy(header, bytes.data(), 16);
  if (header[0] != kGridMagic) throw IoError("bad grid magic in " + path.string());
  GridSpec gs;
  if (spec) {
    gs = *spec;
    if (static_cast<std::uint32_t>(gs.x_cells) != header[2] ||
        static_cast<std::uint32_t>(gs.y_cells) != header[3])
      throw IoError("grid shape mismatch in " + path.string());
  } else {
    gs.x_cells = static_cast<int>(header[2]);
    gs.y_cells = static_cast<int>(header[3]);
    gs.cell_size = 1.0;
    gs.origin = {0.0, 0.0};
  }
  Grid2D grid(gs, static_cast<int>(header[1]));
  if (bytes.size() != 16 + grid.data.size() * sizeof(double))
    throw IoError("grid payload size mismatch in " + path.string());
  std::memcpy(grid.data.data(), bytes.data() + 16, grid.data.size() * sizeof(double));
  return grid;
}

void save_camera_view(const std::filesystem::path& path, const CameraView& view) {
  const int ch = view.features.channels;
  const int h = view.features.height;
  const int w = view.features.width;
  std::vector<char> bytes(16 + (static_cast<std::size_t>(ch) + 1) * h * w * sizeof(float));
  const std::uint32_t header[4] = {kCameraMagic, static_cast<std::uint32_t>(ch + 1),
                                   static_cast<std::uint32_t>(h),
                                   static_cast<std::uint32_t>(w)};
  std::memcpy(bytes.data(), header, 16);
  float* payload = reinterpret_cast<float*>(bytes.data() + 16);
  std::size_t i = 0;
  for (int c = 0; c < ch; ++c)
    for (int hh = 0; hh < h; ++hh)
      for (int ww = 0; ww < w; ++ww) payload[i++] = static_cast<float>(view.features.at(c, hh, ww));
  for (int hh = 0; hh < h; ++hh)
    for (int ww = 0; ww < w; ++ww) payload[i++] = static_cast<float>(view.depth_gt.at(hh, ww));
  write_bytes_atomic(path, bytes);
}

void load_camera_view(const std::filesystem::path& path, CameraView& view) {
  const std::string bytes = read_text(path);
  if (bytes.size() < 16) throw IoError("truncated camera file " + path.string());
  std::uint32_t header[4];
  std::memcpy(header, bytes.data(), 16);
  if (header[0] != kCameraMagic) throw IoError("bad camera magic in " + path.string());
  const int ch = static_cast<int>(header[1]) - 1;
  const int h = static_cast<int>(header[2]);
  const int w = static_cast<int>(header[3]);
  if (ch < 1) throw IoError("camera file needs feature + depth channels");
  if (bytes.size() != 16 + (static_cast<std::size_t>(ch) + 1) * h * w * sizeof(float))
    throw IoError("camera payload size mismatch in " + path.string());
  view.features = CameraFeatureMap(view.features.camera_id, ch, h, w);
  view.depth_gt = DepthImage(h, w);
  const float* payload = reinterpret_cast<const float*>(bytes.data() + 16);
  std::size_t i = 0;
  for (int c = 0; c < ch; ++c)
    for (int hh = 0; hh < h; ++hh)
      for (int ww = 0; ww < w; ++ww) view.features.at(c, hh, ww) = payload[i++];
  for (int hh = 0; hh < h; ++hh)
    for (int ww = 0; ww < w; ++ww) view.depth_gt.at(hh, ww) = payload[i++];
}

nlohmann::json pose_to_json(const Pose& pose) {
  return {{"r", pose.r.m}, {"t", {pose.t.x, pose.t.y, pose.t.z}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  const auto r = j.at("r");
  for (int i = 0; i < 9; ++i) p.r.m[i] = r.at(i).get<double>();
  p.t = {j.at("t").at(0).get<double>(), j.at("t").at(1).get<double>(),
         j.at("t").at(2).get<double>()};
  return p;
}

nlohmann::json camera_to_json(const CameraModel& cam) {
  return {{"fx", cam.fx},           {"fy", cam.fy},
          {"cx", cam.cx},           {"cy", cam.cy},
          {"image_w", cam.image_w}, {"image_h", cam.image_h},
          {"pose", pose_to_json(cam.pose)}};
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.image_w = j.at("image_w").get<int>();
  cam.image_h = j.at("image_h").get<int>();
  cam.pose = pose_from_json(j.at("pose"));
  return cam;
}

nlohmann::json object_to_json(const GtObject& obj) {
  return {{"center", {obj.center.x, obj.center.y, obj.center.z}},
          {"dims", {obj.dims.x, obj.dims.y, obj.dims.z}},
          {"yaw", obj.yaw},
          {"velocity", {obj.velocity.x, obj.velocity.y}},
          {"class_id", obj.class_id}};
}

GtObject object_from_json(const nlohmann::json& j) {
  GtObject obj;
  obj.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>(),
                j.at("center").at(2).get<double>()};
  obj.dims = {j.at("dims").at(0).get<double>(), j.at("dims").at(1).get<double>(),
              j.at("dims").at(2).get<double>()};
  obj.yaw = j.at("yaw").get<double>();
  obj.velocity = {j.at("velocity").at(0).get<double>(),
                  j.at("velocity").at(1).get<double>()};
  obj.class_id = j.at("class_id").get<int>();
  return obj;
}

nlohmann::json scene_config_to_json(const SceneConfig& cfg) {
  nlohmann::json j;
  j["n_objects"] = cfg.n_objects;
  j["speed_min"] = cfg.speed_min;
  j["speed_max"] = cfg.speed_max;
  j["static_fraction"] = cfg.static_fraction;
  j["radar_points_per_object"] = cfg.radar_points_per_object;
  j["clutter_points"] = cfg.clutter_points;
  j["radar_sigma"] = cfg.radar_sigma;
  j["radar_dropout"] = cfg.radar_dropout;
  j["sweeps"] = cfg.sweeps;
  j["sweep_dt"] = cfg.sweep_dt;
  j["radar_vel_noise"] = cfg.radar_vel_noise;
  j["feature_noise"] = cfg.feature_noise;
  j["t_s"] = cfg.t_s;
  j["seed"] = cfg.seed;
  j["grid"] = {{"x_cells", cfg.grid.x_cells},
               {"y_cells", cfg.grid.y_cells},
               {"cell_size", cfg.grid.cell_size},
               {"origin", {cfg.grid.origin.x, cfg.grid.origin.y}}};
  j["rig"] = {{"count", cfg.rig.count},
              {"image_w", cfg.rig.image_w},
              {"image_h", cfg.rig.image_h},
              {"hfov_deg", cfg.rig.hfov_deg},
              {"mount_height", cfg.rig.mount_height},
              {"channels", cfg.rig.channels}};
  j["ego"] = {{"vx", cfg.ego_vx}, {"vy", cfg.ego_vy}, {"yaw_rate", cfg.ego_yaw_rate}};
  return j;
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig cfg;
  cfg.n_objects = j.at("n_objects").get<int>();
  cfg.speed_min = j.at("speed_min").get<double>();
  cfg.speed_max = j.at("speed_max").get<double>();
  cfg.static_fraction = j.at("static_fraction").get<double>();
  cfg.radar_points_per_object = j.at("radar_points_per_object").get<int>();
  cfg.clutter_points = j.at("clutter_points").get<int>();
  cfg.radar_sigma = j.at("radar_sigma").get<double>();
  cfg.radar_dropout = j.at("radar_dropout").get<double>();
  cfg.sweeps = j.at("sweeps").get<int>();
  cfg.sweep_dt = j.at("sweep_dt").get<double>();
  cfg.radar_vel_noise = j.at("radar_vel_noise").get<double>();
  cfg.feature_noise = j.at("feature_noise").get<double>();
  cfg.t_s = j.at("t_s").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const auto& g = j.at("grid");
  cfg.grid.x_cells = g.at("x_cells").get<int>();
  cfg.grid.y_cells = g.at("y_cells").get<int>();
  cfg.grid.cell_size = g.at("cell_size").get<double>();
  cfg.grid.origin = {g.at("origin").at(0).get<double>(),
                     g.at("origin").at(1).get<double>()};
  const auto& r = j.at("rig");
  cfg.rig.count = r.at("count").get<int>();
  cfg.rig.image_w = r.at("image_w").get<int>();
  cfg.rig.image_h = r.at("image_h").get<int>();
  cfg.rig.hfov_deg = r.at("hfov_deg").get<double>();
  cfg.rig.mount_height = r.at("mount_height").get<double>();
  cfg.rig.channels = r.at("channels").get<int>();
  const auto& e = j.at("ego");
  cfg.ego_vx = e.at("vx").get<double>();
  cfg.ego_vy = e.at("vy").get<double>();
  cfg.ego_yaw_rate = e.at("yaw_rate").get<double>();
  return cfg;
}

void save_sequence(const std::filesystem::path& dir, const FrameSequence& seq,
                   const SceneConfig& cfg) {
  std::filesystem::create_directories(dir);
  nlohmann::json scene;
  scene["format_version"] = 1;
  scene["config"] = scene_config_to_json(cfg);
  scene["t_s"] = seq.t_s;
  nlohmann::json rig = nlohmann::json::array();
  if (!seq.frames.empty())
    for (const CameraView& view : seq.frames[0].cameras)
      rig.push_back(camera_to_json(view.model));
  scene["cameras"] = rig;
  nlohmann::json frames = nlohmann::json::array();
  for (const Frame& frame : seq.frames) {
    nlohmann::json jf;
    jf["timestamp"] = frame.timestamp;
    jf["ego_pose"] = pose_to_json(frame.ego_pose);
    nlohmann::json objs = nlohmann::json::array();
    for (const GtObject& obj : frame.objects) objs.push_back(object_to_json(obj));
    jf["objects"] = objs;
    frames.push_back(jf);
  }
  scene["frames"] = frames;
  write_text_atomic(dir / "scene.json", scene.dump(2) + "\n");

  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const Frame& frame = seq.frames[t];
    std::ostringstream csv;
    csv << "x,y,z,rcs,v_r,vx,vy,sweep\n";
    for (const RadarPoint& pt : frame.radar.points) {
      csv << format_double(pt.position.x) << ',' << format_double(pt.position.y) << ','
          << format_double(pt.position.z);
      for (const double f : pt.feature) csv << ',' << format_double(f);
      csv << ',' << pt.sweep_index << '\n';
    }
    write_text_atomic(dir / ("radar_" + std::to_string(t) + ".csv"), csv.str());
    for (std::size_t i = 0; i < frame.cameras.size(); ++i) {
      save_camera_view(dir / ("cam_" + std::to_string(t) + "_" + std::to_string(i) + ".bin"),
                       frame.cameras[i]);
    }
  }
}

FrameSequence load_sequence(const std::filesystem::path& dir) {
  const nlohmann::json scene = nlohmann::json::parse(read_text(dir / "scene.json"));
  FrameSequence seq;
  seq.t_s = scene.at("t_s").get<double>();
  std::vector<CameraModel> rig;
  for (const auto& jc : scene.at("cameras")) rig.push_back(camera_from_json(jc));

  const auto& frames = scene.at("frames");
  seq.frames.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& jf = frames[t];
    Frame frame;
    frame.timestamp = jf.at("timestamp").get<double>();
    frame.ego_pose = pose_from_json(jf.at("ego_pose"));
    for (const auto& jo : jf.at("objects")) frame.objects.push_back(object_from_json(jo));

    const std::string csv = read_text(dir / ("radar_" + std::to_string(t) + ".csv"));
    frame.radar.timestamp = frame.timestamp;
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      RadarPoint pt;
      std::istringstream fields(line);
      std::string field;
      std::vector<double> values;
      while (std::getline(fields, field, ',')) values.push_back(std::stod(field));
      if (values.size() != 3 + kRadarFeatureDim + 1)
        throw IoError("bad radar row in " + dir.string());
      pt.position = {values[0], values[1], values[2]};
      pt.feature.assign(values.begin() + 3, values.end() - 1);
      pt.sweep_index = static_cast<int>(values.back());
      frame.radar.points.push_back(std::move(pt));
    }

    frame.cameras.resize(rig.size());
    for (std::size_t i = 0; i < rig.size(); ++i) {
      frame.cameras[i].model = rig[i];
      frame.cameras[i].features.camera_id = static_cast<int>(i);
      load_camera_view(dir / ("cam_" + std::to_string(t) + "_" + std::to_string(i) + ".bin"),
                       frame.cameras[i]);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

nlohmann::json build_manifest(const std::filesystem::path& root,
                              const std::vector<std::string>& sequence_dirs,
                              std::uint64_t root_seed) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["root_seed"] = root_seed;
  nlohmann::json seqs = nlohmann::json::array();
  for (const std::string& name : sequence_dirs) {
    nlohmann::json entry;
    entry["id"] = name;
    nlohmann::json files;
    std::vector<std::filesystem::path> paths;
    for (const auto& it : std::filesystem::directory_iterator(root / name))
      if (it.is_regular_file()) paths.push_back(it.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) files[p.filename().string()] = hash_hex(hash_file(p));
    entry["files"] = files;
    seqs.push_back(entry);
  }
  manifest["sequences"] = seqs;
  return manifest;
}

}  // namespace crtbev
