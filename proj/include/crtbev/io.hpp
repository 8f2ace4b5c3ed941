#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "crtbev/geometry.hpp"
#include "crtbev/scene.hpp"

namespace crtbev {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::filesystem::path& path);
// write-temp-then-rename so readers never observe partial files
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_bytes_atomic(const std::filesystem::path& path,
                        const std::vector<char>& bytes);

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

// Grid payload: 16-byte header (magic 'CRTG', channels, x_cells, y_cells)
// followed by float64 data; the companion JSON carries the cell geometry.
// Round-trips bit-exactly.
void save_grid(const std::filesystem::path& path, const Grid2D& grid);
Grid2D load_grid(const std::filesystem::path& path, const GridSpec* spec = nullptr);

// Camera payload cam_<t>_<i>.bin: 16-byte header (magic 'CRTB', channels,
// height, width) followed by float32 data, channel-major. The rendered
// feature channels come first; the last channel is the GT depth image with
// +inf for background.
void save_camera_view(const std::filesystem::path& path, const CameraView& view);
void load_camera_view(const std::filesystem::path& path, CameraView& view);

nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);
nlohmann::json object_to_json(const GtObject& obj);
GtObject object_from_json(const nlohmann::json& j);
nlohmann::json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

// Sequence directory layout:
//   scene.json          config, camera rig, per-frame poses and GT objects
//   radar_<t>.csv       x,y,z,rcs,v_r,vx,vy,sweep
//   cam_<t>_<i>.bin     features + depth, see save_camera_view
void save_sequence(const std::filesystem::path& dir, const FrameSequence& seq,
                   const SceneConfig& cfg);
FrameSequence load_sequence(const std::filesystem::path& dir);

// manifest.json for a generated scene set: seeds plus per-file hashes.
nlohmann::json build_manifest(const std::filesystem::path& root,
                              const std::vector<std::string>& sequence_dirs,
                              std::uint64_t root_seed);

}  // namespace crtbev
