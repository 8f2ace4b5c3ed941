#include "crtbev/mgtf.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "crtbev/io.hpp"

namespace crtbev {

ShiftField compute_shift(const MotionMap& motion, double t_s, double tau_v,
                         double cell_size) {
  if (motion.channels != 2)
    throw std::invalid_argument("compute_shift: motion map needs 2 channels");
  if (!(cell_size > 0.0))
    throw std::invalid_argument("compute_shift: cell_size must be > 0");
  ShiftField out{Grid2D(motion.spec, 2), {}};
  out.dynamic.assign(motion.spec.cell_count(), 0);
  for (int x = 0; x < motion.spec.x_cells; ++x) {
    for (int y = 0; y < motion.spec.y_cells; ++y) {
      const double vx = motion.at(0, x, y);
      const double vy = motion.at(1, x, y);
      out.delta.at(0, x, y) = vx * t_s / cell_size;
      out.delta.at(1, x, y) = vy * t_s / cell_size;
      out.dynamic[motion.spec.linear_index(x, y)] =
          std::hypot(vx, vy) > tau_v ? 1 : 0;
    }
  }
  return out;
}

Grid2D warp(const Grid2D& prev, const ShiftField& shifts, bool static_passthrough) {
  if (!prev.spec.same_geometry(shifts.delta.spec))
    throw std::invalid_argument("warp: grid spec mismatch");
  const GridSpec& spec = prev.spec;
  Grid2D out(spec, prev.channels);
  std::vector<int> count(spec.cell_count(), 0);
  for (int i = 0; i < spec.x_cells; ++i) {
    for (int j = 0; j < spec.y_cells; ++j) {
      int ti = i, tj = j;
      if (shifts.dynamic[spec.linear_index(i, j)]) {
        // std::round is round-half-away-from-zero
        ti = i + static_cast<int>(std::round(shifts.delta.at(0, i, j)));
        tj = j + static_cast<int>(std::round(shifts.delta.at(1, i, j)));
      } else if (!static_passthrough) {
        continue;
      }
      if (!spec.contains(ti, tj)) continue;
      for (int c = 0; c < prev.channels; ++c) out.at(c, ti, tj) += prev.at(c, i, j);
      ++count[spec.linear_index(ti, tj)];
    }
  }
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      const int n = count[spec.linear_index(x, y)];
      if (n <= 1) continue;
      for (int c = 0; c < prev.channels; ++c) out.at(c, x, y) /= n;
    }
  }
  return out;
}

MgtfWeights MgtfWeights::averaging(int channels) {
  MgtfWeights w;
  w.reduce = LinearLayer(channels, 2 * channels);
  for (int c = 0; c < channels; ++c) {
    w.reduce.weight[static_cast<std::size_t>(c) * 2 * channels + c] = 0.5;
    w.reduce.weight[static_cast<std::size_t>(c) * 2 * channels + channels + c] = 0.5;
  }
  w.final_conv = LinearLayer::identity(channels);
  return w;
}

MgtfWeights MgtfWeights::seeded(int channels, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mgtf"));
  MgtfWeights w;
  w.reduce = LinearLayer::seeded(channels, 2 * channels, rng);
  w.final_conv = LinearLayer::seeded(channels, channels, rng);
  return w;
}

Grid2D fuse_step(const Grid2D& warped_prev, const Grid2D& current,
                 const OccupancyMap& occupancy, const MgtfConfig& cfg,
                 const LinearLayer& reduce) {
  if (!warped_prev.spec.same_geometry(current.spec) ||
      warped_prev.channels != current.channels ||
      !occupancy.spec.same_geometry(current.spec) || occupancy.channels != 1)
    throw std::invalid_argument("fuse_step: grid spec mismatch");
  const int c_dim = current.channels;
  if (reduce.in_dim != 2 * c_dim || reduce.out_dim != c_dim)
    throw std::invalid_argument("fuse_step: reduction conv shape mismatch");

  Grid2D out(current.spec, c_dim);
  std::vector<double> concat(2 * c_dim), reduced(c_dim);
  for (int x = 0; x < current.spec.x_cells; ++x) {
    for (int y = 0; y < current.spec.y_cells; ++y) {
      const double score = occupancy.at(0, x, y);
      const double gate =
          cfg.gate_mode == GateMode::kSoft ? score : (score >= cfg.tau_b ? 1.0 : 0.0);
      const double gate_curr = cfg.gate_both_halves ? gate : 1.0;
      for (int c = 0; c < c_dim; ++c) {
        concat[c] = gate * warped_prev.at(c, x, y);
        concat[c_dim + c] = gate_curr * current.at(c, x, y);
      }
      reduce.forward(concat.data(), reduced.data());
      for (int c = 0; c < c_dim; ++c) out.at(c, x, y) = reduced[c];
    }
  }
  return out;
}

std::int64_t MemoryBank::key_of(double timestamp) {
  return static_cast<std::int64_t>(std::llround(timestamp * 1e6));
}

void MemoryBank::put(double timestamp, Grid2D grid) {
  const std::int64_t key = key_of(timestamp);
  const auto it = entries_.find(key);
  if (it != entries_.end()) {
    it->second = std::move(grid);
    return;
  }
  if (static_cast<int>(entries_.size()) >= capacity_ && capacity_ > 0)
    entries_.erase(entries_.begin());  // minimum timestamp
  entries_.emplace(key, std::move(grid));
}

const Grid2D* MemoryBank::find(double timestamp) const {
  const auto it = entries_.find(key_of(timestamp));
  return it == entries_.end() ? nullptr : &it->second;
}

Grid2D ego_align(const Grid2D& past, const Pose& world_from_past,
                 const Pose& world_from_current) {
  const GridSpec& spec = past.spec;
  Grid2D out(spec, past.channels);
  const Pose past_from_current = world_from_past.inverse().compose(world_from_current);
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      const Vec2 c = spec.cell_center(x, y);
      const Vec3 in_past = past_from_current.apply({c.x, c.y, 0.0});
      const auto src = spec.cell_of(in_past.xy());
      if (!src) continue;
      for (int ch = 0; ch < past.channels; ++ch)
        out.at(ch, x, y) = past.at(ch, src->first, src->second);
    }
  }
  return out;
}

Grid2D run_mgtf(const BevSequence& seq, const MgtfConfig& cfg,
                const MgtfWeights& w, MemoryBank& bank) {
  const std::size_t n = seq.timestamps.size();
  if (n == 0 || seq.bev.size() != n || seq.motion.size() != n ||
      seq.occupancy.size() != n)
    throw std::invalid_argument("run_mgtf: misaligned sequences");
  if (cfg.ego_compensation && seq.ego_poses.size() != n)
    throw std::invalid_argument("run_mgtf: ego poses missing");
  for (std::size_t k = 1; k < n; ++k)
    if (!(seq.timestamps[k] > seq.timestamps[k - 1]))
      throw std::invalid_argument("run_mgtf: timestamps must be increasing");

  Grid2D fused;
  for (std::size_t k = 0; k < n; ++k) {
    if (const Grid2D* cached = bank.find(seq.timestamps[k])) {
      fused = *cached;
      continue;
    }
    if (k == 0) {
      fused = seq.bev[0];
    } else {
      Grid2D prev = std::move(fused);
      if (cfg.ego_compensation)
        prev = ego_align(prev, seq.ego_poses[k - 1], seq.ego_poses[k]);
      Grid2D warped;
      if (cfg.disable_warp) {
        warped = std::move(prev);
      } else {
        const ShiftField shifts = compute_shift(seq.motion[k - 1], cfg.t_s, cfg.tau_v,
                                                seq.bev[k].spec.cell_size);
        warped = warp(prev, shifts, cfg.static_passthrough);
      }
      fused = fuse_step(warped, seq.bev[k], seq.occupancy[k], cfg, w.reduce);
    }
    bank.put(seq.timestamps[k], fused);
  }

  Grid2D out(fused.spec, w.final_conv.out_dim);
  std::vector<double> pix(fused.channels), proj(w.final_conv.out_dim);
  for (int x = 0; x < fused.spec.x_cells; ++x) {
    for (int y = 0; y < fused.spec.y_cells; ++y) {
      for (int c = 0; c < fused.channels; ++c) pix[c] = fused.at(c, x, y);
      w.final_conv.forward(pix.data(), proj.data());
      for (int c = 0; c < w.final_conv.out_dim; ++c) out.at(c, x, y) = proj[c];
    }
  }
  return out;
}

void MemoryBank::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["format_version"] = 1;
  index["capacity"] = capacity_;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [key, grid] : entries_) {
    const std::string name = "grid_" + std::to_string(key) + ".bin";
    save_grid(dir / name, grid);
    files.push_back({{"timestamp_us", key}, {"file", name}});
  }
  index["entries"] = files;
  write_text_atomic(dir / "index.json", index.dump(2) + "\n");
}

MemoryBank MemoryBank::load(const std::filesystem::path& dir) {
  const nlohmann::json index = nlohmann::json::parse(read_text(dir / "index.json"));
  MemoryBank bank(index.at("capacity").get<int>());
  for (const auto& entry : index.at("entries")) {
    const Grid2D grid = load_grid(dir / entry.at("file").get<std::string>());
    bank.entries_.emplace(entry.at("timestamp_us").get<std::int64_t>(), grid);
  }
  return bank;
}

}  // namespace crtbev
