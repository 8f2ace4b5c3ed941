#include "crtbev/mvf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crtbev {

std::vector<double> uniform_bin_edges(double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo))
    throw std::invalid_argument("depth bins: need bins >= 1 and max > min");
  std::vector<double> edges(bins + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * i / bins;
  return edges;
}

MvfWeights MvfWeights::seeded(const MvfDims& dims, std::uint64_t seed) {
  MvfWeights w;
  w.dims = dims;
  w.init_seed = seed;
  const int c = dims.channels;
  Rng rng(derive_seed(seed, "mvf"));
  w.compress_w = Mlp2::seeded(c, c, c, rng);
  w.compress_h = Mlp2::seeded(c, c, c, rng);
  w.fuse_mlp1 = LinearLayer::seeded(c, 2 * c, rng);
  w.fuse_mlp2 = LinearLayer::seeded(c, c, rng);
  w.fuse_mlp3 = LinearLayer::seeded(1, c, rng);
  w.persp_conv = LinearLayer::seeded(c, 2 * c, rng);
  w.depth_seg = LinearLayer::seeded(dims.depth_bins + 1, c, rng);
  w.gate_cam = LinearLayer::seeded(c, 2 * c, rng);
  w.gate_radar = LinearLayer::seeded(c, 2 * c, rng);
  w.fuse_conv = LinearLayer::seeded(c, 2 * c, rng);
  w.pillar = LinearLayer::seeded(c, dims.radar_point_dim, rng);
  return w;
}

void MvfWeights::save(const std::filesystem::path& path) const {
  WeightBundle bundle;
  const std::vector<double> meta{
      static_cast<double>(dims.channels), static_cast<double>(dims.depth_bins),
      dims.depth_min, dims.depth_max, static_cast<double>(dims.radar_point_dim),
      static_cast<double>(init_seed)};
  bundle.put("dims", static_cast<int>(meta.size()), 1, meta);
  bundle.put_layer("compress_w.l1", compress_w.l1);
  bundle.put_layer("compress_w.l2", compress_w.l2);
  bundle.put_layer("compress_h.l1", compress_h.l1);
  bundle.put_layer("compress_h.l2", compress_h.l2);
  bundle.put_layer("fuse_mlp1", fuse_mlp1);
  bundle.put_layer("fuse_mlp2", fuse_mlp2);
  bundle.put_layer("fuse_mlp3", fuse_mlp3);
  bundle.put_layer("persp_conv", persp_conv);
  bundle.put_layer("depth_seg", depth_seg);
  bundle.put_layer("gate_cam", gate_cam);
  bundle.put_layer("gate_radar", gate_radar);
  bundle.put_layer("fuse_conv", fuse_conv);
  bundle.put_layer("pillar", pillar);
  bundle.save(path);
}

MvfWeights MvfWeights::load(const std::filesystem::path& path) {
  const WeightBundle bundle = WeightBundle::load(path);
  MvfWeights w;
  const std::vector<double>& meta = bundle.get("dims").data;
  if (meta.size() != 6) throw std::runtime_error("MvfWeights: bad dims entry");
  w.dims.channels = static_cast<int>(meta[0]);
  w.dims.depth_bins = static_cast<int>(meta[1]);
  w.dims.depth_min = meta[2];
  w.dims.depth_max = meta[3];
  w.dims.radar_point_dim = static_cast<int>(meta[4]);
  w.init_seed = static_cast<std::uint64_t>(meta[5]);
  w.compress_w.l1 = bundle.get_layer("compress_w.l1");
  w.compress_w.l2 = bundle.get_layer("compress_w.l2");
  w.compress_h.l1 = bundle.get_layer("compress_h.l1");
  w.compress_h.l2 = bundle.get_layer("compress_h.l2");
  w.fuse_mlp1 = bundle.get_layer("fuse_mlp1");
  w.fuse_mlp2 = bundle.get_layer("fuse_mlp2");
  w.fuse_mlp3 = bundle.get_layer("fuse_mlp3");
  w.persp_conv = bundle.get_layer("persp_conv");
  w.depth_seg = bundle.get_layer("depth_seg");
  w.gate_cam = bundle.get_layer("gate_cam");
  w.gate_radar = bundle.get_layer("gate_radar");
  w.fuse_conv = bundle.get_layer("fuse_conv");
  w.pillar = bundle.get_layer("pillar");
  return w;
}

std::pair<CameraFeatureMap, CameraFeatureMap> compress_features(
    const CameraFeatureMap& fmap, const MvfWeights& w) {
  const int c_dim = fmap.channels;
  if (c_dim != w.dims.channels)
    throw std::invalid_argument("compress_features: channel mismatch");
  CameraFeatureMap wc(fmap.camera_id, c_dim, 1, fmap.width);
  CameraFeatureMap hc(fmap.camera_id, c_dim, fmap.height, 1);
  std::vector<double> pooled(c_dim), scratch(c_dim), out(c_dim);
  for (int j = 0; j < fmap.width; ++j) {
    for (int c = 0; c < c_dim; ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int h = 0; h < fmap.height; ++h) mx = std::max(mx, fmap.at(c, h, j));
      pooled[c] = mx;
    }
    w.compress_w.forward(pooled.data(), scratch.data(), out.data());
    for (int c = 0; c < c_dim; ++c) wc.at(c, 0, j) = out[c];
  }
  for (int h = 0; h < fmap.height; ++h) {
    for (int c = 0; c < c_dim; ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < fmap.width; ++j) mx = std::max(mx, fmap.at(c, h, j));
      pooled[c] = mx;
    }
    w.compress_h.forward(pooled.data(), scratch.data(), out.data());
    for (int c = 0; c < c_dim; ++c) hc.at(c, h, 0) = out[c];
  }
  return {std::move(wc), std::move(hc)};
}

std::vector<std::vector<int>> azimuth_group(const CameraModel& cam,
                                            const GridSpec& radar_grid, int m) {
  radar_grid.validate();
  if (m < 1) throw std::invalid_argument("azimuth_group: M must be >= 1");

  // candidate cells with a defined azimuth, in ascending linear index order
  std::vector<int> candidates;
  std::vector<double> azimuths;
  candidates.reserve(radar_grid.cell_count());
  azimuths.reserve(radar_grid.cell_count());
  for (int x = 0; x < radar_grid.x_cells; ++x) {
    for (int y = 0; y < radar_grid.y_cells; ++y) {
      const Vec2 c = radar_grid.cell_center(x, y);
      if (c.x == 0.0 && c.y == 0.0) continue;
      candidates.push_back(radar_grid.linear_index(x, y));
      azimuths.push_back(wrap_angle(std::atan2(c.y, c.x)));
    }
  }
  if (m > static_cast<int>(candidates.size()))
    throw std::invalid_argument("azimuth_group: M exceeds the number of grid cells");

  std::vector<std::vector<int>> groups(cam.image_w);
  std::vector<int> order(candidates.size());
  for (int j = 0; j < cam.image_w; ++j) {
    const double theta_c = azimuth_of_column(cam, j);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    const auto closer = [&](int a, int b) {
      const double da = std::abs(wrap_angle(theta_c - azimuths[a]));
      const double db = std::abs(wrap_angle(theta_c - azimuths[b]));
      if (da != db) return da < db;
      return candidates[a] < candidates[b];
    };
    std::partial_sort(order.begin(), order.begin() + m, order.end(), closer);
    groups[j].reserve(m);
    for (int i = 0; i < m; ++i) groups[j].push_back(candidates[order[i]]);
  }
  return groups;
}

std::vector<double> pixelwise_fuse(const std::vector<double>& wc_column,
                                   const std::vector<double>& radar_feats, int m,
                                   const MvfWeights& w) {
  return pixelwise_fuse(wc_column, radar_feats, m, w, nullptr, nullptr);
}

std::vector<double> pixelwise_fuse(const std::vector<double>& wc_column,
                                   const std::vector<double>& radar_feats, int m,
                                   const MvfWeights& w, std::vector<double>* attn_out,
                                   std::vector<double>* intermediates_out) {
  const int c = w.dims.channels;
  if (m < 1) throw std::invalid_argument("pixelwise_fuse: M must be >= 1");
  if (static_cast<int>(wc_column.size()) != c ||
      static_cast<int>(radar_feats.size()) != m * c)
    throw std::invalid_argument("pixelwise_fuse: shape mismatch");

  std::vector<double> concat(2 * c), hidden(c);
  std::vector<double> inter(static_cast<std::size_t>(m) * c);
  std::vector<double> logits(m);
  for (int i = 0; i < m; ++i) {
    std::copy(wc_column.begin(), wc_column.end(), concat.begin());
    std::copy(radar_feats.begin() + static_cast<std::size_t>(i) * c,
              radar_feats.begin() + static_cast<std::size_t>(i + 1) * c,
              concat.begin() + c);
    w.fuse_mlp1.forward(concat.data(), hidden.data());
    for (double& v : hidden) v = relu(v);
    w.fuse_mlp2.forward(hidden.data(), inter.data() + static_cast<std::size_t>(i) * c);
    w.fuse_mlp3.forward(inter.data() + static_cast<std::size_t>(i) * c, &logits[i]);
  }
  softmax_inplace(logits.data(), m);

  std::vector<double> fused(c, 0.0);
  for (int i = 0; i < m; ++i) {
    const double a = logits[i];
    const double* row = inter.data() + static_cast<std::size_t>(i) * c;
    for (int k = 0; k < c; ++k) fused[k] += a * row[k];
  }
  if (attn_out) *attn_out = logits;
  if (intermediates_out) *intermediates_out = std::move(inter);
  return fused;
}

CameraFeatureMap enhance_perspective(const CameraFeatureMap& fmap,
                                     const CameraFeatureMap& w_bar,
                                     const CameraFeatureMap& h_c,
                                     const MvfWeights& w) {
  const int c_dim = fmap.channels;
  if (w_bar.channels != c_dim || w_bar.height != 1 || w_bar.width != fmap.width ||
      h_c.channels != c_dim || h_c.width != 1 || h_c.height != fmap.height)
    throw std::invalid_argument("enhance_perspective: shape mismatch");
  if (w.persp_conv.in_dim != 2 * c_dim || w.persp_conv.out_dim != c_dim)
    throw std::invalid_argument("enhance_perspective: conv shape mismatch");

  CameraFeatureMap out(fmap.camera_id, c_dim, fmap.height, fmap.width);
  std::vector<double> concat(2 * c_dim), pix(c_dim);
  for (int h = 0; h < fmap.height; ++h) {
    for (int j = 0; j < fmap.width; ++j) {
      for (int c = 0; c < c_dim; ++c) {
        concat[c] = w_bar.at(c, 0, j) * h_c.at(c, h, 0);
        concat[c_dim + c] = fmap.at(c, h, j);
      }
      w.persp_conv.forward(concat.data(), pix.data());
      for (int c = 0; c < c_dim; ++c) out.at(c, h, j) = pix[c];
    }
  }
  return out;
}

DepthSegOutput depth_seg_head(const CameraFeatureMap& fmap, const MvfWeights& w) {
  const int c_dim = fmap.channels;
  const int bins = w.dims.depth_bins;
  if (w.depth_seg.in_dim != c_dim || w.depth_seg.out_dim != bins + 1)
    throw std::invalid_argument("depth_seg_head: shape mismatch");

  DepthSegOutput out;
  out.bins = bins;
  out.height = fmap.height;
  out.width = fmap.width;
  out.bin_edges = uniform_bin_edges(w.dims.depth_min, w.dims.depth_max, bins);
  out.depth_prob.resize(static_cast<std::size_t>(bins) * fmap.height * fmap.width);
  out.foreground_score.resize(static_cast<std::size_t>(fmap.height) * fmap.width);

  std::vector<double> pix(c_dim), head(bins + 1);
  for (int h = 0; h < fmap.height; ++h) {
    for (int j = 0; j < fmap.width; ++j) {
      for (int c = 0; c < c_dim; ++c) pix[c] = fmap.at(c, h, j);
      w.depth_seg.forward(pix.data(), head.data());
      softmax_inplace(head.data(), bins);
      for (int k = 0; k < bins; ++k)
        out.depth_prob[(static_cast<std::size_t>(k) * fmap.height + h) * fmap.width + j] =
            head[k];
      out.foreground_score[static_cast<std::size_t>(h) * fmap.width + j] =
          sigmoid(head[bins]);
    }
  }
  return out;
}

Grid2D lift_to_bev(const CameraFeatureMap& fmap, const DepthSegOutput& depth,
                   const CameraModel& cam, const GridSpec& grid, double tau_p) {
  if (tau_p < 0.0 || tau_p > 1.0)
    throw std::invalid_argument("lift_to_bev: tau_p must be in [0, 1]");
  if (depth.height != fmap.height || depth.width != fmap.width)
    throw std::invalid_argument("lift_to_bev: depth/feature shape mismatch");
  for (int k = 0; k < depth.bins; ++k)
    if (!(depth.bin_edges[k + 1] > depth.bin_edges[k]))
      throw std::invalid_argument("lift_to_bev: bin edges must be increasing");

  Grid2D out(grid, fmap.channels);
  const Vec3 origin = cam.pose.t;
  for (int h = 0; h < fmap.height; ++h) {
    for (int j = 0; j < fmap.width; ++j) {
      if (depth.fg(h, j) < tau_p) continue;
      const Vec3 dir = cam.pixel_ray_ego(j + 0.5, h + 0.5);
      for (int k = 0; k < depth.bins; ++k) {
        const double d = depth.bin_center(k);
        const Vec2 p{origin.x + d * dir.x, origin.y + d * dir.y};
        const auto cell = grid.cell_of(p);
        if (!cell) continue;
        const double prob = depth.prob(k, h, j);
        for (int c = 0; c < fmap.channels; ++c)
          out.at(c, cell->first, cell->second) += prob * fmap.at(c, h, j);
      }
    }
  }
  return out;
}

Grid2D radar_bev_encode(const RadarPointCloud& cloud, const GridSpec& grid,
                        const LinearLayer& pillar, double sweep_dt) {
  const int in_dim = pillar.in_dim;
  const int out_dim = pillar.out_dim;
  Grid2D out(grid, out_dim);
  std::vector<std::uint8_t> occupied(grid.cell_count(), 0);
  std::vector<double> input(in_dim), emb(out_dim);
  for (const RadarPoint& pt : cloud.points) {
    const auto cell = grid.cell_of(pt.position.xy());
    if (!cell) continue;
    if (static_cast<int>(pt.feature.size()) + 4 != in_dim)
      throw std::invalid_argument("radar_bev_encode: point feature dimension mismatch");
    const Vec2 center = grid.cell_center(cell->first, cell->second);
    input[0] = pt.position.x - center.x;
    input[1] = pt.position.y - center.y;
    input[2] = pt.position.z;
    for (std::size_t f = 0; f < pt.feature.size(); ++f) input[3 + f] = pt.feature[f];
    input[in_dim - 1] = pt.sweep_index * sweep_dt;
    pillar.forward(input.data(), emb.data());

    const int idx = grid.linear_index(cell->first, cell->second);
    if (!occupied[idx]) {
      occupied[idx] = 1;
      for (int c = 0; c < out_dim; ++c) out.at(c, cell->first, cell->second) = emb[c];
    } else {
      for (int c = 0; c < out_dim; ++c) {
        double& slot = out.at(c, cell->first, cell->second);
        slot = std::max(slot, emb[c]);
      }
    }
  }
  return out;
}

Grid2D gated_fuse(const Grid2D& cam_bev, const Grid2D& radar_bev,
                  const MvfWeights& w) {
  if (!cam_bev.spec.same_geometry(radar_bev.spec) ||
      cam_bev.channels != radar_bev.channels)
    throw std::invalid_argument("gated_fuse: grid spec/channel mismatch");
  const int c_dim = cam_bev.channels;
  Grid2D out(cam_bev.spec, c_dim);
  std::vector<double> concat(2 * c_dim), gc(c_dim), gr(c_dim), gated(2 * c_dim),
      fused(c_dim);
  for (int x = 0; x < cam_bev.spec.x_cells; ++x) {
    for (int y = 0; y < cam_bev.spec.y_cells; ++y) {
      for (int c = 0; c < c_dim; ++c) {
        concat[c] = cam_bev.at(c, x, y);
        concat[c_dim + c] = radar_bev.at(c, x, y);
      }
      w.gate_cam.forward(concat.data(), gc.data());
      w.gate_radar.forward(concat.data(), gr.data());
      for (int c = 0; c < c_dim; ++c) {
        gated[c] = sigmoid(gc[c]) * cam_bev.at(c, x, y);
        gated[c_dim + c] = sigmoid(gr[c]) * radar_bev.at(c, x, y);
      }
      w.fuse_conv.forward(gated.data(), fused.data());
      for (int c = 0; c < c_dim; ++c) out.at(c, x, y) = fused[c];
    }
  }
  return out;
}

Grid2D mvf_forward(const std::vector<CameraView>& cameras, const Grid2D& radar_bev,
                   const std::vector<std::vector<std::vector<int>>>& groups,
                   const MvfWeights& w, double tau_p, bool use_rca,
                   bool fuse_radar) {
  if (use_rca && groups.size() != cameras.size())
    throw std::invalid_argument("mvf_forward: one group table per camera required");
  const int c_dim = w.dims.channels;
  Grid2D cam_bev(radar_bev.spec, c_dim);
  std::vector<double> col(c_dim);
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const CameraView& view = cameras[i];
    auto [wc, hc] = compress_features(view.features, w);
    CameraFeatureMap w_bar = wc;
    if (use_rca) {
      const auto& cam_groups = groups[i];
      std::vector<double> radar_feats;
      for (int j = 0; j < view.features.width; ++j) {
        const std::vector<int>& cells = cam_groups[j];
        const int m = static_cast<int>(cells.size());
        radar_feats.assign(static_cast<std::size_t>(m) * c_dim, 0.0);
        for (int r = 0; r < m; ++r) {
          const int x = cells[r] / radar_bev.spec.y_cells;
          const int y = cells[r] % radar_bev.spec.y_cells;
          for (int c = 0; c < c_dim; ++c)
            radar_feats[static_cast<std::size_t>(r) * c_dim + c] = radar_bev.at(c, x, y);
        }
        for (int c = 0; c < c_dim; ++c) col[c] = wc.at(c, 0, j);
        const std::vector<double> fused = pixelwise_fuse(col, radar_feats, m, w);
        for (int c = 0; c < c_dim; ++c) w_bar.at(c, 0, j) = fused[c];
      }
    }
    const CameraFeatureMap enhanced = enhance_perspective(view.features, w_bar, hc, w);
    const DepthSegOutput depth = depth_seg_head(enhanced, w);
    const Grid2D lifted = lift_to_bev(enhanced, depth, view.model, radar_bev.spec, tau_p);
    for (std::size_t k = 0; k < cam_bev.data.size(); ++k) cam_bev.data[k] += lifted.data[k];
  }
  if (!fuse_radar) return cam_bev;
  return gated_fuse(cam_bev, radar_bev, w);
}

}  // namespace crtbev
