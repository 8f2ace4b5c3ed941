#include "crtbev/mfe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crtbev {

namespace {

constexpr double kProbEps = 1e-7;

double clamp_prob(double p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }

}  // namespace

HeadWeights HeadWeights::seeded(int in, int mid, int out, Rng& rng) {
  HeadWeights h;
  h.in_ch = in;
  h.mid_ch = mid;
  h.out_ch = out;
  const double k3 = 1.0 / std::sqrt(9.0 * in);
  h.w3.resize(static_cast<std::size_t>(mid) * in * 9);
  for (double& v : h.w3) v = rng.uniform(-k3, k3);
  h.b3.resize(mid);
  for (double& v : h.b3) v = rng.uniform(-k3, k3);
  h.w1 = LinearLayer::seeded(out, mid, rng);
  return h;
}

HeadWeights HeadWeights::from_patch_weights(int in_ch, int out_ch,
                                            const std::vector<double>& patch_w) {
  const int dim = 9 * in_ch + 1;
  if (patch_w.size() != static_cast<std::size_t>(out_ch) * dim)
    throw std::invalid_argument("HeadWeights: patch weight shape mismatch");
  HeadWeights h;
  h.in_ch = in_ch;
  h.mid_ch = out_ch;
  h.out_ch = out_ch;
  h.w3.resize(static_cast<std::size_t>(out_ch) * in_ch * 9);
  h.b3.resize(out_ch);
  for (int o = 0; o < out_ch; ++o) {
    const double* row = patch_w.data() + static_cast<std::size_t>(o) * dim;
    // patch layout: ((c * 3 + dx) * 3 + dy), bias last, same as w3
    std::copy(row, row + 9 * in_ch, h.w3.begin() + static_cast<std::size_t>(o) * in_ch * 9);
    h.b3[o] = row[9 * in_ch];
  }
  h.w1 = LinearLayer::identity(out_ch);
  return h;
}

std::vector<double> HeadWeights::to_patch_weights() const {
  // collapse conv1x1(conv3x3(.)) into one patch-space map
  const int dim = 9 * in_ch + 1;
  std::vector<double> out(static_cast<std::size_t>(out_ch) * dim, 0.0);
  for (int o = 0; o < out_ch; ++o) {
    double* row = out.data() + static_cast<std::size_t>(o) * dim;
    for (int m = 0; m < mid_ch; ++m) {
      const double a = w1.weight[static_cast<std::size_t>(o) * mid_ch + m];
      const double* taps = w3.data() + static_cast<std::size_t>(m) * in_ch * 9;
      for (int i = 0; i < 9 * in_ch; ++i) row[i] += a * taps[i];
      row[9 * in_ch] += a * b3[m];
    }
    row[9 * in_ch] += w1.bias[o];
  }
  return out;
}

Grid2D head_forward(const Grid2D& bev, const HeadWeights& w) {
  if (bev.channels != w.in_ch)
    throw std::invalid_argument("head_forward: channel mismatch");
  const GridSpec& spec = bev.spec;
  Grid2D out(spec, w.out_ch);
  std::vector<double> mid(w.mid_ch), head(w.out_ch);
  for (int x = 0; x < spec.x_cells; ++x) {
    for (int y = 0; y < spec.y_cells; ++y) {
      for (int m = 0; m < w.mid_ch; ++m) {
        double acc = w.b3[m];
        const double* taps = w.w3.data() + static_cast<std::size_t>(m) * w.in_ch * 9;
        for (int c = 0; c < w.in_ch; ++c) {
          for (int dx = 0; dx < 3; ++dx) {
            const int xx = x + dx - 1;
            if (xx < 0 || xx >= spec.x_cells) continue;
            for (int dy = 0; dy < 3; ++dy) {
              const int yy = y + dy - 1;
              if (yy < 0 || yy >= spec.y_cells) continue;
              acc += taps[(c * 3 + dx) * 3 + dy] * bev.at(c, xx, yy);
            }
          }
        }
        mid[m] = acc;
      }
      w.w1.forward(mid.data(), head.data());
      for (int o = 0; o < w.out_ch; ++o) out.at(o, x, y) = head[o];
    }
  }
  return out;
}

MotionMap velocity_head(const Grid2D& bev, const HeadWeights& w) {
  if (w.out_ch != 2) throw std::invalid_argument("velocity_head: needs 2 output channels");
  return head_forward(bev, w);
}

OccupancyMap occupancy_head(const Grid2D& bev, const HeadWeights& w) {
  if (w.out_ch != 1) throw std::invalid_argument("occupancy_head: needs 1 output channel");
  Grid2D out = head_forward(bev, w);
  for (double& v : out.data) v = sigmoid(v);
  return out;
}

Targets make_targets(const GridSpec& grid, const std::vector<GtObject>& objects,
                     double tau_iou) {
  if (!(tau_iou > 0.0 && tau_iou <= 1.0))
    throw std::invalid_argument("make_targets: tau_iou must be in (0, 1]");
  Targets t{Grid2D(grid, 2), Grid2D(grid, 1)};
  if (objects.empty()) return t;

  std::vector<Polygon2D> polys;
  polys.reserve(objects.size());
  for (const GtObject& obj : objects) polys.push_back(bev_footprint(obj));

  // per-footprint bounding boxes keep the clipping local
  struct Bbox {
    double min_x, max_x, min_y, max_y;
  };
  std::vector<Bbox> boxes;
  boxes.reserve(polys.size());
  for (const Polygon2D& poly : polys) {
    Bbox b{poly.vertices[0].x, poly.vertices[0].x, poly.vertices[0].y,
           poly.vertices[0].y};
    for (const Vec2& v : poly.vertices) {
      b.min_x = std::min(b.min_x, v.x);
      b.max_x = std::max(b.max_x, v.x);
      b.min_y = std::min(b.min_y, v.y);
      b.max_y = std::max(b.max_y, v.y);
    }
    boxes.push_back(b);
  }

  const double cs = grid.cell_size;
  for (int x = 0; x < grid.x_cells; ++x) {
    const double cell_min_x = grid.origin.x + x * cs;
    for (int y = 0; y < grid.y_cells; ++y) {
      const double cell_min_y = grid.origin.y + y * cs;
      double total = 0.0;
      double best_r = 0.0;
      int best_obj = -1;
      for (std::size_t i = 0; i < objects.size(); ++i) {
        const Bbox& b = boxes[i];
        if (cell_min_x > b.max_x || cell_min_x + cs < b.min_x ||
            cell_min_y > b.max_y || cell_min_y + cs < b.min_y)
          continue;
        const std::vector<Polygon2D> single{polys[i]};
        const double r = cell_box_overlap_ratio(grid, x, y, single);
        total += r;
        if (r > best_r) {
          best_r = r;
          best_obj = static_cast<int>(i);
        }
      }
      if (total > 1.0 + 1e-9)
        throw std::runtime_error("make_targets: overlapping footprints violate the disjointness guarantee");
      if (std::min(1.0, total) >= tau_iou && best_obj >= 0) {
        t.occupancy.at(0, x, y) = 1.0;
        t.motion.at(0, x, y) = objects[best_obj].velocity.x;
        t.motion.at(1, x, y) = objects[best_obj].velocity.y;
      }
    }
  }
  return t;
}

double focal_loss(double p, int target, double gamma, double alpha) {
  p = clamp_prob(p);
  if (target == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

double focal_loss_grad_z(double p, int target, double gamma, double alpha) {
  p = clamp_prob(p);
  if (target == 1) {
    return alpha * gamma * p * std::pow(1.0 - p, gamma) * std::log(p) -
           alpha * std::pow(1.0 - p, gamma + 1.0);
  }
  return (1.0 - alpha) * std::pow(p, gamma + 1.0) -
         (1.0 - alpha) * gamma * std::pow(p, gamma) * (1.0 - p) * std::log(1.0 - p);
}

namespace {

double bce(double p, double y) {
  p = clamp_prob(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace

LossBreakdown mfe_loss(const MotionMap& motion, const OccupancyMap& occupancy,
                       const MotionMap& motion_gt, const OccupancyMap& occupancy_gt,
                       const DepthSegOutput& depth_pred, const DepthImage& depth_gt,
                       const LossWeights& lw) {
  if (motion.data.size() != motion_gt.data.size() ||
      occupancy.data.size() != occupancy_gt.data.size() ||
      !motion.spec.same_geometry(occupancy.spec))
    throw std::invalid_argument("mfe_loss: shape mismatch");
  if (depth_pred.height != depth_gt.height || depth_pred.width != depth_gt.width)
    throw std::invalid_argument("mfe_loss: depth shape mismatch");

  LossBreakdown out;

  double vel_sum = 0.0;
  for (std::size_t i = 0; i < motion.data.size(); ++i) {
    const double d = motion.data[i] - motion_gt.data[i];
    vel_sum += d * d;
  }
  out.vel = vel_sum / static_cast<double>(motion.data.size());

  double occ_sum = 0.0;
  for (std::size_t i = 0; i < occupancy.data.size(); ++i) {
    occ_sum += focal_loss(occupancy.data[i], occupancy_gt.data[i] >= 0.5 ? 1 : 0,
                          lw.focal_gamma, lw.focal_alpha);
  }
  out.occ = occ_sum / static_cast<double>(occupancy.data.size());

  double depth_sum = 0.0, seg_sum = 0.0;
  std::size_t fg_pixels = 0;
  const int bins = depth_pred.bins;
  for (int h = 0; h < depth_pred.height; ++h) {
    for (int w = 0; w < depth_pred.width; ++w) {
      const double d = depth_gt.at(h, w);
      const bool fg = std::isfinite(d);
      seg_sum += bce(depth_pred.fg(h, w), fg ? 1.0 : 0.0);
      if (!fg) continue;
      ++fg_pixels;
      int gt_bin = 0;
      if (d >= depth_pred.bin_edges.back()) {
        gt_bin = bins - 1;
      } else if (d > depth_pred.bin_edges.front()) {
        while (gt_bin + 1 < bins && depth_pred.bin_edges[gt_bin + 1] <= d) ++gt_bin;
      }
      for (int k = 0; k < bins; ++k)
        depth_sum += bce(depth_pred.prob(k, h, w), k == gt_bin ? 1.0 : 0.0);
    }
  }
  const std::size_t pixels =
      static_cast<std::size_t>(depth_pred.height) * depth_pred.width;
  out.seg = seg_sum / static_cast<double>(pixels);
  out.depth = fg_pixels == 0 ? 0.0
                             : depth_sum / static_cast<double>(fg_pixels * bins);

  out.total = lw.depth * out.depth + lw.seg * out.seg + lw.vel * out.vel +
              lw.occ * out.occ;
  return out;
}

PatchDataset build_patch_dataset(const std::vector<FitSample>& samples,
                                 const FitOptions& opt) {
  if (samples.empty()) throw std::invalid_argument("fit: need at least one sample");
  const int c_dim = samples[0].bev->channels;
  PatchDataset data;
  data.dim = 9 * c_dim + 1;
  Rng rng(derive_seed(opt.subsample_seed, "fit_subsample"));
  for (const FitSample& s : samples) {
    if (s.bev->channels != c_dim ||
        !s.bev->spec.same_geometry(s.motion_gt->spec) ||
        !s.bev->spec.same_geometry(s.occupancy_gt->spec))
      throw std::invalid_argument("fit: sample shape mismatch");
    const GridSpec& spec = s.bev->spec;
    for (int x = 0; x < spec.x_cells; ++x) {
      for (int y = 0; y < spec.y_cells; ++y) {
        const bool positive = s.occupancy_gt->at(0, x, y) >= 0.5;
        const bool keep =
            positive || opt.background_keep >= 1.0 || rng.bernoulli(opt.background_keep);
        if (!keep) continue;
        const std::size_t base = data.x.size();
        data.x.resize(base + data.dim, 0.0);
        double* row = data.x.data() + base;
        for (int c = 0; c < c_dim; ++c) {
          for (int dx = 0; dx < 3; ++dx) {
            const int xx = x + dx - 1;
            if (xx < 0 || xx >= spec.x_cells) continue;
            for (int dy = 0; dy < 3; ++dy) {
              const int yy = y + dy - 1;
              if (yy < 0 || yy >= spec.y_cells) continue;
              row[(c * 3 + dx) * 3 + dy] = s.bev->at(c, xx, yy);
            }
          }
        }
        row[9 * c_dim] = 1.0;
        data.occ_y.push_back(positive ? 1.0 : 0.0);
        data.vel_y.push_back(s.motion_gt->at(0, x, y));
        data.vel_y.push_back(s.motion_gt->at(1, x, y));
        ++data.n;
      }
    }
  }
  return data;
}

double occupancy_loss_and_grad(const PatchDataset& data,
                               const std::vector<double>& w, double gamma,
                               double alpha, std::vector<double>* grad_out) {
  if (static_cast<int>(w.size()) != data.dim)
    throw std::invalid_argument("occupancy_loss_and_grad: weight dimension mismatch");
  if (grad_out) grad_out->assign(data.dim, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double* row = data.x.data() + i * data.dim;
    double z = 0.0;
    for (int d = 0; d < data.dim; ++d) z += row[d] * w[d];
    const double p = sigmoid(z);
    const int y = data.occ_y[i] >= 0.5 ? 1 : 0;
    loss += focal_loss(p, y, gamma, alpha);
    if (grad_out) {
      const double gz = focal_loss_grad_z(p, y, gamma, alpha);
      for (int d = 0; d < data.dim; ++d) (*grad_out)[d] += gz * row[d];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(data.n);
  if (grad_out)
    for (double& g : *grad_out) g *= inv_n;
  return loss * inv_n;
}

namespace {

// in-place Cholesky solve; returns false when not positive definite
bool cholesky_solve(std::vector<double>& a, int n, std::vector<double>& rhs,
                    int n_rhs) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (s <= 0.0) return false;
        a[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
      } else {
        a[static_cast<std::size_t>(i) * n + j] = s / a[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  for (int r = 0; r < n_rhs; ++r) {
    double* b = rhs.data() + static_cast<std::size_t>(r) * n;
    for (int i = 0; i < n; ++i) {
      double s = b[i];
      for (int k = 0; k < i; ++k) s -= a[static_cast<std::size_t>(i) * n + k] * b[k];
      b[i] = s / a[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = b[i];
      for (int k = i + 1; k < n; ++k) s -= a[static_cast<std::size_t>(k) * n + i] * b[k];
      b[i] = s / a[static_cast<std::size_t>(i) * n + i];
    }
  }
  return true;
}

}  // namespace

std::vector<double> ridge_solve(const PatchDataset& data,
                                const std::vector<double>& targets, int n_targets,
                                double lambda) {
  if (targets.size() != data.n * static_cast<std::size_t>(n_targets))
    throw std::invalid_argument("ridge_solve: target shape mismatch");
  const int d = data.dim;
  std::vector<double> gram(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> xty(static_cast<std::size_t>(d) * n_targets, 0.0);
  for (std::size_t i = 0; i < data.n; ++i) {
    const double* row = data.x.data() + i * d;
    for (int a = 0; a < d; ++a) {
      const double ra = row[a];
      if (ra == 0.0) continue;
      double* g = gram.data() + static_cast<std::size_t>(a) * d;
      for (int b = 0; b <= a; ++b) g[b] += ra * row[b];
      for (int t = 0; t < n_targets; ++t)
        xty[static_cast<std::size_t>(t) * d + a] += ra * targets[i * n_targets + t];
    }
  }
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b)
      gram[static_cast<std::size_t>(a) * d + b] = gram[static_cast<std::size_t>(b) * d + a];
    gram[static_cast<std::size_t>(a) * d + a] += lambda;
  }
  std::vector<double> solution = xty;  // solved in place, per target column
  if (!cholesky_solve(gram, d, solution, n_targets))
    throw std::runtime_error("ill-conditioned fit; increase ridge lambda");
  // reorder to row-major (target, dim) -> (t * d + a) already is; callers
  // expect per-target rows
  return solution;
}

FitResult fit_heads(const std::vector<FitSample>& samples, const FitOptions& opt) {
  const PatchDataset data = build_patch_dataset(samples, opt);
  const int c_dim = samples[0].bev->channels;
  const int d = data.dim;

  FitResult result;
  result.n_samples = static_cast<int>(data.n);
  result.ridge_lambda = opt.ridge_lambda;

  // velocity: exact ridge ERM on patches
  const std::vector<double> vel_w = ridge_solve(data, data.vel_y, 2, opt.ridge_lambda);
  result.velocity = HeadWeights::from_patch_weights(c_dim, 2, vel_w);

  double vel_err = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double* row = data.x.data() + i * d;
    for (int t = 0; t < 2; ++t) {
      double pred = 0.0;
      const double* wt = vel_w.data() + static_cast<std::size_t>(t) * d;
      for (int a = 0; a < d; ++a) pred += wt[a] * row[a];
      const double e = pred - data.vel_y[i * 2 + t];
      vel_err += e * e;
    }
  }
  result.l_vel = vel_err / static_cast<double>(2 * data.n);

  // occupancy: full-batch gradient descent on the focal loss
  std::vector<double> w(d, 0.0), grad(d);
  double loss = occupancy_loss_and_grad(data, w, opt.focal_gamma, opt.focal_alpha, &grad);
  for (int it = 0; it < opt.gd_iterations; ++it) {
    for (int a = 0; a < d; ++a) w[a] -= opt.gd_learning_rate * grad[a];
    loss = occupancy_loss_and_grad(data, w, opt.focal_gamma, opt.focal_alpha, &grad);
  }
  result.l_occ = loss;
  result.occupancy = HeadWeights::from_patch_weights(c_dim, 1, w);
  return result;
}

}  // namespace crtbev
