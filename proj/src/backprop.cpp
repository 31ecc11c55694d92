// SPDX-License-Identifier: Apache-2.0
#include "rtgs/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace rtgs {

namespace {
inline double sgn(double x) { return (x > 0.0) - (x < 0.0); }
}  // namespace

LossResult compute_loss(const RenderRecord& record, const FrameState& frame, double lambda_pho) {
  if (record.width != frame.width || record.height != frame.height) {
    throw std::invalid_argument("loss: rendered and observed resolutions differ");
  }
  LossResult res;
  res.grads.d_color = ColorImage(record.width, record.height);
  res.grads.d_depth = DepthImage(record.width, record.height);

  const double n_pix = static_cast<double>(record.width) * record.height;
  std::int64_t n_valid = 0;
  for (int y = 0; y < record.height; ++y) {
    for (int x = 0; x < record.width; ++x) {
      if (frame.observed_depth.at(y, x) > 0.0) ++n_valid;
    }
  }

  const double pho_w = lambda_pho / (3.0 * n_pix);
  const double geo_w = n_valid > 0 ? (1.0 - lambda_pho) / static_cast<double>(n_valid) : 0.0;

  for (int y = 0; y < record.height; ++y) {
    for (int x = 0; x < record.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double r = record.color.at(y, x, c) - frame.observed_color.at(y, x, c);
        res.e_pho += std::abs(r);
        res.grads.d_color.at(y, x, c) = pho_w * sgn(r);
      }
      const double od = frame.observed_depth.at(y, x);
      if (od > 0.0) {
        const double r = record.depth.at(y, x) - od;
        res.e_geo += std::abs(r);
        res.grads.d_depth.at(y, x) = geo_w * sgn(r);
      }
    }
  }
  res.e_pho /= 3.0 * n_pix;
  res.e_geo = n_valid > 0 ? res.e_geo / static_cast<double>(n_valid) : 0.0;
  res.loss = lambda_pho * res.e_pho + (1.0 - lambda_pho) * res.e_geo;
  return res;
}

std::vector<Grad2D> backward_pixel(const PixelLog& log, const Vec2& pixel,
                                   const Vec3& d_color_p, double d_depth_p,
                                   const std::vector<Gaussian2D>& g2ds,
                                   const Vec3& background, double alpha_clamp) {
  const int n = log.n_contrib();
  std::vector<Grad2D> out(static_cast<size_t>(n));
  if (n == 0) return out;

  // Rendered depth was depth_acc / w; both gradients flow through the
  // quotient. depth_acc is rebuilt from the logged values, bit-equal to
  // the forward accumulation.
  double depth_acc = 0.0;
  for (const auto& fc : log.frags) {
    depth_acc += fc.transmittance * fc.alpha * g2ds[static_cast<size_t>(fc.g2d)].depth;
  }
  const double w = 1.0 - log.t_final;
  const bool depth_live = w > 1e-6;
  const double d_acc = depth_live ? d_depth_p / w : 0.0;
  const double d_w = depth_live ? -d_depth_p * depth_acc / (w * w) : 0.0;

  Vec3 suffix_c = Vec3::Zero();  // sum of chat behind the current fragment
  double suffix_d = 0.0;
  double t_after = log.t_final;

  for (int i = n - 1; i >= 0; --i) {
    const FragContrib& fc = log.frags[static_cast<size_t>(i)];
    const Gaussian2D& g = g2ds[static_cast<size_t>(fc.g2d)];
    const double one_m_a = 1.0 - fc.alpha;
    if (one_m_a < 1e-6) {
      throw std::runtime_error("backward_pixel: 1 - alpha below 1e-6, forward clamp violated");
    }
    const double t_k = t_after / one_m_a;  // Eq.-style recursive recovery

    Grad2D gr;
    gr.d_color = t_k * fc.alpha * d_color_p;

    double d_alpha = 0.0;
    for (int c = 0; c < 3; ++c) {
      d_alpha += d_color_p[c] *
                 (t_k * g.color[c] - (suffix_c[c] + background[c] * log.t_final) / one_m_a);
    }
    d_alpha += d_acc * (t_k * g.depth - suffix_d / one_m_a);
    d_alpha += d_w * (log.t_final / one_m_a);
    gr.d_alpha = d_alpha;
    gr.d_depth = d_acc * t_k * fc.alpha;

    // When the forward clamped alpha, upstream derivatives vanish.
    if (fc.alpha < alpha_clamp) {
      const Vec2 d = pixel - g.mean2d;
      const Vec2 v = g.inv_cov2d * d;
      gr.d_opacity = d_alpha * (fc.alpha / g.opacity);
      gr.d_mean2d = d_alpha * fc.alpha * v;
      gr.d_cov2d = 0.5 * d_alpha * fc.alpha * (v * v.transpose());
    }
    out[static_cast<size_t>(i)] = gr;

    suffix_c += fc.chat;
    suffix_d += fc.transmittance * fc.alpha * g.depth;
    t_after = t_k;
  }
  return out;
}

void aggregate_gradients(GradientSet& gs) {
  gs.tile_level.clear();
  gs.gaussian2d_level.clear();
  for (const auto& rec : gs.pixel_level) {
    gs.tile_level[{rec.gaussian, rec.tile}] += rec.grad;
  }
  for (const auto& [key, grad] : gs.tile_level) {
    gs.gaussian2d_level[key.first] += grad;
  }
}

void preprocess_backward(GradientSet& gs, const Scene& scene, const CameraPose& pose,
                         BackwardMode mode, const ProjectOptions& opts) {
  std::unordered_map<std::int32_t, const Gaussian3D*> by_id;
  by_id.reserve(scene.size());
  for (const auto& g : scene) by_id.emplace(g.id, &g);

  gs.gaussian3d_level.clear();
  gs.pose_level.setZero();

  const Mat3 w = pose.rotation.toRotationMatrix();
  const auto& k = pose.intrinsics;

  for (const auto& [id, g2] : gs.gaussian2d_level) {
    auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    const Gaussian3D& g = *it->second;

    const Vec3 t = w * g.mean + pose.translation;
    if (t.z() <= opts.near_plane) continue;  // culled: contributes nothing
    const double inv_z = 1.0 / t.z();

    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * inv_z, 0.0, -k.fx * t.x() * inv_z * inv_z,
         0.0, k.fy * inv_z, -k.fy * t.y() * inv_z * inv_z;

    const Mat3 r = g.rotation.toRotationMatrix();
    const Mat3 a3 = r * g.scale.asDiagonal();
    const Mat3 sigma = a3 * a3.transpose();
    const Eigen::Matrix<double, 2, 3> m = j * w;

    Grad3D g3;
    g3.d_opacity = g2.d_opacity;
    g3.d_color = g2.d_color;

    // covariance chain: Sigma* = M Sigma M^T
    const Mat3 d_sigma = m.transpose() * g2.d_cov2d * m;
    const Mat3 d_a3 = 2.0 * d_sigma * a3;
    g3.d_scale = (r.transpose() * d_a3).diagonal();
    const Mat3 d_r = d_a3 * g.scale.asDiagonal();
    for (int axis = 0; axis < 3; ++axis) {
      g3.d_rotation[axis] = (skew(Vec3::Unit(axis)) * r).cwiseProduct(d_r).sum();
    }

    // camera-space gradient dL/dt: mean2d path + J(t) path + depth path
    Vec3 d_t = j.transpose() * g2.d_mean2d;
    const Mat3 v_cam = w * sigma * w.transpose();
    const Eigen::Matrix<double, 2, 3> d_j = 2.0 * g2.d_cov2d * j * v_cam;
    const double iz2 = inv_z * inv_z;
    const double iz3 = iz2 * inv_z;
    d_t.x() += d_j(0, 2) * (-k.fx * iz2);
    d_t.y() += d_j(1, 2) * (-k.fy * iz2);
    d_t.z() += d_j(0, 0) * (-k.fx * iz2) + d_j(1, 1) * (-k.fy * iz2) +
               d_j(0, 2) * (2.0 * k.fx * t.x() * iz3) + d_j(1, 2) * (2.0 * k.fy * t.y() * iz3);
    d_t.z() += g2.d_depth;

    g3.d_mean = w.transpose() * d_t;
    gs.gaussian3d_level.emplace(id, g3);

    if (mode == BackwardMode::tracking) {
      // left perturbation W <- Exp(eps) W, tau <- tau + eps_t
      const Vec3 rot_from_t = (w * g.mean).cross(d_t);
      const Mat3 d_v = j.transpose() * g2.d_cov2d * j;
      const Mat3 d_w_direct = 2.0 * d_v * w * sigma;
      Vec3 rot_from_cov;
      for (int axis = 0; axis < 3; ++axis) {
        rot_from_cov[axis] = (skew(Vec3::Unit(axis)) * w).cwiseProduct(d_w_direct).sum();
      }
      gs.pose_level.head<3>() += rot_from_t + rot_from_cov;
      gs.pose_level.tail<3>() += d_t;
    }
  }
}

GradientSet backward_frame(const ForwardPass& fp, const Scene& scene, const FrameState& frame,
                           const LossGradients& grads, BackwardMode mode,
                           const RenderOptions& opts) {
  const TileLayout& layout = fp.layout;
  const int ts = TileLayout::kTileSize;
  std::vector<std::vector<PixelGradRecord>> per_tile(static_cast<size_t>(layout.tile_count()));

  parallel_for(layout.tile_count(), opts.threads, [&](int tile) {
    auto& local = per_tile[static_cast<size_t>(tile)];
    const int tx = tile % layout.tiles_x;
    const int ty = tile / layout.tiles_x;
    const int x1 = std::min(frame.width, (tx + 1) * ts);
    const int y1 = std::min(frame.height, (ty + 1) * ts);
    for (int y = ty * ts; y < y1; ++y) {
      for (int x = tx * ts; x < x1; ++x) {
        const PixelLog& log = fp.record.log_at(y, x);
        if (log.frags.empty()) continue;
        const Vec3 dc = grads.d_color.pixel(y, x);
        const double dd = grads.d_depth.at(y, x);
        std::vector<Grad2D> fgrads = backward_pixel(log, Vec2(x + 0.5, y + 0.5), dc, dd,
                                                    fp.g2ds, fp.record.background,
                                                    opts.alpha_clamp);
        for (size_t i = 0; i < fgrads.size(); ++i) {
          PixelGradRecord rec;
          rec.gaussian = fp.g2ds[static_cast<size_t>(log.frags[i].g2d)].source_id;
          rec.tile = tile;
          rec.px = x;
          rec.py = y;
          rec.grad = fgrads[i];
          local.push_back(rec);
        }
      }
    }
  });

  GradientSet gs;
  size_t total = 0;
  for (const auto& v : per_tile) total += v.size();
  gs.pixel_level.reserve(total);
  for (auto& v : per_tile) {
    gs.pixel_level.insert(gs.pixel_level.end(), v.begin(), v.end());
  }
  aggregate_gradients(gs);
  preprocess_backward(gs, scene, frame.pose, mode, opts.projection());
  return gs;
}

void dump_gradient_set(const GradientSet& gs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  auto put2d = [&](const Grad2D& g) {
    out << ' ' << g.d_color.x() << ' ' << g.d_color.y() << ' ' << g.d_color.z()
        << ' ' << g.d_alpha
        << ' ' << g.d_mean2d.x() << ' ' << g.d_mean2d.y()
        << ' ' << g.d_cov2d(0, 0) << ' ' << g.d_cov2d(0, 1) << ' ' << g.d_cov2d(1, 1)
        << ' ' << g.d_depth << ' ' << g.d_opacity << '\n';
  };
  out.precision(17);
  for (const auto& [key, g] : gs.tile_level) {
    out << key.first << " tile " << key.second;
    put2d(g);
  }
  for (const auto& [id, g] : gs.gaussian2d_level) {
    out << id << " g2d";
    put2d(g);
  }
  for (const auto& [id, g] : gs.gaussian3d_level) {
    out << id << " g3d"
        << ' ' << g.d_mean.x() << ' ' << g.d_mean.y() << ' ' << g.d_mean.z()
        << ' ' << g.d_scale.x() << ' ' << g.d_scale.y() << ' ' << g.d_scale.z()
        << ' ' << g.d_rotation.x() << ' ' << g.d_rotation.y() << ' ' << g.d_rotation.z()
        << ' ' << g.d_opacity
        << ' ' << g.d_color.x() << ' ' << g.d_color.y() << ' ' << g.d_color.z() << '\n';
  }
  out << "-1 pose";
  for (int i = 0; i < 6; ++i) out << ' ' << gs.pose_level[i];
  out << '\n';
}

}  // namespace rtgs
