// SPDX-License-Identifier: Apache-2.0
#include "rtgs/slam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rtgs {

double importance_score(const Grad3D& g, double lambda) {
  const double mean_norm = g.d_mean.norm();
  const double cov_norm =
      std::sqrt(g.d_scale.squaredNorm() + g.d_rotation.squaredNorm());
  return mean_norm + lambda * cov_norm;
}

PruneStepResult prune_step(PruneState& st, Scene& scene, const GradientSet& grads,
                           const TileBinning& binning, int frame_index, int iteration) {
  PruneStepResult res;

  st.peak_population = std::max(st.peak_population,
                                static_cast<std::int64_t>(scene.size()) + st.removed_total);

  for (auto& g : scene) {
    if (g.masked) ++g.mask_age;
  }
  for (const auto& [id, g3] : grads.gaussian3d_level) {
    st.scores[id] += importance_score(g3, st.lambda);
  }
  if (!st.have_window_start) {
    st.window_start_pairs = binning.id_tile_pairs;
    st.have_window_start = true;
  }
  ++st.iter_in_window;
  if (st.iter_in_window < st.K) return res;

  // ---- window end ----
  res.window_closed = true;

  // remove Gaussians that stayed masked through a full window
  {
    std::vector<size_t> victims;
    for (size_t i = 0; i < scene.size(); ++i) {
      if (scene[i].masked && scene[i].mask_age >= st.K) victims.push_back(i);
    }
    const std::int64_t removable =
        std::max<std::int64_t>(0, static_cast<std::int64_t>(scene.size()) - st.floor);
    if (static_cast<std::int64_t>(victims.size()) > removable) {
      res.floor_hit = true;
      victims.resize(static_cast<size_t>(removable));
    }
    if (!victims.empty()) {
      std::vector<bool> drop(scene.size(), false);
      for (size_t v : victims) drop[v] = true;
      Scene kept;
      kept.reserve(scene.size() - victims.size());
      for (size_t i = 0; i < scene.size(); ++i) {
        if (!drop[i]) kept.push_back(scene[i]);
      }
      scene.swap(kept);
      res.removed = static_cast<int>(victims.size());
      st.removed_total += res.removed;
      st.masked_live -= res.removed;
    }
  }

  // mask the lowest-scoring unmasked Gaussians, bounded by the per-window
  // rate, the cumulative cap and the floor
  {
    std::vector<std::pair<double, std::int32_t>> order;  // (score, id)
    std::vector<size_t> index_of;
    order.reserve(scene.size());
    index_of.reserve(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
      if (scene[i].masked) continue;
      auto it = st.scores.find(scene[i].id);
      order.emplace_back(it == st.scores.end() ? 0.0 : it->second, scene[i].id);
      index_of.push_back(i);
    }
    const std::int64_t unmasked = static_cast<std::int64_t>(order.size());
    const std::int64_t budget =
        static_cast<std::int64_t>(std::floor(st.prune_fraction_cap *
                                             static_cast<double>(st.peak_population))) -
        st.removed_total - st.masked_live;
    std::int64_t want = static_cast<std::int64_t>(
        std::floor(st.window_fraction * static_cast<double>(unmasked)));
    want = std::min({want, budget, unmasked - st.floor});
    if (want > 0) {
      std::vector<int> sel(order.size());
      std::iota(sel.begin(), sel.end(), 0);
      std::sort(sel.begin(), sel.end(), [&](int a, int b) { return order[a] < order[b]; });
      for (std::int64_t k = 0; k < want; ++k) {
        Gaussian3D& g = scene[index_of[static_cast<size_t>(sel[static_cast<size_t>(k)])]];
        g.masked = true;
        g.mask_age = 0;
      }
      res.masked = static_cast<int>(want);
      st.masked_live += want;
    } else if (want < 0 || budget <= 0) {
      res.floor_hit = res.floor_hit || (unmasked - st.floor <= 0);
    }
  }

  // adapt K from the intersection change ratio over the window
  res.change_ratio = intersection_change_ratio(
      TileBinning{{}, {}, 0, st.window_start_pairs}, binning);
  st.K = res.change_ratio > 0.05 ? std::max(1, st.K / 2) : std::min(st.k_max, 2 * st.K);

  st.iter_in_window = 0;
  st.scores.clear();
  st.have_window_start = false;

  PruneEvent ev;
  ev.frame = frame_index;
  ev.iteration = iteration;
  ev.masked = res.masked;
  ev.removed = res.removed;
  ev.floor_hit = res.floor_hit;
  ev.change_ratio = res.change_ratio;
  ev.next_k = st.K;
  st.events.push_back(ev);
  return res;
}

std::pair<int, int> select_resolution(int n, int k_last, bool is_keyframe, int r0_width,
                                      int r0_height, double m) {
  if (is_keyframe) return {r0_width, r0_height};
  if (m <= 1.0) throw std::invalid_argument("downsampling factor m must be > 1");
  const int j = std::max(0, n - k_last - 1);
  // inverse area factor in [4, 16]; per-axis divisor = nearest power of two
  const double inv_area = std::min(16.0, std::max(4.0, 16.0 / std::pow(m, j)));
  const int exponent = static_cast<int>(std::lround(0.5 * std::log2(inv_area)));
  const int divisor = std::clamp(1 << exponent, 2, 4);
  if (r0_width % divisor != 0 || r0_height % divisor != 0) {
    throw std::invalid_argument("R0 must be divisible by the downsampling divisor");
  }
  return {r0_width / divisor, r0_height / divisor};
}

FrameState downsample_frame(const FrameState& frame, int divisor) {
  if (divisor == 1) return frame;
  if (frame.width % divisor != 0 || frame.height % divisor != 0) {
    throw std::invalid_argument("frame resolution not divisible by downsampling divisor");
  }
  FrameState out;
  out.frame_index = frame.frame_index;
  out.is_keyframe = frame.is_keyframe;
  out.last_keyframe_index = frame.last_keyframe_index;
  out.width = frame.width / divisor;
  out.height = frame.height / divisor;
  out.pose = frame.pose;
  out.pose.intrinsics = scale_intrinsics(frame.pose.intrinsics, 1.0 / divisor, 1.0 / divisor);
  out.observed_color = ColorImage(out.width, out.height);
  out.observed_depth = DepthImage(out.width, out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      Vec3 acc = Vec3::Zero();
      double dep = 0.0;
      int dep_n = 0;
      for (int dy = 0; dy < divisor; ++dy) {
        for (int dx = 0; dx < divisor; ++dx) {
          acc += frame.observed_color.pixel(y * divisor + dy, x * divisor + dx);
          const double d = frame.observed_depth.at(y * divisor + dy, x * divisor + dx);
          if (d > 0.0) {
            dep += d;
            ++dep_n;
          }
        }
      }
      out.observed_color.set_pixel(y, x, acc / (divisor * divisor));
      out.observed_depth.at(y, x) = dep_n > 0 ? dep / dep_n : 0.0;
    }
  }
  return out;
}

namespace {

std::int64_t count_fragments(const ForwardPass& fp) {
  std::int64_t n = 0;
  for (const auto& log : fp.record.pixels) n += log.n_contrib();
  return n;
}

}  // namespace

TrackStats track_frame(FrameState& frame, Scene& scene, const TrackerConfig& cfg,
                       PruneState* prune, const IterationSink* sink) {
  if (scene.empty()) throw std::invalid_argument("track_frame: empty scene");
  TrackStats stats;
  double lr_rot = cfg.lr_pose_rotation;
  double lr_trans = cfg.lr_pose_translation;
  int rising = 0;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.tracking_iterations; ++it) {
    ForwardPass fp = render_frame(scene, frame, cfg.render);
    LossResult lr = compute_loss(fp.record, frame, cfg.lambda_pho);
    GradientSet gs = backward_frame(fp, scene, frame, lr.grads, BackwardMode::tracking,
                                    cfg.render);

    stats.loss_trace.push_back(lr.loss);
    stats.pixels += static_cast<std::int64_t>(frame.width) * frame.height;
    stats.fragments += count_fragments(fp);

    if (lr.loss > prev_loss) {
      if (++rising >= cfg.divergence_patience) {
        lr_rot *= 0.5;
        lr_trans *= 0.5;
        ++stats.step_halvings;
        rising = 0;
      }
    } else {
      rising = 0;
    }
    prev_loss = lr.loss;

    frame.pose.rotation = perturb_rotation(frame.pose.rotation,
                                           -lr_rot * gs.pose_level.head<3>());
    frame.pose.translation -= lr_trans * gs.pose_level.tail<3>();

    if (prune != nullptr && prune->prune_fraction_cap > 0.0) {
      PruneStepResult pr = prune_step(*prune, scene, gs, fp.binning, frame.frame_index, it);
      stats.masked += pr.masked;
      stats.removed += pr.removed;
      stats.floor_hit = stats.floor_hit || pr.floor_hit;
    }
    if (sink != nullptr && *sink) {
      (*sink)(IterationSample{frame.frame_index, it, frame.is_keyframe, &fp, &gs, &frame});
    }
    stats.final_loss = lr.loss;
  }
  return stats;
}

namespace {

void insert_from_errors(FrameState& frame, Scene& scene, const TrackerConfig& cfg,
                        MapStats& stats) {
  ForwardPass fp = render_frame(scene, frame, cfg.render);
  std::int32_t next_id = 0;
  for (const auto& g : scene) next_id = std::max(next_id, g.id + 1);
  const Mat3 r_wc_t = frame.pose.rotation.toRotationMatrix().transpose();
  const auto& k = frame.pose.intrinsics;

  for (int y = 0; y < frame.height && stats.inserted < cfg.insert_max_per_keyframe;
       y += cfg.insert_stride) {
    for (int x = 0; x < frame.width && stats.inserted < cfg.insert_max_per_keyframe;
         x += cfg.insert_stride) {
      const double d = frame.observed_depth.at(y, x);
      if (d <= 0.0) continue;
      double err = 0.0;
      for (int c = 0; c < 3; ++c) {
        err += std::abs(fp.record.color.at(y, x, c) - frame.observed_color.at(y, x, c));
      }
      if (err <= cfg.insert_error_threshold) continue;

      const Vec3 p_cam((x + 0.5 - k.cx) / k.fx * d, (y + 0.5 - k.cy) / k.fy * d, d);
      Gaussian3D g;
      g.id = next_id++;
      g.mean = r_wc_t * (p_cam - frame.pose.translation);
      const double s = cfg.insert_scale_px * d / k.fx;
      g.scale = Vec3(s, s, s);
      g.opacity = cfg.insert_opacity;
      for (int c = 0; c < 3; ++c) {
        g.color[c] = std::clamp(frame.observed_color.at(y, x, c), 0.0, 1.0);
      }
      scene.push_back(g);
      ++stats.inserted;
    }
  }
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

MapStats map_keyframe(FrameState& frame, Scene& scene, const TrackerConfig& cfg,
                      const IterationSink* sink) {
  if (!frame.is_keyframe) throw std::invalid_argument("map_keyframe: frame is not a keyframe");
  MapStats stats;
  if (cfg.insertion) insert_from_errors(frame, scene, cfg, stats);

  std::unordered_map<std::int32_t, size_t> index_of;
  for (size_t i = 0; i < scene.size(); ++i) index_of[scene[i].id] = i;

  for (int it = 0; it < cfg.mapping_iterations; ++it) {
    ForwardPass fp = render_frame(scene, frame, cfg.render);
    LossResult lr = compute_loss(fp.record, frame, cfg.lambda_pho);
    GradientSet gs = backward_frame(fp, scene, frame, lr.grads, BackwardMode::mapping,
                                    cfg.render);
    stats.loss_trace.push_back(lr.loss);
    stats.pixels += static_cast<std::int64_t>(frame.width) * frame.height;
    stats.fragments += count_fragments(fp);

    for (const auto& [id, g3] : gs.gaussian3d_level) {
      Gaussian3D& g = scene[index_of.at(id)];
      g.mean -= cfg.lr_mean * g3.d_mean;
      // scale step in log space keeps positivity
      for (int a = 0; a < 3; ++a) {
        g.scale[a] *= std::exp(-cfg.lr_scale * g3.d_scale[a] * g.scale[a]);
        g.scale[a] = std::clamp(g.scale[a], 1e-6, 1e3);
      }
      g.rotation = perturb_rotation(g.rotation, -cfg.lr_rotation * g3.d_rotation);
      // opacity step in logit space keeps (0,1)
      const double o = std::clamp(g.opacity, 1e-4, 1.0 - 1e-4);
      g.opacity = sigmoid(logit(o) - cfg.lr_opacity * g3.d_opacity * o * (1.0 - o));
      g.color -= cfg.lr_color * g3.d_color;
      for (int c = 0; c < 3; ++c) g.color[c] = std::clamp(g.color[c], 0.0, 1.0);
    }
    if (sink != nullptr && *sink) {
      (*sink)(IterationSample{frame.frame_index, it, true, &fp, &gs, &frame});
    }
    stats.final_loss = lr.loss;
  }
  return stats;
}

Scene bootstrap_scene(const FrameState& frame, int stride, double opacity, double scale_factor,
                      std::int32_t first_id) {
  Scene scene;
  const Mat3 r_wc_t = frame.pose.rotation.toRotationMatrix().transpose();
  const auto& k = frame.pose.intrinsics;
  std::int32_t id = first_id;
  for (int y = stride / 2; y < frame.height; y += stride) {
    for (int x = stride / 2; x < frame.width; x += stride) {
      const double d = frame.observed_depth.at(y, x);
      if (d <= 0.0) continue;
      Gaussian3D g;
      g.id = id++;
      const Vec3 p_cam((x + 0.5 - k.cx) / k.fx * d, (y + 0.5 - k.cy) / k.fy * d, d);
      g.mean = r_wc_t * (p_cam - frame.pose.translation);
      const double s = scale_factor * stride * d / k.fx;
      g.scale = Vec3(s, s, s);
      g.opacity = opacity;
      for (int c = 0; c < 3; ++c) {
        g.color[c] = std::clamp(frame.observed_color.at(y, x, c), 0.0, 1.0);
      }
      scene.push_back(g);
    }
  }
  return scene;
}

double ate_rmse(const std::vector<Vec3>& estimated, const std::vector<Vec3>& ground_truth) {
  if (estimated.size() != ground_truth.size() || estimated.empty()) {
    throw std::invalid_argument("ate_rmse: trajectory size mismatch");
  }
  const size_t n = estimated.size();
  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    ce += estimated[i];
    cg += ground_truth[i];
  }
  ce /= static_cast<double>(n);
  cg /= static_cast<double>(n);

  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    h += (estimated[i] - ce) * (ground_truth[i] - cg).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 rot = svd.matrixV() * d * svd.matrixU().transpose();
  const Vec3 t = cg - rot * ce;

  double se = 0.0;
  for (size_t i = 0; i < n; ++i) {
    se += (rot * estimated[i] + t - ground_truth[i]).squaredNorm();
  }
  return std::sqrt(se / static_cast<double>(n));
}

double psnr(const ColorImage& a, const ColorImage& b) {
  if (a.data.size() != b.data.size() || a.data.empty()) {
    throw std::invalid_argument("psnr: image size mismatch");
  }
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 1e-12) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

SequenceReport run_sequence(const LoadedSequence& seq, const TrackerConfig& cfg,
                            const Scene* initial_scene, const IterationSink* sink) {
  if (seq.frames.empty()) throw std::invalid_argument("run_sequence: empty sequence");
  SequenceReport rep;

  Scene scene = (initial_scene != nullptr && !initial_scene->empty())
                    ? *initial_scene
                    : bootstrap_scene(seq.frames.front(), 4);
  if (scene.empty()) throw std::runtime_error("run_sequence: bootstrap produced no Gaussians");

  PruneState prune = PruneState::from_config(cfg);
  const bool pruning = cfg.prune_fraction_cap > 0.0;

  int k_last = 0;
  CameraPose est = seq.frames.front().pose;  // the first frame anchors the world

  for (size_t n = 0; n < seq.frames.size(); ++n) {
    const bool is_kf = (n % static_cast<size_t>(cfg.keyframe_interval)) == 0;
    auto [w, h] = cfg.downsampling
                      ? select_resolution(static_cast<int>(n), k_last, is_kf, cfg.r0_width,
                                          cfg.r0_height, cfg.m)
                      : std::make_pair(cfg.r0_width, cfg.r0_height);
    const int divisor = seq.frames[n].width / w;

    FrameState frame = divisor > 1 ? downsample_frame(seq.frames[n], divisor) : seq.frames[n];
    frame.is_keyframe = is_kf;
    frame.last_keyframe_index = k_last;
    frame.pose.rotation = est.rotation;
    frame.pose.translation = est.translation;

    TrackStats ts = track_frame(frame, scene, cfg, pruning ? &prune : nullptr, sink);
    est.rotation = frame.pose.rotation;
    est.translation = frame.pose.translation;

    FrameReport fr;
    fr.index = static_cast<int>(n);
    fr.keyframe = is_kf;
    fr.width = frame.width;
    fr.height = frame.height;
    fr.final_loss = ts.final_loss;
    fr.pixels = ts.pixels;
    fr.fragments = ts.fragments;
    fr.est_rotation = est.rotation;
    fr.est_translation = est.translation;

    if (is_kf) {
      FrameState kf = seq.frames[n];
      kf.is_keyframe = true;
      kf.last_keyframe_index = k_last;
      kf.pose.rotation = est.rotation;
      kf.pose.translation = est.translation;
      MapStats ms = map_keyframe(kf, scene, cfg, sink);
      fr.pixels += ms.pixels;
      fr.fragments += ms.fragments;
      k_last = static_cast<int>(n);

      ForwardPass fp = render_frame(scene, kf, cfg.render);
      fr.psnr = psnr(fp.record.color, kf.observed_color);
      rep.keyframe_psnr.push_back(fr.psnr);
      fr.pixels += static_cast<std::int64_t>(kf.width) * kf.height;
    }

    const CameraPose& gt = seq.gt_poses[n];
    CameraPose est_pose = est;
    est_pose.intrinsics = gt.intrinsics;
    fr.trans_err = (est_pose.camera_center() - gt.camera_center()).norm();
    fr.rot_err_deg = est.rotation.angularDistance(gt.rotation) * 180.0 / M_PI;
    fr.scene_size = static_cast<int>(scene.size());
    rep.frames.push_back(fr);

    rep.total_pixels += fr.pixels;
    rep.total_fragments += fr.fragments;
  }

  // tracking-lost detection against the sequence median of final losses
  std::vector<double> losses;
  for (const auto& f : rep.frames) losses.push_back(f.final_loss);
  std::vector<double> sorted = losses;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (auto& f : rep.frames) {
    f.tracking_lost = median > 0.0 && f.final_loss > 10.0 * median;
    rep.any_tracking_lost = rep.any_tracking_lost || f.tracking_lost;
  }

  std::vector<Vec3> est_centers, gt_centers;
  for (size_t n = 0; n < seq.frames.size(); ++n) {
    CameraPose p;
    p.rotation = rep.frames[n].est_rotation;
    p.translation = rep.frames[n].est_translation;
    est_centers.push_back(p.camera_center());
    gt_centers.push_back(seq.gt_poses[n].camera_center());
  }
  rep.ate_rmse = ate_rmse(est_centers, gt_centers);

  if (!rep.keyframe_psnr.empty()) {
    rep.mean_keyframe_psnr =
        std::accumulate(rep.keyframe_psnr.begin(), rep.keyframe_psnr.end(), 0.0) /
        static_cast<double>(rep.keyframe_psnr.size());
  }
  rep.final_scene_size = static_cast<int>(scene.size());
  rep.pruned_removed = prune.removed_total;
  rep.prune_events = std::move(prune.events);
  return rep;
}

}  // namespace rtgs
