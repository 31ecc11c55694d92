// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rtgs/rasterizer.hpp"

#include <map>

namespace rtgs {

/// Per-pixel loss gradients: dL/dC_P and dL/dD_P.
struct LossGradients {
  ColorImage d_color;
  DepthImage d_depth;  // zero where observed depth is invalid
};

struct LossResult {
  double loss = 0.0;
  double e_pho = 0.0;
  double e_geo = 0.0;
  LossGradients grads;
};

// L = lambda_pho * E_pho + (1 - lambda_pho) * E_geo with L1 residuals.
// E_pho averages over all pixels and channels, E_geo over valid-depth pixels.
LossResult compute_loss(const RenderRecord& record, const FrameState& frame, double lambda_pho);

/// Summed 2D gradient record for one Gaussian at some aggregation level.
struct Grad2D {
  Vec3 d_color = Vec3::Zero();
  double d_alpha = 0.0;
  Vec2 d_mean2d = Vec2::Zero();
  Mat2 d_cov2d = Mat2::Zero();
  double d_depth = 0.0;
  double d_opacity = 0.0;

  Grad2D& operator+=(const Grad2D& o) {
    d_color += o.d_color;
    d_alpha += o.d_alpha;
    d_mean2d += o.d_mean2d;
    d_cov2d += o.d_cov2d;
    d_depth += o.d_depth;
    d_opacity += o.d_opacity;
    return *this;
  }
};

struct PixelGradRecord {
  std::int32_t gaussian = 0;  // source id
  std::int32_t tile = 0;
  std::int32_t px = 0;
  std::int32_t py = 0;
  Grad2D grad;
};

struct Grad3D {
  Vec3 d_mean = Vec3::Zero();
  Vec3 d_scale = Vec3::Zero();
  Vec3 d_rotation = Vec3::Zero();  // tangent, left perturbation
  double d_opacity = 0.0;
  Vec3 d_color = Vec3::Zero();
};

struct GradientSet {
  // ordered by tile id, then pixel row-major, then blending order
  std::vector<PixelGradRecord> pixel_level;
  std::map<std::pair<std::int32_t, std::int32_t>, Grad2D> tile_level;  // (gaussian, tile)
  std::map<std::int32_t, Grad2D> gaussian2d_level;
  std::map<std::int32_t, Grad3D> gaussian3d_level;
  Vec6 pose_level = Vec6::Zero();  // [rotation tangent; translation]
};

// Back-to-front walk of one pixel's contribution log. Transmittance is
// recovered by the recursive division from t_final; the forward clamp
// guarantees 1 - alpha >= 1e-3, anything smaller is a hard error.
std::vector<Grad2D> backward_pixel(const PixelLog& log, const Vec2& pixel,
                                   const Vec3& d_color_p, double d_depth_p,
                                   const std::vector<Gaussian2D>& g2ds,
                                   const Vec3& background, double alpha_clamp = 0.999);

// Fills tile_level and gaussian2d_level from pixel_level in a fixed order.
void aggregate_gradients(GradientSet& gs);

enum class BackwardMode { tracking, mapping };

// Chains gaussian2d_level through the projection Jacobians into 3D
// parameter gradients; tracking mode also accumulates the 6-DoF pose
// gradient (sum over Gaussians in ascending id order).
void preprocess_backward(GradientSet& gs, const Scene& scene, const CameraPose& pose,
                         BackwardMode mode, const ProjectOptions& opts);

// Whole-frame backward: pixel loop (parallel over tiles, deterministic
// merge) + aggregation + preprocessing BP.
GradientSet backward_frame(const ForwardPass& fp, const Scene& scene, const FrameState& frame,
                           const LossGradients& grads, BackwardMode mode,
                           const RenderOptions& opts);

// Debug dump, line oriented: "<id> <level> <values...>".
void dump_gradient_set(const GradientSet& gs, const std::string& path);

}  // namespace rtgs
