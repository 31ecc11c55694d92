// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rtgs/projection.hpp"

namespace rtgs {

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  double alpha_min = 1.0 / 255.0;  // fragments at or below this are skipped
  double alpha_clamp = 0.999;      // keeps 1-alpha bounded away from 0
  double t_term = 1e-4;            // early termination threshold
  bool early_termination = true;
  double near_plane = 0.01;
  double cov_reg = 0.3;
  int threads = 0;  // 0 = RTGS_THREADS / hardware default

  ProjectOptions projection() const { return ProjectOptions{near_plane, cov_reg}; }
};

/// Per-tile fragment order: ascending depth, ties by source id.
struct SortedTileList {
  std::vector<std::vector<std::int32_t>> tiles;  // g2d indices
};

SortedTileList sort_tile_fragments(const TileBinning& binning,
                                   const std::vector<Gaussian2D>& g2ds);

// Eq. alpha = o * exp(-0.5 d^T conic d), clamped.
double compute_alpha(const Gaussian2D& g2d, const Vec2& pixel, double clamp = 0.999);

/// One processed fragment, logged in blending order. This is the software
/// analog of the R&B buffer contents: alpha, the transmittance in front of
/// the fragment, and the color contribution chat = T * alpha * C.
struct FragContrib {
  std::int32_t g2d = 0;  // index into the frame's Gaussian2D array
  double alpha = 0.0;
  double transmittance = 0.0;
  Vec3 chat = Vec3::Zero();
};

struct PixelLog {
  std::vector<FragContrib> frags;
  double t_final = 1.0;
  int n_contrib() const { return static_cast<int>(frags.size()); }
};

struct PixelResult {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  PixelLog log;
};

// Fragments must arrive in depth order; pixel positions use the
// (x + 0.5, y + 0.5) center convention.
PixelResult render_pixel(const Vec2& pixel, const std::vector<std::int32_t>& order,
                         const std::vector<Gaussian2D>& g2ds, const RenderOptions& opts);

struct RenderRecord {
  int width = 0;
  int height = 0;
  ColorImage color;
  DepthImage depth;
  std::vector<PixelLog> pixels;  // row-major
  Vec3 background = Vec3::Zero();

  const PixelLog& log_at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

/// Everything the backward pass and the trace exporter need from a forward
/// render of one frame.
struct ForwardPass {
  TileLayout layout;
  std::vector<Gaussian2D> g2ds;
  TileBinning binning;
  SortedTileList sorted;
  RenderRecord record;
};

// Full-frame render; masked Gaussians are excluded. Output is bit-identical
// for any worker thread count.
ForwardPass render_frame(const Scene& scene, const FrameState& frame, const RenderOptions& opts);

}  // namespace rtgs
