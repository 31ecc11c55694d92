// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rtgs/core.hpp"

#include <optional>
#include <utility>

namespace rtgs {

/// Projected splat. cov2d already includes the low-pass regularization.
struct Gaussian2D {
  std::int32_t source_id = 0;
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  Mat2 inv_cov2d = Mat2::Identity();  // conic
  double depth = 0.0;  // camera-space z
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
};

struct ProjectOptions {
  double near_plane = 0.01;
  double cov_reg = 0.3;  // px^2 added to both cov2d diagonal entries
};

// Returns nullopt when the Gaussian is culled (behind the near plane).
// Non-finite inputs are a contract violation and throw.
std::optional<Gaussian2D> project_gaussian(const Gaussian3D& g, const CameraPose& pose,
                                           const ProjectOptions& opts = {});

// Tiles overlapped by the axis-aligned 3-sigma box of the splat; the box
// radius uses the larger eigenvalue of cov2d on both axes.
std::vector<int> intersect_tiles(const Gaussian2D& g2d, const TileLayout& layout);

double splat_radius(const Gaussian2D& g2d);  // 3 * sqrt(lambda_max)

struct TileBinning {
  std::vector<std::vector<std::int32_t>> tile_gaussians;  // g2d indices per tile
  std::vector<std::vector<std::int32_t>> gaussian_tiles;  // tile ids per g2d index
  std::size_t total_intersections = 0;
  // (source id, tile id) pairs, sorted; used by the intersection change ratio
  std::vector<std::pair<std::int32_t, std::int32_t>> id_tile_pairs;
};

TileBinning build_binning(const std::vector<Gaussian2D>& g2ds, const TileLayout& layout);

// |symmetric difference of pair sets| / max(1, |prev pair set|). Can exceed
// 1 when prev is empty; callers mask the warm-up window.
double intersection_change_ratio(const TileBinning& prev, const TileBinning& curr);

}  // namespace rtgs
