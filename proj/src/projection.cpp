// SPDX-License-Identifier: Apache-2.0
#include "rtgs/projection.hpp"

#include <algorithm>
#include <cmath>

namespace rtgs {

std::optional<Gaussian2D> project_gaussian(const Gaussian3D& g, const CameraPose& pose,
                                           const ProjectOptions& opts) {
  if (!g.mean.allFinite() || !g.scale.allFinite() || !std::isfinite(g.opacity)) {
    throw std::invalid_argument("non-finite Gaussian3D in projection");
  }
  const Mat3 w = pose.rotation.toRotationMatrix();
  const Vec3 t = w * g.mean + pose.translation;
  if (t.z() <= opts.near_plane) return std::nullopt;

  const auto& k = pose.intrinsics;
  const double inv_z = 1.0 / t.z();

  Gaussian2D out;
  out.source_id = g.id;
  out.mean2d = Vec2(k.fx * t.x() * inv_z + k.cx, k.fy * t.y() * inv_z + k.cy);
  out.depth = t.z();
  out.color = g.color;
  out.opacity = g.opacity;

  // first-order EWA: cov2d = J W Sigma W^T J^T
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx * inv_z, 0.0, -k.fx * t.x() * inv_z * inv_z,
       0.0, k.fy * inv_z, -k.fy * t.y() * inv_z * inv_z;
  const Mat3 sigma = reconstruct_covariance(g);
  Mat2 cov = j * w * sigma * w.transpose() * j.transpose();
  cov(0, 0) += opts.cov_reg;
  cov(1, 1) += opts.cov_reg;
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  out.cov2d = cov;

  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  Mat2 inv;
  inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
  out.inv_cov2d = inv / det;
  return out;
}

double splat_radius(const Gaussian2D& g2d) {
  const Mat2& c = g2d.cov2d;
  const double mid = 0.5 * (c(0, 0) + c(1, 1));
  const double disc = std::sqrt(std::max(0.0, mid * mid - (c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0))));
  return 3.0 * std::sqrt(std::max(0.0, mid + disc));
}

std::vector<int> intersect_tiles(const Gaussian2D& g2d, const TileLayout& layout) {
  const double r = splat_radius(g2d);
  const double x0 = g2d.mean2d.x() - r;
  const double x1 = g2d.mean2d.x() + r;
  const double y0 = g2d.mean2d.y() - r;
  const double y1 = g2d.mean2d.y() + r;
  if (x1 < 0.0 || y1 < 0.0 || x0 >= layout.width || y0 >= layout.height) return {};

  const int ts = TileLayout::kTileSize;
  int tx0 = std::max(0, static_cast<int>(std::floor(x0 / ts)));
  int ty0 = std::max(0, static_cast<int>(std::floor(y0 / ts)));
  int tx1 = std::min(layout.tiles_x - 1, static_cast<int>(std::floor(x1 / ts)));
  int ty1 = std::min(layout.tiles_y - 1, static_cast<int>(std::floor(y1 / ts)));

  std::vector<int> tiles;
  tiles.reserve(static_cast<size_t>(tx1 - tx0 + 1) * (ty1 - ty0 + 1));
  for (int ty = ty0; ty <= ty1; ++ty) {
    for (int tx = tx0; tx <= tx1; ++tx) tiles.push_back(ty * layout.tiles_x + tx);
  }
  return tiles;
}

TileBinning build_binning(const std::vector<Gaussian2D>& g2ds, const TileLayout& layout) {
  TileBinning b;
  b.tile_gaussians.assign(static_cast<size_t>(layout.tile_count()), {});
  b.gaussian_tiles.reserve(g2ds.size());
  for (size_t i = 0; i < g2ds.size(); ++i) {
    std::vector<int> tiles = intersect_tiles(g2ds[i], layout);
    std::vector<std::int32_t> tids(tiles.begin(), tiles.end());
    for (int t : tiles) {
      b.tile_gaussians[static_cast<size_t>(t)].push_back(static_cast<std::int32_t>(i));
      b.id_tile_pairs.emplace_back(g2ds[i].source_id, t);
    }
    b.total_intersections += tiles.size();
    b.gaussian_tiles.push_back(std::move(tids));
  }
  std::sort(b.id_tile_pairs.begin(), b.id_tile_pairs.end());
  return b;
}

double intersection_change_ratio(const TileBinning& prev, const TileBinning& curr) {
  size_t i = 0, j = 0, sym = 0;
  const auto& a = prev.id_tile_pairs;
  const auto& b = curr.id_tile_pairs;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++i; ++j;
    } else if (a[i] < b[j]) {
      ++sym; ++i;
    } else {
      ++sym; ++j;
    }
  }
  sym += (a.size() - i) + (b.size() - j);
  return static_cast<double>(sym) / static_cast<double>(std::max<size_t>(1, a.size()));
}

}  // namespace rtgs
