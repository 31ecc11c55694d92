// SPDX-License-Identifier: Apache-2.0
#include "rtgs/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace rtgs {

SortedTileList sort_tile_fragments(const TileBinning& binning,
                                   const std::vector<Gaussian2D>& g2ds) {
  SortedTileList out;
  out.tiles.resize(binning.tile_gaussians.size());
  for (size_t t = 0; t < binning.tile_gaussians.size(); ++t) {
    auto list = binning.tile_gaussians[t];
    std::sort(list.begin(), list.end(), [&](std::int32_t a, std::int32_t b) {
      if (g2ds[a].depth != g2ds[b].depth) return g2ds[a].depth < g2ds[b].depth;
      return g2ds[a].source_id < g2ds[b].source_id;
    });
    out.tiles[t] = std::move(list);
  }
  return out;
}

double compute_alpha(const Gaussian2D& g2d, const Vec2& pixel, double clamp) {
  const Vec2 d = pixel - g2d.mean2d;
  const double e = -0.5 * d.dot(g2d.inv_cov2d * d);
  if (e > 0.0) return std::min(g2d.opacity, clamp);  // numerical guard, conic is SPD
  return std::min(g2d.opacity * std::exp(e), clamp);
}

PixelResult render_pixel(const Vec2& pixel, const std::vector<std::int32_t>& order,
                         const std::vector<Gaussian2D>& g2ds, const RenderOptions& opts) {
  PixelResult res;
  double t = 1.0;
  double depth_acc = 0.0;
  for (std::int32_t idx : order) {
    const Gaussian2D& g = g2ds[static_cast<size_t>(idx)];
    const double alpha = compute_alpha(g, pixel, opts.alpha_clamp);
    if (alpha <= opts.alpha_min) continue;
    FragContrib fc;
    fc.g2d = idx;
    fc.alpha = alpha;
    fc.transmittance = t;
    fc.chat = t * alpha * g.color;
    res.color += fc.chat;
    depth_acc += t * alpha * g.depth;
    res.log.frags.push_back(fc);
    t *= 1.0 - alpha;
    if (opts.early_termination && t < opts.t_term) break;
  }
  res.log.t_final = t;
  res.color += opts.background * t;
  const double w = 1.0 - t;
  res.depth = w > 1e-6 ? depth_acc / w : 0.0;
  return res;
}

ForwardPass render_frame(const Scene& scene, const FrameState& frame, const RenderOptions& opts) {
  ForwardPass fp;
  fp.layout = TileLayout(frame.width, frame.height);

  const ProjectOptions popts = opts.projection();
  fp.g2ds.reserve(scene.size());
  for (const auto& g : scene) {
    if (g.masked) continue;
    if (auto g2d = project_gaussian(g, frame.pose, popts)) fp.g2ds.push_back(*g2d);
  }
  fp.binning = build_binning(fp.g2ds, fp.layout);
  fp.sorted = sort_tile_fragments(fp.binning, fp.g2ds);

  RenderRecord& rec = fp.record;
  rec.width = frame.width;
  rec.height = frame.height;
  rec.color = ColorImage(frame.width, frame.height);
  rec.depth = DepthImage(frame.width, frame.height);
  rec.pixels.resize(static_cast<size_t>(frame.width) * frame.height);
  rec.background = opts.background;

  const int ts = TileLayout::kTileSize;
  parallel_for(fp.layout.tile_count(), opts.threads, [&](int tile) {
    const auto& order = fp.sorted.tiles[static_cast<size_t>(tile)];
    const int tx = tile % fp.layout.tiles_x;
    const int ty = tile / fp.layout.tiles_x;
    const int x1 = std::min(frame.width, (tx + 1) * ts);
    const int y1 = std::min(frame.height, (ty + 1) * ts);
    for (int y = ty * ts; y < y1; ++y) {
      for (int x = tx * ts; x < x1; ++x) {
        PixelResult pr = render_pixel(Vec2(x + 0.5, y + 0.5), order, fp.g2ds, opts);
        rec.color.set_pixel(y, x, pr.color);
        rec.depth.at(y, x) = pr.depth;
        rec.pixels[static_cast<size_t>(y) * frame.width + x] = std::move(pr.log);
      }
    }
  });
  return fp;
}

}  // namespace rtgs
