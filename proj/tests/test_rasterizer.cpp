// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rtgs/rasterizer.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <cstdlib>

using namespace rtgs;

namespace {

Gaussian2D random_g2d(Rng& rng, double cx, double cy, double spread) {
  Gaussian2D g;
  g.source_id = static_cast<std::int32_t>(rng.next_u64() % 100000);
  g.mean2d = Vec2(cx + rng.uniform(-spread, spread), cy + rng.uniform(-spread, spread));
  const double a = rng.uniform(0.4, 9.0);
  const double b = rng.uniform(0.4, 9.0);
  const double c = rng.uniform(-0.8, 0.8) * std::sqrt(a * b);
  g.cov2d << a, c, c, b;
  g.inv_cov2d = g.cov2d.inverse();
  g.depth = rng.uniform(0.5, 10.0);
  g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
  g.opacity = rng.uniform(0.05, 0.99);
  return g;
}

// independent compositing loop (recomputes the exponent from raw math)
Vec3 oracle_composite(const Vec2& pixel, const std::vector<std::int32_t>& order,
                      const std::vector<Gaussian2D>& g2ds, const RenderOptions& opts) {
  double t = 1.0;
  Vec3 color = Vec3::Zero();
  for (std::int32_t idx : order) {
    const Gaussian2D& g = g2ds[static_cast<size_t>(idx)];
    const double dx = pixel.x() - g.mean2d.x();
    const double dy = pixel.y() - g.mean2d.y();
    const double q = g.inv_cov2d(0, 0) * dx * dx + 2.0 * g.inv_cov2d(0, 1) * dx * dy +
                     g.inv_cov2d(1, 1) * dy * dy;
    double alpha = std::min(g.opacity * std::exp(-0.5 * q), opts.alpha_clamp);
    if (alpha <= opts.alpha_min) continue;
    color += t * alpha * g.color;
    t *= 1.0 - alpha;
    if (opts.early_termination && t < opts.t_term) break;
  }
  return color + opts.background * t;
}

}  // namespace

TEST_SUITE_BEGIN("rasterizer");

TEST_CASE("tile sort: depth order with id tie-break") {
  std::vector<Gaussian2D> g2ds(3);
  g2ds[0].depth = 3;  g2ds[0].source_id = 10;
  g2ds[1].depth = 1;  g2ds[1].source_id = 11;
  g2ds[2].depth = 2;  g2ds[2].source_id = 12;
  TileBinning b;
  b.tile_gaussians = {{0, 1, 2}};
  auto sorted = sort_tile_fragments(b, g2ds);
  CHECK(sorted.tiles[0] == std::vector<std::int32_t>({1, 2, 0}));

  g2ds[0].depth = g2ds[1].depth = 5;
  g2ds[0].source_id = 9;
  g2ds[1].source_id = 2;
  b.tile_gaussians = {{0, 1}};
  sorted = sort_tile_fragments(b, g2ds);
  CHECK(sorted.tiles[0] == std::vector<std::int32_t>({1, 0}));
}

TEST_CASE("tile sort: random tile matches a reference sort") {
  Rng rng(3);
  std::vector<Gaussian2D> g2ds;
  for (int i = 0; i < 200; ++i) g2ds.push_back(random_g2d(rng, 8, 8, 8));
  // force some depth ties
  for (int i = 0; i < 40; ++i) g2ds[static_cast<size_t>(i) * 2].depth = 4.0;
  TileBinning b;
  b.tile_gaussians.resize(1);
  for (int i = 0; i < 200; ++i) b.tile_gaussians[0].push_back(i);
  auto sorted = sort_tile_fragments(b, g2ds);

  auto ref = b.tile_gaussians[0];
  std::stable_sort(ref.begin(), ref.end(), [&](std::int32_t a, std::int32_t c) {
    return std::make_pair(g2ds[a].depth, g2ds[a].source_id) <
           std::make_pair(g2ds[c].depth, g2ds[c].source_id);
  });
  CHECK(sorted.tiles[0] == ref);
}

TEST_CASE("alpha at the splat center equals opacity") {
  Gaussian2D g;
  g.mean2d = Vec2(4, 4);
  g.inv_cov2d = Mat2::Identity();
  g.opacity = 0.62;
  CHECK(compute_alpha(g, Vec2(4, 4)) == doctest::Approx(0.62));
  g.opacity = 0.0;
  CHECK(compute_alpha(g, Vec2(9, 1)) == 0.0);
  g.opacity = 1.0;
  CHECK(compute_alpha(g, Vec2(5, 4)) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("render_pixel: no fragments yields background") {
  RenderOptions opts;
  opts.background = Vec3(0.2, 0.4, 0.6);
  auto res = render_pixel(Vec2(0.5, 0.5), {}, {}, opts);
  CHECK(res.color == opts.background);
  CHECK(res.depth == 0.0);
  CHECK(res.log.frags.empty());
  CHECK(res.log.t_final == 1.0);
}

TEST_CASE("render_pixel: one near-opaque fragment at its center") {
  Gaussian2D g;
  g.mean2d = Vec2(3.5, 3.5);
  g.inv_cov2d = Mat2::Identity();
  g.opacity = 0.999;
  g.color = Vec3(1.0, 0.5, 0.25);
  g.depth = 2.0;
  RenderOptions opts;
  opts.background = Vec3(1, 1, 1);
  auto res = render_pixel(Vec2(3.5, 3.5), {0}, {g}, opts);
  for (int c = 0; c < 3; ++c) {
    CHECK(res.color[c] == doctest::Approx(0.999 * g.color[c] + 0.001 * 1.0).epsilon(1e-9));
  }
  CHECK(res.depth == doctest::Approx(2.0));
}

TEST_CASE("render_pixel: random fragment lists match the brute-force oracle") {
  Rng rng(77);
  RenderOptions opts;
  opts.background = Vec3(0.3, 0.1, 0.9);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(1, 50);
    std::vector<Gaussian2D> g2ds;
    std::vector<std::int32_t> order;
    for (int i = 0; i < n; ++i) {
      g2ds.push_back(random_g2d(rng, 8, 8, 6));
      order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return g2ds[static_cast<size_t>(a)].depth < g2ds[static_cast<size_t>(b)].depth;
    });
    const Vec2 pixel(rng.uniform(0, 16), rng.uniform(0, 16));
    auto res = render_pixel(pixel, order, g2ds, opts);
    const Vec3 want = oracle_composite(pixel, order, g2ds, opts);
    for (int c = 0; c < 3; ++c) CHECK(res.color[c] == doctest::Approx(want[c]).epsilon(1e-6));
  }
}

TEST_CASE("render_pixel: log reconstructs the pixel color and T decreases") {
  Rng rng(78);
  RenderOptions opts;
  opts.background = Vec3(0.25, 0.25, 0.25);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Gaussian2D> g2ds;
    std::vector<std::int32_t> order;
    for (int i = 0; i < 30; ++i) {
      g2ds.push_back(random_g2d(rng, 8, 8, 5));
      order.push_back(i);
    }
    const Vec2 pixel(8, 8);
    auto res = render_pixel(pixel, order, g2ds, opts);
    Vec3 sum = opts.background * res.log.t_final;
    double prev_t = std::numeric_limits<double>::infinity();
    for (const auto& fc : res.log.frags) {
      sum += fc.chat;
      CHECK(fc.alpha > opts.alpha_min);
      CHECK(fc.alpha <= opts.alpha_clamp);
      CHECK(fc.transmittance < prev_t);
      CHECK(fc.transmittance > 0.0);
      prev_t = fc.transmittance;
    }
    for (int c = 0; c < 3; ++c) CHECK(sum[c] == doctest::Approx(res.color[c]).epsilon(1e-6));
  }
}

TEST_CASE("early termination changes a pixel by at most t_term") {
  Rng rng(79);
  RenderOptions on, off;
  on.background = off.background = Vec3(0.9, 0.9, 0.9);
  off.early_termination = false;
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<Gaussian2D> g2ds;
    std::vector<std::int32_t> order;
    for (int i = 0; i < 80; ++i) {
      Gaussian2D g = random_g2d(rng, 8, 8, 2);
      g.opacity = rng.uniform(0.5, 0.99);  // force deep occlusion
      g2ds.push_back(g);
      order.push_back(i);
    }
    auto a = render_pixel(Vec2(8, 8), order, g2ds, on);
    auto b = render_pixel(Vec2(8, 8), order, g2ds, off);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(a.color[c] - b.color[c]) <= on.t_term);
  }
}

TEST_CASE("render_frame: empty scene gives a uniform background image") {
  FrameState frame;
  frame.width = 48;
  frame.height = 32;
  frame.pose = testutil::test_camera(48, 32);
  RenderOptions opts;
  opts.background = Vec3(0.1, 0.2, 0.3);
  auto fp = render_frame({}, frame, opts);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      CHECK(fp.record.color.pixel(y, x) == opts.background);
      CHECK(fp.record.depth.at(y, x) == 0.0);
    }
  }
}

TEST_CASE("render_frame: brightest pixel sits at the projected mean") {
  Gaussian3D g;
  g.mean = Vec3(0.3, -0.2, 4.0);
  g.scale = Vec3(0.15, 0.15, 0.15);
  g.opacity = 0.95;
  g.color = Vec3(1, 1, 1);
  FrameState frame;
  frame.width = 64;
  frame.height = 64;
  frame.pose = testutil::test_camera(64, 64, 50.0);
  RenderOptions opts;
  auto fp = render_frame({g}, frame, opts);
  REQUIRE(fp.g2ds.size() == 1);

  double best = -1;
  int bx = -1, by = -1;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const double v = fp.record.color.at(y, x, 0);
      if (v > best) { best = v; bx = x; by = y; }
    }
  }
  CHECK(std::abs(bx + 0.5 - fp.g2ds[0].mean2d.x()) <= 0.5);
  CHECK(std::abs(by + 0.5 - fp.g2ds[0].mean2d.y()) <= 0.5);
}

TEST_CASE("downsampled render equals rendering with scaled intrinsics") {
  Rng rng(21);
  Scene scene = testutil::random_scene(rng, 25);
  RenderOptions opts;
  opts.background = Vec3(0.2, 0.2, 0.2);

  FrameState low;
  low.width = 32;
  low.height = 24;
  low.pose = testutil::test_camera(64, 48, 40.0);
  low.pose.intrinsics = scale_intrinsics(low.pose.intrinsics, 0.5, 0.5);
  auto a = render_frame(scene, low, opts);

  FrameState manual;
  manual.width = 32;
  manual.height = 24;
  manual.pose.intrinsics = CameraIntrinsics{20.0, 20.0, 16.0, 12.0};
  auto b = render_frame(scene, manual, opts);
  CHECK(a.record.color.data == b.record.color.data);
  CHECK(a.record.depth.data == b.record.depth.data);
}

TEST_CASE("masking a Gaussian renders identically to deleting it") {
  Rng rng(22);
  Scene scene = testutil::random_scene(rng, 20);
  FrameState frame;
  frame.width = 64;
  frame.height = 48;
  frame.pose = testutil::test_camera(64, 48);
  RenderOptions opts;

  Scene masked = scene;
  masked[7].masked = true;
  masked[13].masked = true;
  Scene erased;
  for (size_t i = 0; i < scene.size(); ++i) {
    if (i != 7 && i != 13) erased.push_back(scene[i]);
  }
  auto a = render_frame(masked, frame, opts);
  auto b = render_frame(erased, frame, opts);
  CHECK(a.record.color.data == b.record.color.data);
  CHECK(a.record.depth.data == b.record.depth.data);
}

TEST_CASE("render_frame output is bit-identical across thread counts") {
  Rng rng(23);
  Scene scene = testutil::random_scene(rng, 40);
  FrameState frame;
  frame.width = 96;
  frame.height = 64;
  frame.pose = testutil::test_camera(96, 64);
  RenderOptions opts;
  opts.threads = 1;
  auto a = render_frame(scene, frame, opts);
  opts.threads = 5;
  auto b = render_frame(scene, frame, opts);
  CHECK(a.record.color.data == b.record.color.data);
  CHECK(a.record.depth.data == b.record.depth.data);
  REQUIRE(a.record.pixels.size() == b.record.pixels.size());
  for (size_t i = 0; i < a.record.pixels.size(); ++i) {
    CHECK(a.record.pixels[i].t_final == b.record.pixels[i].t_final);
    CHECK(a.record.pixels[i].frags.size() == b.record.pixels[i].frags.size());
  }
}

TEST_SUITE_END();
