// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rtgs/core.hpp"
#include "rtgs/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

using namespace rtgs;

TEST_SUITE_BEGIN("core");

TEST_CASE("covariance: identity quaternion, unit scale") {
  Gaussian3D g;
  CHECK((reconstruct_covariance(g) - Mat3::Identity()).norm() == doctest::Approx(0.0));
}

TEST_CASE("covariance: axis-aligned scale") {
  Gaussian3D g;
  g.scale = Vec3(2, 1, 1);
  Mat3 cov = reconstruct_covariance(g);
  Mat3 want = Vec3(4, 1, 1).asDiagonal();
  CHECK((cov - want).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("covariance: eigenvalues equal squared scales") {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    Gaussian3D g;
    g.rotation = rng.unit_quaternion();
    g.scale = Vec3(rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0));
    Mat3 cov = reconstruct_covariance(g);

    CHECK((cov - cov.transpose()).norm() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 want = g.scale.cwiseProduct(g.scale);
    std::sort(want.data(), want.data() + 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(es.eigenvalues()[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
    CHECK(es.eigenvalues().minCoeff() >= g.scale.minCoeff() * g.scale.minCoeff() - 1e-9);
  }
}

TEST_CASE("covariance: invariant under quaternion sign flip") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Gaussian3D g;
    g.rotation = rng.unit_quaternion();
    g.scale = Vec3(rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0));
    Mat3 a = reconstruct_covariance(g);
    g.rotation.coeffs() = -g.rotation.coeffs();
    Mat3 b = reconstruct_covariance(g);
    CHECK((a - b).norm() <= 1e-14);
  }
}

TEST_CASE("quat_exp matches rotation by angle about axis") {
  Vec3 w(0.0, 0.0, M_PI / 2.0);
  Quat q = quat_exp(w);
  Vec3 v = q * Vec3(1, 0, 0);
  CHECK(v.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.y() == doctest::Approx(1.0));
}

TEST_CASE("scene file round-trips bit-exactly") {
  Rng rng(7);
  Scene scene;
  for (int i = 0; i < 60; ++i) {
    Gaussian3D g;
    g.id = i * 3 + 1;
    g.mean = Vec3(rng.normal(), rng.normal() * 1e-7, rng.normal() * 1e5);
    g.scale = Vec3(rng.uniform(1e-6, 1.0), rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0));
    g.rotation = rng.unit_quaternion();
    g.opacity = rng.uniform();
    g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    scene.push_back(g);
  }
  const std::string path = "roundtrip_scene.gscene";
  write_scene(scene, path);
  Scene back = read_scene(path);
  REQUIRE(back.size() == scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    CHECK(back[i].id == scene[i].id);
    CHECK(back[i].mean == scene[i].mean);
    CHECK(back[i].scale == scene[i].scale);
    CHECK(back[i].rotation.coeffs() == scene[i].rotation.coeffs());
    CHECK(back[i].opacity == scene[i].opacity);
    CHECK(back[i].color == scene[i].color);
  }
  std::filesystem::remove(path);
}

TEST_CASE("frame file round-trips quantized color and exact float depth") {
  Rng rng(9);
  ColorImage color(20, 12);
  DepthImage depth(20, 12);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 20; ++x) {
      for (int c = 0; c < 3; ++c) color.at(y, x, c) = rng.uniform();
      depth.at(y, x) = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.5, 8.0);
    }
  }
  const std::string path = "roundtrip_frame.gframe";
  write_frame(color, depth, path);
  ColorImage c2;
  DepthImage d2;
  read_frame(path, c2, d2);
  REQUIRE(c2.width == 20);
  REQUIRE(c2.height == 12);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 20; ++x) {
      for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(c2.at(y, x, c) - color.at(y, x, c)) <= 0.5 / 255.0 + 1e-12);
      }
      CHECK(d2.at(y, x) == doctest::Approx(static_cast<float>(depth.at(y, x))));
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("tile layout: every pixel maps to one tile and one subtile") {
  TileLayout layout(40, 24);
  CHECK(layout.tiles_x == 3);
  CHECK(layout.tiles_y == 2);
  CHECK(layout.subtile_count() == layout.tile_count() * 16);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 40; ++x) {
      int tile = layout.tile_of(x, y);
      int sub = layout.subtile_of(x, y);
      CHECK(tile >= 0);
      CHECK(tile < layout.tile_count());
      CHECK(sub / TileLayout::kSubtilesPerTile == tile);
      int lp = layout.subtile_pixel_of(x, y);
      CHECK(lp >= 0);
      CHECK(lp < 16);
    }
  }
}

TEST_SUITE_END();
