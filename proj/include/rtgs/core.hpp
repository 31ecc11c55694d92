// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Trainable scene primitive. Covariance is kept factored as
/// scale (per-axis stddev) + rotation so that the reconstructed
/// matrix is SPD by construction.
struct Gaussian3D {
  std::int32_t id = 0;
  Vec3 mean = Vec3::Zero();
  Vec3 scale = Vec3::Ones();  // strictly positive
  Quat rotation = Quat::Identity();
  double opacity = 1.0;  // [0,1]
  Vec3 color = Vec3::Zero();  // [0,1] per channel
  bool masked = false;
  std::int32_t mask_age = 0;
};

using Scene = std::vector<Gaussian3D>;

// Sigma = R S S^T R^T
Mat3 reconstruct_covariance(const Gaussian3D& g);

bool gaussian_valid(const Gaussian3D& g);
void require_valid(const Gaussian3D& g);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// World-to-camera transform plus pinhole intrinsics. The intrinsics
/// are always expressed at the resolution of the frame they belong to.
struct CameraPose {
  Quat rotation = Quat::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();
  CameraIntrinsics intrinsics;

  Vec3 to_camera(const Vec3& p_world) const {
    return rotation * p_world + translation;
  }
  Vec3 camera_center() const {  // camera position in world coordinates
    return rotation.conjugate() * (-translation);
  }
};

// so(3) exponential: rotation vector -> unit quaternion.
Quat quat_exp(const Vec3& w);
// Left-perturb a pose rotation: R <- Exp(w) * R, renormalized.
Quat perturb_rotation(const Quat& q, const Vec3& w);
// [v]x cross-product matrix.
Mat3 skew(const Vec3& v);

// Scale intrinsics for a per-axis downsampling divisor.
CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, double sx, double sy);

struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // h * w * 3, row-major

  ColorImage() = default;
  ColorImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}
  double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  Vec3 pixel(int y, int x) const {
    const double* p = &data[(static_cast<size_t>(y) * width + x) * 3];
    return Vec3(p[0], p[1], p[2]);
  }
  void set_pixel(int y, int x, const Vec3& v) {
    double* p = &data[(static_cast<size_t>(y) * width + x) * 3];
    p[0] = v[0]; p[1] = v[1]; p[2] = v[2];
  }
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // h * w, 0 = invalid

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, 0.0) {}
  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

struct FrameState {
  std::int32_t frame_index = 0;
  bool is_keyframe = false;
  int width = 0;   // R_n
  int height = 0;
  ColorImage observed_color;
  DepthImage observed_depth;
  CameraPose pose;  // intrinsics at (width, height)
  std::int32_t last_keyframe_index = 0;
};

/// 16x16-pixel tiles subdivided into 4x4-pixel subtiles.
struct TileLayout {
  static constexpr int kTileSize = 16;
  static constexpr int kSubtileSize = 4;
  static constexpr int kSubtilesPerTile = 16;   // 4x4 grid of subtiles
  static constexpr int kPixelsPerSubtile = 16;  // 4x4 pixels

  int width = 0;
  int height = 0;
  int tiles_x = 0;
  int tiles_y = 0;

  TileLayout() = default;
  TileLayout(int w, int h)
      : width(w), height(h),
        tiles_x((w + kTileSize - 1) / kTileSize),
        tiles_y((h + kTileSize - 1) / kTileSize) {}

  int tile_count() const { return tiles_x * tiles_y; }
  int subtile_count() const { return tile_count() * kSubtilesPerTile; }
  int tile_of(int x, int y) const { return (y / kTileSize) * tiles_x + (x / kTileSize); }
  int subtile_of(int x, int y) const {
    int tile = tile_of(x, y);
    int lx = (x % kTileSize) / kSubtileSize;
    int ly = (y % kTileSize) / kSubtileSize;
    return tile * kSubtilesPerTile + ly * 4 + lx;
  }
  // local pixel index 0..15 inside the subtile, row-major
  int subtile_pixel_of(int x, int y) const {
    return (y % kSubtileSize) * kSubtileSize + (x % kSubtileSize);
  }
};

/// Deterministic, platform-independent RNG (splitmix64 core).
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() {  // [0,1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {  // Box-Muller
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  Quat unit_quaternion() {
    Quat q(normal(), normal(), normal(), normal());
    q.normalize();
    return q;
  }
};

// Worker count: RTGS_THREADS bounds it, default hardware concurrency.
int worker_thread_count(int requested = 0);

// Runs fn(i) for i in [0, n); results must not depend on the partition.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace rtgs
