// SPDX-License-Identifier: Apache-2.0
#include "rtgs/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace rtgs {

Mat3 reconstruct_covariance(const Gaussian3D& g) {
  Mat3 r = g.rotation.toRotationMatrix();
  Mat3 a = r * g.scale.asDiagonal();
  Mat3 cov = a * a.transpose();
  // enforce exact symmetry against rounding
  return 0.5 * (cov + cov.transpose());
}

bool gaussian_valid(const Gaussian3D& g) {
  if (!g.mean.allFinite() || !g.scale.allFinite() || !g.color.allFinite()) return false;
  if (!(g.scale.minCoeff() > 0.0)) return false;
  if (std::abs(g.rotation.norm() - 1.0) > 1e-6) return false;
  if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) return false;
  if (!(g.color.minCoeff() >= 0.0 && g.color.maxCoeff() <= 1.0)) return false;
  return true;
}

void require_valid(const Gaussian3D& g) {
  if (!gaussian_valid(g)) {
    throw std::invalid_argument("invalid Gaussian3D (id " + std::to_string(g.id) + ")");
  }
}

Quat quat_exp(const Vec3& w) {
  double theta = w.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    q.normalize();
    return q;
  }
  double half = 0.5 * theta;
  double s = std::sin(half) / theta;
  return Quat(std::cos(half), s * w.x(), s * w.y(), s * w.z());
}

Quat perturb_rotation(const Quat& q, const Vec3& w) {
  Quat out = quat_exp(w) * q;
  out.normalize();
  return out;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
      -v.y(), v.x(), 0;
  return m;
}

CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, double sx, double sy) {
  return CameraIntrinsics{k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy};
}

int worker_thread_count(int requested) {
  int n = requested;
  if (n <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : static_cast<int>(hw);
  }
  if (const char* env = std::getenv("RTGS_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, n);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::min(worker_thread_count(threads), n);
  if (n <= 0) return;
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int lo = t * chunk;
    int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn]() {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace rtgs
