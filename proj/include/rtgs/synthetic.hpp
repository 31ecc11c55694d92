// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rtgs/rasterizer.hpp"
#include "rtgs/io.hpp"

#include <string>

namespace rtgs {

struct GenSceneOptions {
  std::uint64_t seed = 1;
  int count = 500;
  double extent = 1.0;       // box half-width, means in [-extent, extent]^3
  double scale_lo = 0.02;    // log-uniform stddev range
  double scale_hi = 0.12;
  double opacity_lo = 0.3;
  double opacity_hi = 0.99;
  std::int32_t first_id = 0;
};

Scene gen_scene(const GenSceneOptions& opts);

enum class Trajectory { orbit, line };

struct GenSequenceOptions {
  Trajectory trajectory = Trajectory::orbit;
  int frames = 60;
  int width = 128;
  int height = 96;
  double focal = 110.0;
  double orbit_radius = 4.0;
  double orbit_height = 0.15;
  double arc_degrees = 70.0;   // orbit sweep
  Vec3 line_start = Vec3(-0.8, 0.1, -4.0);
  Vec3 line_end = Vec3(0.8, 0.1, -4.0);
  Vec3 look_at = Vec3::Zero();
  double noise_sigma = 0.0;    // Gaussian color noise, pre-quantization
  std::uint64_t noise_seed = 77;
  RenderOptions render;
};

// Camera poses on the requested trajectory, all looking at `look_at`.
std::vector<CameraPose> make_trajectory(const GenSequenceOptions& opts);

// Renders ground-truth color+depth per pose with the rasterizer itself and
// quantizes through the GFRAME encoding so in-memory and on-disk sequences
// are identical.
LoadedSequence render_sequence(const Scene& scene, const GenSequenceOptions& opts);

// Same, but also writes GFRAME files plus the pose manifest under out_dir.
// Returns the manifest path.
std::string gen_sequence(const Scene& scene, const GenSequenceOptions& opts,
                         const std::string& out_dir);

}  // namespace rtgs
