// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rtgs/core.hpp"

#include <string>
#include <vector>

namespace rtgs {

// GSCENE v1: one Gaussian per line,
//   id mx my mz sx sy sz qw qx qy qz o r g b
// preceded by a header line "GSCENE v1 <count>".
// Doubles are printed with %.17g so finite values round-trip bit-exactly.
void write_scene(const Scene& scene, const std::string& path);
Scene read_scene(const std::string& path);

// GFRAME v1: text header "GFRAME v1 <w> <h>\n" followed by raw binary
// RGB rows (3 bytes per pixel) and then depth rows (float32 little-endian).
void write_frame(const ColorImage& color, const DepthImage& depth, const std::string& path);
void read_frame(const std::string& path, ColorImage& color, DepthImage& depth);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  Quat rotation;     // ground-truth world -> camera
  Vec3 translation;
};

// Sequence manifest: header lines carry the shared camera model, then one
// line per frame: "frame <path> qw qx qy qz tx ty tz".
struct SequenceManifest {
  int width = 0;
  int height = 0;
  CameraIntrinsics intrinsics;
  std::vector<ManifestEntry> entries;
};

void write_manifest(const SequenceManifest& m, const std::string& path);
SequenceManifest read_manifest(const std::string& path);

// Loads every frame listed in a manifest (frames are native resolution,
// not keyframe-flagged; the sequence runner decides that).
struct LoadedSequence {
  std::vector<FrameState> frames;
  std::vector<CameraPose> gt_poses;
};
LoadedSequence load_sequence(const std::string& manifest_path);

std::string format_double(double v);  // shortest exact round-trip form

}  // namespace rtgs
