// SPDX-License-Identifier: Apache-2.0
#include "rtgs/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rtgs {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "GSCENE v1 " << scene.size() << "\n";
  for (const auto& g : scene) {
    out << g.id
        << ' ' << format_double(g.mean.x()) << ' ' << format_double(g.mean.y())
        << ' ' << format_double(g.mean.z())
        << ' ' << format_double(g.scale.x()) << ' ' << format_double(g.scale.y())
        << ' ' << format_double(g.scale.z())
        << ' ' << format_double(g.rotation.w()) << ' ' << format_double(g.rotation.x())
        << ' ' << format_double(g.rotation.y()) << ' ' << format_double(g.rotation.z())
        << ' ' << format_double(g.opacity)
        << ' ' << format_double(g.color.x()) << ' ' << format_double(g.color.y())
        << ' ' << format_double(g.color.z()) << "\n";
  }
}

Scene read_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path);
  std::string magic, version;
  size_t count = 0;
  in >> magic >> version >> count;
  if (magic != "GSCENE" || version != "v1") {
    throw std::runtime_error("not a GSCENE v1 file: " + path);
  }
  Scene scene;
  scene.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Gaussian3D g;
    double qw, qx, qy, qz;
    in >> g.id >> g.mean.x() >> g.mean.y() >> g.mean.z()
       >> g.scale.x() >> g.scale.y() >> g.scale.z()
       >> qw >> qx >> qy >> qz >> g.opacity
       >> g.color.x() >> g.color.y() >> g.color.z();
    if (!in) throw std::runtime_error("truncated GSCENE file: " + path);
    g.rotation = Quat(qw, qx, qy, qz);
    scene.push_back(g);
  }
  return scene;
}

void write_frame(const ColorImage& color, const DepthImage& depth, const std::string& path) {
  if (color.width != depth.width || color.height != depth.height) {
    throw std::invalid_argument("color/depth size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "GFRAME v1 " << color.width << " " << color.height << "\n";
  std::vector<unsigned char> row(static_cast<size_t>(color.width) * 3);
  for (int y = 0; y < color.height; ++y) {
    for (int x = 0; x < color.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = color.at(y, x, c);
        v = std::min(1.0, std::max(0.0, v));
        row[static_cast<size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  std::vector<float> drow(static_cast<size_t>(depth.width));
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) drow[static_cast<size_t>(x)] = static_cast<float>(depth.at(y, x));
    out.write(reinterpret_cast<const char*>(drow.data()),
              static_cast<std::streamsize>(drow.size() * sizeof(float)));
  }
}

void read_frame(const std::string& path, ColorImage& color, DepthImage& depth) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open frame file: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  int w = 0, h = 0;
  hs >> magic >> version >> w >> h;
  if (magic != "GFRAME" || version != "v1" || w <= 0 || h <= 0) {
    throw std::runtime_error("not a GFRAME v1 file: " + path);
  }
  color = ColorImage(w, h);
  depth = DepthImage(w, h);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("truncated GFRAME color data: " + path);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        color.at(y, x, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
      }
    }
  }
  std::vector<float> drow(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(drow.data()),
            static_cast<std::streamsize>(drow.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated GFRAME depth data: " + path);
    for (int x = 0; x < w; ++x) depth.at(y, x) = drow[static_cast<size_t>(x)];
  }
}

void write_manifest(const SequenceManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "GSEQ v1\n";
  out << "resolution " << m.width << " " << m.height << "\n";
  out << "intrinsics " << format_double(m.intrinsics.fx) << ' ' << format_double(m.intrinsics.fy)
      << ' ' << format_double(m.intrinsics.cx) << ' ' << format_double(m.intrinsics.cy) << "\n";
  for (const auto& e : m.entries) {
    out << "frame " << e.path
        << ' ' << format_double(e.rotation.w()) << ' ' << format_double(e.rotation.x())
        << ' ' << format_double(e.rotation.y()) << ' ' << format_double(e.rotation.z())
        << ' ' << format_double(e.translation.x()) << ' ' << format_double(e.translation.y())
        << ' ' << format_double(e.translation.z()) << "\n";
  }
}

SequenceManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  SequenceManifest m;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "GSEQ") {
      have_header = true;
    } else if (key == "resolution") {
      ls >> m.width >> m.height;
    } else if (key == "intrinsics") {
      ls >> m.intrinsics.fx >> m.intrinsics.fy >> m.intrinsics.cx >> m.intrinsics.cy;
    } else if (key == "frame") {
      ManifestEntry e;
      double qw, qx, qy, qz;
      ls >> e.path >> qw >> qx >> qy >> qz
         >> e.translation.x() >> e.translation.y() >> e.translation.z();
      if (!ls) throw std::runtime_error("bad manifest frame line: " + line);
      e.rotation = Quat(qw, qx, qy, qz);
      m.entries.push_back(std::move(e));
    } else {
      throw std::runtime_error("unknown manifest key '" + key + "' in " + path);
    }
  }
  if (!have_header) throw std::runtime_error("missing GSEQ header: " + path);
  return m;
}

LoadedSequence load_sequence(const std::string& manifest_path) {
  SequenceManifest m = read_manifest(manifest_path);
  std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  LoadedSequence seq;
  seq.frames.reserve(m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    FrameState f;
    f.frame_index = static_cast<std::int32_t>(i);
    f.width = m.width;
    f.height = m.height;
    read_frame((base / e.path).string(), f.observed_color, f.observed_depth);
    if (f.observed_color.width != m.width || f.observed_color.height != m.height) {
      throw std::runtime_error("frame resolution does not match manifest: " + e.path);
    }
    CameraPose pose;
    pose.rotation = e.rotation.normalized();
    pose.translation = e.translation;
    pose.intrinsics = m.intrinsics;
    f.pose = pose;
    seq.gt_poses.push_back(pose);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace rtgs
