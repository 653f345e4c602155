#pragma once

// File formats: 16-bit depth / 8-bit mask PGM with a JSON sidecar per frame,
// binary little-endian PLY point clouds, the fused-volume dump, and JSON
// helpers. Missing or malformed files raise Io / InvalidInput errors naming
// the file.

#include "taskgrasp/psdf.hpp"
#include "taskgrasp/surface.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace taskgrasp::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
nlohmann::json read_json(const fs::path& path);
// Two-space indented, trailing newline.
void write_json(const fs::path& path, const nlohmann::json& j);

struct Pgm {
  int width = 0, height = 0;
  int maxval = 0;
  std::vector<std::uint16_t> data;  // row-major
};
Pgm read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Pgm& img);  // maxval > 255 -> 16-bit big-endian samples

// Frame sidecar: {"depth": file, "mask": file, "pose": [16 row-major
// world<-camera], "intrinsics": {...}}. Depth PGM samples are millimetres.
fusion::DepthFrame read_frame(const fs::path& sidecar);
void write_frame(const fs::path& dir, const std::string& stem, const fusion::DepthFrame& frame,
                 const nlohmann::json& metadata = nlohmann::json::object());

struct PlyCloud {
  surface::SurfaceCloud cloud;
  std::vector<float> score;                        // empty when absent
  std::vector<std::array<std::uint8_t, 3>> color;  // empty when absent
  std::vector<std::string> comments;
};

// x y z nx ny nz c u [score] [red green blue] as float32 (colours uchar).
void write_ply(const fs::path& path, const PlyCloud& ply);
// Reads any binary_little_endian / ascii vertex element with at least x y z;
// missing nx..u default to 0.
PlyCloud read_ply(const fs::path& path);

// "PSDFVOL1", origin, voxel size, dims, truncation, then per voxel mean/var
// (float64) and observed (uint8).
void write_volume(const fs::path& path, const fusion::FusedVolume& vol);
fusion::FusedVolume read_volume(const fs::path& path);

// Resolve p against base unless absolute.
fs::path resolve(const fs::path& base, const fs::path& p);

}  // namespace taskgrasp::io
