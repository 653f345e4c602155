#pragma once

// Frames -> volume -> surface cloud, as one call.

#include "taskgrasp/psdf.hpp"
#include "taskgrasp/surface.hpp"

#include <optional>
#include <span>
#include <vector>

namespace taskgrasp::pipeline {

struct FuseOptions {
  double voxel_size = 3.0;
  std::optional<double> truncation;  // default 4 voxels
  double padding = 3.0;              // voxels beyond the masked bounds (plus truncation)
  double theta_max = sensor::kDefaultGrazingClamp;
  std::size_t target_points = 10000;
  std::size_t variation_k = 16;
  std::uint64_t seed = 0;
};

struct FuseResult {
  fusion::FusedVolume volume;
  surface::SurfaceCloud cloud;
  std::vector<fusion::IntegrationStats> stats;
  std::size_t degenerate_variation = 0;
};

// Errors carry the failing stage in their message.
FuseResult fuse_frames(std::span<const fusion::DepthFrame> frames, const FuseOptions& opts);

}  // namespace taskgrasp::pipeline
