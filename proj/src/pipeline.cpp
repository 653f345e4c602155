#include "taskgrasp/pipeline.hpp"

#include "taskgrasp/error.hpp"

#include <string>

namespace taskgrasp::pipeline {

FuseResult fuse_frames(std::span<const fusion::DepthFrame> frames, const FuseOptions& opts) {
  if (frames.empty()) fail(ErrorKind::InvalidInput, "fuse: no frames");
  const double tau = opts.truncation.value_or(4.0 * opts.voxel_size);
  const auto bounds = fusion::masked_bounds(frames);
  if (!bounds) fail(ErrorKind::EmptySurface, "fuse: no masked depth pixels in any frame");
  const Vec3 pad = Vec3::Constant(opts.padding * opts.voxel_size + tau);
  FuseResult r{fusion::FusedVolume::covering(bounds->first - pad, bounds->second + pad, opts.voxel_size, tau),
               {}, {}, 0};

  fusion::FusionParams params;
  params.theta_max = opts.theta_max;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    try {
      r.stats.push_back(fusion::integrate(r.volume, frames[i], params));
    } catch (const Error& e) {
      throw Error(e.kind(), "integrate frame " + std::to_string(i) + ": " + e.what());
    }
  }
  r.volume.freeze();
  try {
    r.cloud = surface::extract_surface(r.volume, {opts.target_points, opts.seed});
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("extract: ") + e.what());
  }
  r.degenerate_variation = surface::annotate_surface_variation(r.cloud, opts.variation_k).degenerate;
  return r;
}

}  // namespace taskgrasp::pipeline
