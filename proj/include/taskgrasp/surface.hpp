#pragma once

#include "taskgrasp/geometry.hpp"
#include "taskgrasp/psdf.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace taskgrasp::surface {

struct SurfacePoint {
  Vec3 position;   // mm
  Vec3 normal;     // unit, outward
  double c = 0.0;  // std. dev. of the surface location, mm
  double u = 0.0;  // surface variation in [0, 1/3]
};

struct SurfaceCloud {
  std::vector<SurfacePoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::vector<Vec3> positions() const;
};

// Column arrays of a cloud's positions for the SIMD kernels.
struct CloudColumns {
  std::vector<double> x, y, z;
  explicit CloudColumns(const SurfaceCloud& cloud);
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<double> vertex_sigma;  // interpolated std. dev.
  std::vector<std::array<std::uint32_t, 3>> triangles;

  double area() const;
  Vec3 face_normal(std::size_t t) const;  // unit, outward
};

// Zero isosurface of the mean distance over cells whose eight corners are
// all observed. Triangles wind so their normals face free space.
Mesh marching_cubes(const fusion::FusedVolume& volume);

struct ExtractParams {
  std::size_t target_point_count = 10000;
  std::uint64_t seed = 0;
};

// Marching cubes, then uniform resampling of the triangulated surface to
// exactly target_point_count points by Poisson-disk-style rejection. Only
// frozen volumes are accepted. Throws EmptySurface when there is no zero
// crossing.
SurfaceCloud extract_surface(const fusion::FusedVolume& volume, const ExtractParams& params);

// Same resampling applied to an arbitrary mesh.
SurfaceCloud resample_mesh(const Mesh& mesh, const ExtractParams& params);

struct VariationResult {
  std::vector<double> u;
  std::size_t degenerate = 0;  // coincident neighbourhoods, u pinned to 0
};

// u = l0 / (l0 + l1 + l2) of the covariance of each point's k nearest
// neighbours (the point itself included).
VariationResult surface_variation(std::span<const Vec3> points, std::size_t k = 16);

// Fills cloud.points[i].u.
VariationResult annotate_surface_variation(SurfaceCloud& cloud, std::size_t k = 16);

}  // namespace taskgrasp::surface
