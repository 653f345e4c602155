#include "taskgrasp/geometry.hpp"

#include "taskgrasp/error.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace taskgrasp {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidIntrinsics: return "invalid-intrinsics";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::InvalidPose: return "invalid-pose";
    case ErrorKind::InvalidContact: return "invalid-contact";
    case ErrorKind::InvalidScore: return "invalid-score";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::UndefinedDirection: return "undefined-direction";
    case ErrorKind::FrameUndefined: return "frame-undefined";
    case ErrorKind::EmptySurface: return "empty-surface";
    case ErrorKind::UnsupportedShape: return "unsupported-shape";
    case ErrorKind::NoGraspFound: return "no-grasp-found";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numerical: return "numerical";
  }
  return "unknown";
}

bool is_rigid(const Eigen::Matrix4d& m, double tol) {
  if (!m.allFinite()) return false;
  if (std::abs(m(3, 0)) > tol || std::abs(m(3, 1)) > tol || std::abs(m(3, 2)) > tol ||
      std::abs(m(3, 3) - 1.0) > tol)
    return false;
  const Mat3 r = m.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

std::array<double, 16> to_row_major(const Pose& p) {
  std::array<double, 16> out{};
  const Eigen::Matrix4d& m = p.matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = m(r, c);
  return out;
}

Eigen::Matrix4d matrix_from_row_major(std::span<const double> v) {
  if (v.size() != 16) fail(ErrorKind::InvalidInput, "pose must have 16 entries");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
  return m;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Vec3 any_orthogonal(const Vec3& v) {
  const Vec3 a = v.normalized();
  const Vec3 ref = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return a.cross(ref).normalized();
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

std::size_t SpatialGrid::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = static_cast<std::uint64_t>(k[0]) * 73856093ULL;
  h ^= static_cast<std::uint64_t>(k[1]) * 19349663ULL;
  h ^= static_cast<std::uint64_t>(k[2]) * 83492791ULL;
  return static_cast<std::size_t>(h);
}

SpatialGrid::SpatialGrid(std::span<const Vec3> points, double cell_size)
    : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) fail(ErrorKind::InvalidInput, "grid cell size must be positive");
  bool first = true;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Key k = key_of(points[i]);
    cells_[k].push_back(i);
    for (int a = 0; a < 3; ++a) {
      if (first || k[a] < lo_[a]) lo_[a] = k[a];
      if (first || k[a] > hi_[a]) hi_[a] = k[a];
    }
    first = false;
  }
}

SpatialGrid::Key SpatialGrid::key_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

std::vector<std::size_t> SpatialGrid::knn(const Vec3& q, std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> found;
  if (k == 0 || points_.empty()) return {};
  const Key c = key_of(q);
  std::int64_t max_ring = 0;
  for (int a = 0; a < 3; ++a)
    max_ring = std::max({max_ring, std::abs(c[a] - lo_[a]), std::abs(hi_[a] - c[a])});

  for (std::int64_t r = 0; r <= max_ring; ++r) {
    for (std::int64_t dx = -r; dx <= r; ++dx)
      for (std::int64_t dy = -r; dy <= r; ++dy)
        for (std::int64_t dz = -r; dz <= r; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          const auto it = cells_.find(Key{c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second) found.emplace_back((points_[i] - q).squaredNorm(), i);
        }
    if (found.size() >= k) {
      std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k - 1),
                       found.end());
      const double kth = found[k - 1].first;
      const double reach = static_cast<double>(r) * cell_;
      if (kth <= reach * reach) break;
    }
  }
  std::sort(found.begin(), found.end());
  if (found.size() > k) found.resize(k);
  std::vector<std::size_t> out;
  out.reserve(found.size());
  for (const auto& f : found) out.push_back(f.second);
  return out;
}

std::vector<std::size_t> SpatialGrid::within(const Vec3& q, double radius) const {
  std::vector<std::size_t> out;
  const Key lo = key_of(q - Vec3::Constant(radius));
  const Key hi = key_of(q + Vec3::Constant(radius));
  const double r2 = radius * radius;
  for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
    for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
      for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
        const auto it = cells_.find(Key{x, y, z});
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second)
          if ((points_[i] - q).squaredNorm() <= r2) out.push_back(i);
      }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace taskgrasp
