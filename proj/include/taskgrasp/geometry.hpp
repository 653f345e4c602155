#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace taskgrasp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Pose = Eigen::Isometry3d;

// Rotation orthonormal and det = +1 within tol.
bool is_rigid(const Eigen::Matrix4d& m, double tol = 1e-9);
inline bool is_rigid(const Pose& p, double tol = 1e-9) { return is_rigid(p.matrix(), tol); }

// 4x4 row-major
std::array<double, 16> to_row_major(const Pose& p);
Eigen::Matrix4d matrix_from_row_major(std::span<const double> v);

// Rotation of `angle` radians about a unit axis.
Mat3 axis_angle(const Vec3& axis, double angle);

// Any unit vector orthogonal to v (v nonzero).
Vec3 any_orthogonal(const Vec3& v);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

// Uniform hash grid over a fixed point set for neighbourhood queries.
class SpatialGrid {
 public:
  SpatialGrid(std::span<const Vec3> points, double cell_size);

  double cell_size() const { return cell_; }

  // Indices of the k nearest points to q (q's own index included if present),
  // ordered by distance then index.
  std::vector<std::size_t> knn(const Vec3& q, std::size_t k) const;

  // Indices of points within radius of q, ascending index order.
  std::vector<std::size_t> within(const Vec3& q, double radius) const;

 private:
  using Key = std::array<std::int64_t, 3>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  Key key_of(const Vec3& p) const;

  std::span<const Vec3> points_;
  double cell_;
  Key lo_{}, hi_{};
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace taskgrasp
