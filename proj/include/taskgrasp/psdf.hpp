#pragma once

// Probabilistic truncated signed distance volume. Each voxel near the
// measured surface holds a Gaussian belief N(mean, var) over its signed
// distance; new measurements are merged with the precision-weighted
// (product of Gaussians) update.
//
// Sign convention: distance is positive behind the measured surface (inside
// the object) and negative in free space, so the outward normal is -grad.

#include "taskgrasp/geometry.hpp"
#include "taskgrasp/sensor_model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace taskgrasp::fusion {

struct Belief {
  double mean = 0.0;  // mm
  double var = 0.0;   // mm^2
};

// Throws InvalidInput on non-positive variance.
Belief gaussian_update(const Belief& prior, const Belief& meas);

struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<double> depth;        // mm, row-major, 0 = invalid
  std::vector<std::uint8_t> mask;   // nonzero = object
  Pose pose = Pose::Identity();     // world <- camera
  sensor::CameraIntrinsics intrinsics;

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  bool masked(int u, int v) const { return mask[static_cast<std::size_t>(v) * width + u] != 0; }

  // Throws InvalidInput / InvalidIntrinsics / InvalidPose.
  void validate() const;
};

struct FusionParams {
  double theta_max = sensor::kDefaultGrazingClamp;
};

struct IntegrationStats {
  std::size_t pixels_used = 0;
  std::size_t pixels_grazing = 0;
  std::size_t voxels_updated = 0;
  std::size_t voxels_first_touch = 0;
};

class FusedVolume {
 public:
  FusedVolume(const Vec3& origin, double voxel_size, std::array<int, 3> dims, double truncation);

  // Grid covering [lo, hi] with the given voxel size (dims rounded up).
  static FusedVolume covering(const Vec3& lo, const Vec3& hi, double voxel_size,
                              double truncation);

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const std::array<int, 3>& dims() const { return dims_; }
  double truncation() const { return truncation_; }
  std::size_t voxel_count() const { return mean_.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  Vec3 center(int i, int j, int k) const {
    return origin_ + voxel_size_ * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }

  bool observed(std::size_t idx) const { return observed_[idx] != 0; }
  std::optional<Belief> belief(std::size_t idx) const;

  std::span<const double> means() const { return mean_; }
  std::span<const double> variances() const { return var_; }
  std::span<const std::uint8_t> observed_flags() const { return observed_; }

  // Trilinear interpolation of the mean (and its gradient) at p; nullopt
  // unless all eight surrounding voxel centres are observed.
  std::optional<double> sample_mean(const Vec3& p) const;
  std::optional<Vec3> sample_gradient(const Vec3& p) const;

  bool frozen() const { return frozen_; }
  // After freezing the volume is read-only; integrate() rejects it.
  void freeze() { frozen_ = true; }

  // Raw state access for serialisation.
  static FusedVolume from_raw(const Vec3& origin, double voxel_size, std::array<int, 3> dims,
                              double truncation, std::vector<double> mean,
                              std::vector<double> var, std::vector<std::uint8_t> observed);

 private:
  friend IntegrationStats integrate(FusedVolume&, const DepthFrame&, const FusionParams&);

  Vec3 origin_;
  double voxel_size_;
  std::array<int, 3> dims_;
  double truncation_;
  std::vector<double> mean_;
  std::vector<double> var_;
  std::vector<std::uint8_t> observed_;
  bool frozen_ = false;
};

// Per-pixel incidence angle (rad) from a 3x3 local plane fit over masked
// valid pixels; 0 when the fit fails.
std::vector<double> incidence_angles(const DepthFrame& frame);

// Fuses one masked frame. Voxels whose projective signed distance along the
// camera ray is within +-truncation of a masked measurement are updated;
// first-touch voxels adopt the measurement. Invalid frames are rejected
// before any voxel changes.
IntegrationStats integrate(FusedVolume& volume, const DepthFrame& frame,
                           const FusionParams& params = {});

// Axis-aligned bounds of all masked back-projected measurements.
std::optional<std::pair<Vec3, Vec3>> masked_bounds(std::span<const DepthFrame> frames);

}  // namespace taskgrasp::fusion
