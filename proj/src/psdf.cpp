#include "taskgrasp/psdf.hpp"

#include "taskgrasp/error.hpp"
#include "taskgrasp/kernels/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>

namespace taskgrasp::fusion {

Belief gaussian_update(const Belief& prior, const Belief& meas) {
  if (!(prior.var > 0.0) || !(meas.var > 0.0))
    fail(ErrorKind::InvalidInput, "gaussian_update requires positive variances");
  const double denom = prior.var + meas.var;
  return {(prior.mean * meas.var + meas.mean * prior.var) / denom,
          (prior.var * meas.var) / denom};
}

void DepthFrame::validate() const {
  intrinsics.validate();
  if (width != intrinsics.x_res || height != intrinsics.y_res)
    fail(ErrorKind::InvalidInput, "frame size does not match intrinsics resolution");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (depth.size() != n) fail(ErrorKind::InvalidInput, "depth buffer size mismatch");
  if (mask.size() != n) fail(ErrorKind::InvalidInput, "mask dimensions differ from depth");
  for (double d : depth)
    if (!std::isfinite(d) || d < 0.0)
      fail(ErrorKind::InvalidInput, "depth values must be finite and non-negative");
  if (!is_rigid(pose)) fail(ErrorKind::InvalidPose, "camera pose is not a rigid transform");
}

FusedVolume::FusedVolume(const Vec3& origin, double voxel_size, std::array<int, 3> dims,
                         double truncation)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims), truncation_(truncation) {
  if (!(voxel_size > 0.0)) fail(ErrorKind::InvalidConfig, "voxel size must be positive");
  if (!(truncation > 0.0)) fail(ErrorKind::InvalidConfig, "truncation must be positive");
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    fail(ErrorKind::InvalidConfig, "volume dims must be positive");
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (n > (std::size_t{1} << 28)) fail(ErrorKind::InvalidConfig, "volume too large");
  mean_.assign(n, 0.0);
  var_.assign(n, 0.0);
  observed_.assign(n, 0);
}

FusedVolume FusedVolume::covering(const Vec3& lo, const Vec3& hi, double voxel_size,
                                  double truncation) {
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a)
    dims[static_cast<std::size_t>(a)] =
        std::max(2, static_cast<int>(std::ceil((hi[a] - lo[a]) / voxel_size)));
  return FusedVolume(lo, voxel_size, dims, truncation);
}

FusedVolume FusedVolume::from_raw(const Vec3& origin, double voxel_size, std::array<int, 3> dims,
                                  double truncation, std::vector<double> mean,
                                  std::vector<double> var, std::vector<std::uint8_t> observed) {
  FusedVolume v(origin, voxel_size, dims, truncation);
  if (mean.size() != v.voxel_count() || var.size() != v.voxel_count() ||
      observed.size() != v.voxel_count())
    fail(ErrorKind::InvalidInput, "volume payload size mismatch");
  v.mean_ = std::move(mean);
  v.var_ = std::move(var);
  v.observed_ = std::move(observed);
  return v;
}

std::optional<Belief> FusedVolume::belief(std::size_t idx) const {
  if (!observed_[idx]) return std::nullopt;
  return Belief{mean_[idx], var_[idx]};
}

namespace {

struct Cell {
  int i, j, k;
  double fx, fy, fz;
};

std::optional<Cell> locate(const FusedVolume& v, const Vec3& p) {
  const Vec3 g = (p - v.origin()) / v.voxel_size() - Vec3::Constant(0.5);
  const int i = static_cast<int>(std::floor(g.x()));
  const int j = static_cast<int>(std::floor(g.y()));
  const int k = static_cast<int>(std::floor(g.z()));
  const auto& d = v.dims();
  if (i < 0 || j < 0 || k < 0 || i + 1 >= d[0] || j + 1 >= d[1] || k + 1 >= d[2])
    return std::nullopt;
  for (int c = 0; c < 8; ++c)
    if (!v.observed(v.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))))
      return std::nullopt;
  return Cell{i, j, k, g.x() - i, g.y() - j, g.z() - k};
}

}  // namespace

std::optional<double> FusedVolume::sample_mean(const Vec3& p) const {
  const auto c = locate(*this, p);
  if (!c) return std::nullopt;
  double acc = 0.0;
  for (int n = 0; n < 8; ++n) {
    const int a = n & 1, b = (n >> 1) & 1, e = (n >> 2) & 1;
    const double w = (a ? c->fx : 1 - c->fx) * (b ? c->fy : 1 - c->fy) * (e ? c->fz : 1 - c->fz);
    acc += w * mean_[index(c->i + a, c->j + b, c->k + e)];
  }
  return acc;
}

std::optional<Vec3> FusedVolume::sample_gradient(const Vec3& p) const {
  const auto c = locate(*this, p);
  if (!c) return std::nullopt;
  Vec3 g = Vec3::Zero();
  for (int n = 0; n < 8; ++n) {
    const int a = n & 1, b = (n >> 1) & 1, e = (n >> 2) & 1;
    const double m = mean_[index(c->i + a, c->j + b, c->k + e)];
    const double wx = a ? c->fx : 1 - c->fx;
    const double wy = b ? c->fy : 1 - c->fy;
    const double wz = e ? c->fz : 1 - c->fz;
    g.x() += (a ? 1.0 : -1.0) * wy * wz * m;
    g.y() += (b ? 1.0 : -1.0) * wx * wz * m;
    g.z() += (e ? 1.0 : -1.0) * wx * wy * m;
  }
  return g / voxel_size_;
}

std::vector<double> incidence_angles(const DepthFrame& frame) {
  const int w = frame.width, h = frame.height;
  const double f = frame.intrinsics.focal();
  const double cx = frame.intrinsics.cx, cy = frame.intrinsics.cy;
  std::vector<double> theta(static_cast<std::size_t>(w) * h, 0.0);
  auto back_project = [&](int u, int v) {
    const double d = frame.at(u, v);
    return Vec3((u - cx) / f * d, (v - cy) / f * d, d);
  };
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!frame.masked(u, v) || frame.at(u, v) <= 0.0) continue;
      Vec3 pts[9];
      int n = 0;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          const int uu = u + du, vv = v + dv;
          if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
          if (!frame.masked(uu, vv) || frame.at(uu, vv) <= 0.0) continue;
          pts[n++] = back_project(uu, vv);
        }
      if (n < 3) continue;
      Vec3 mean = Vec3::Zero();
      for (int i = 0; i < n; ++i) mean += pts[i];
      mean /= n;
      Mat3 cov = Mat3::Zero();
      for (int i = 0; i < n; ++i) cov += (pts[i] - mean) * (pts[i] - mean).transpose();
      Eigen::SelfAdjointEigenSolver<Mat3> es;
      es.computeDirect(cov);
      const Vec3 ev = es.eigenvalues();
      // Collinear or coincident neighbourhood: no plane.
      if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300))) continue;
      const Vec3 normal = es.eigenvectors().col(0);
      const Vec3 ray = back_project(u, v).normalized();
      const double c = std::min(1.0, std::abs(normal.dot(ray)));
      theta[static_cast<std::size_t>(v) * w + u] = std::acos(c);
    }
  }
  return theta;
}

IntegrationStats integrate(FusedVolume& volume, const DepthFrame& frame,
                           const FusionParams& params) {
  if (volume.frozen()) fail(ErrorKind::InvalidInput, "volume is frozen");
  frame.validate();

  IntegrationStats stats;
  const int w = frame.width, h = frame.height;
  const std::vector<double> theta = incidence_angles(frame);
  const double f = frame.intrinsics.focal();

  // Per-pixel measurement variance; NaN marks pixels that do not contribute.
  std::vector<double> sens_var(theta.size(), std::numeric_limits<double>::quiet_NaN());
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const std::size_t p = static_cast<std::size_t>(v) * w + u;
      if (!frame.mask[p] || frame.depth[p] <= 0.0) continue;
      const auto var =
          sensor::measurement_variance(frame.depth[p], theta[p], frame.intrinsics, params.theta_max);
      if (!var) {
        ++stats.pixels_grazing;
        continue;
      }
      sens_var[p] = *var;
      ++stats.pixels_used;
    }
  if (stats.pixels_used == 0) return stats;

  const Mat3 rt = frame.pose.rotation().transpose();
  const Vec3 t = frame.pose.translation();
  const double tau = volume.truncation();
  const double cx = frame.intrinsics.cx, cy = frame.intrinsics.cy;

  std::vector<std::size_t> idx;
  std::vector<double> mean, var, meas, meas_var;
  const auto& dims = volume.dims();
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 pc = rt * (volume.center(i, j, k) - t);
        if (pc.z() <= 0.0) continue;
        const long u = std::lround(f * pc.x() / pc.z() + cx);
        const long v = std::lround(f * pc.y() / pc.z() + cy);
        if (u < 0 || v < 0 || u >= w || v >= h) continue;
        const std::size_t p = static_cast<std::size_t>(v) * w + static_cast<std::size_t>(u);
        const double sv = sens_var[p];
        if (std::isnan(sv)) continue;
        // Projective distance along the voxel's own ray.
        const double sdf = (pc.z() - frame.depth[p]) * pc.norm() / pc.z();
        if (sdf > tau || sdf < -tau) continue;
        const std::size_t vi = volume.index(i, j, k);
        if (!volume.observed_[vi]) {
          volume.mean_[vi] = sdf;
          volume.var_[vi] = sv;
          volume.observed_[vi] = 1;
          ++stats.voxels_first_touch;
          continue;
        }
        idx.push_back(vi);
        mean.push_back(volume.mean_[vi]);
        var.push_back(volume.var_[vi]);
        meas.push_back(sdf);
        meas_var.push_back(sv);
      }

  kernels::fuse_gaussian(mean, var, meas, meas_var);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    volume.mean_[idx[n]] = mean[n];
    volume.var_[idx[n]] = var[n];
  }
  stats.voxels_updated = idx.size() + stats.voxels_first_touch;
  return stats;
}

std::optional<std::pair<Vec3, Vec3>> masked_bounds(std::span<const DepthFrame> frames) {
  bool any = false;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& fr : frames) {
    const double f = fr.intrinsics.focal();
    for (int v = 0; v < fr.height; ++v)
      for (int u = 0; u < fr.width; ++u) {
        if (!fr.masked(u, v)) continue;
        const double d = fr.at(u, v);
        if (d <= 0.0) continue;
        const Vec3 pc((u - fr.intrinsics.cx) / f * d, (v - fr.intrinsics.cy) / f * d, d);
        const Vec3 pw = fr.pose * pc;
        lo = lo.cwiseMin(pw);
        hi = hi.cwiseMax(pw);
        any = true;
      }
  }
  if (!any) return std::nullopt;
  return std::make_pair(lo, hi);
}

}  // namespace taskgrasp::fusion
