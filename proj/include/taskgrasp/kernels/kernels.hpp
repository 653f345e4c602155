#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference
// implementation and an AVX2 variant; calls through the top-level functions
// go to whichever the running CPU supports. Fusion and footprint kernels are
// bit-identical across variants; the mixture density differs only by the
// vectorised exponential (within a few ulp).

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace taskgrasp::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);
bool isa_supported(Isa isa);

// Selected ISA: the best supported one, unless overridden (tests, or the
// TASKGRASP_FORCE_SCALAR environment variable).
Isa active_isa();
void override_isa(std::optional<Isa> isa);

// Bivariate Gaussian component with its inverse covariance and the
// normalising coefficient w / (2 pi sqrt(det cov)) precomputed.
struct Gaussian2 {
  double coeff;
  double mean0, mean1;
  double inv00, inv01, inv11;
};

// Structure-of-arrays point view.
struct PointsSoA {
  std::span<const double> x, y, z;
  std::size_t size() const { return x.size(); }
};

// Gripper pad footprint: points expressed in the frame (rotation row-major
// world<-frame, origin) are kept when |local y| <= half_width and
// |local z| <= half_height.
struct Footprint {
  double rot[9];
  double origin[3];
  double half_width;
  double half_height;
};

// In-place precision-weighted fusion of (mean, var) with (meas, meas_var).
void fuse_gaussian(std::span<double> mean, std::span<double> var,
                   std::span<const double> meas, std::span<const double> meas_var);

// out[i] = sum_k coeff_k * exp(-0.5 * mahalanobis_k(x0[i], x1[i]))
void mixture_density(std::span<const Gaussian2> comps, std::span<const double> x0,
                     std::span<const double> x1, std::span<double> out);

// out[i] = local x of point i inside the footprint, NaN outside.
void footprint_depth(const PointsSoA& pts, const Footprint& fp, std::span<double> out);

namespace scalar {
void fuse_gaussian(double* mean, double* var, const double* meas, const double* meas_var,
                   std::size_t n);
void mixture_density(const Gaussian2* comps, std::size_t k, const double* x0, const double* x1,
                     double* out, std::size_t n);
void footprint_depth(const double* x, const double* y, const double* z, std::size_t n,
                     const Footprint& fp, double* out);
}  // namespace scalar

namespace avx2 {
void fuse_gaussian(double* mean, double* var, const double* meas, const double* meas_var,
                   std::size_t n);
void mixture_density(const Gaussian2* comps, std::size_t k, const double* x0, const double* x1,
                     double* out, std::size_t n);
void footprint_depth(const double* x, const double* y, const double* z, std::size_t n,
                     const Footprint& fp, double* out);
}  // namespace avx2

}  // namespace taskgrasp::kernels
