#include "taskgrasp/kernels/kernels.hpp"

#include <cmath>
#include <limits>

namespace taskgrasp::kernels::scalar {

void fuse_gaussian(double* mean, double* var, const double* meas, const double* meas_var,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = var[i];
    const double vs = meas_var[i];
    const double denom = v + vs;
    mean[i] = (mean[i] * vs + meas[i] * v) / denom;
    var[i] = (v * vs) / denom;
  }
}

void mixture_density(const Gaussian2* comps, std::size_t k, const double* x0, const double* x1,
                     double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const Gaussian2& g = comps[c];
      const double d0 = x0[i] - g.mean0;
      const double d1 = x1[i] - g.mean1;
      const double q = (d0 * d0 * g.inv00 + 2.0 * d0 * d1 * g.inv01) + d1 * d1 * g.inv11;
      const double e = -0.5 * q;
      acc += e < -700.0 ? 0.0 : g.coeff * std::exp(e);
    }
    out[i] = acc;
  }
}

void footprint_depth(const double* x, const double* y, const double* z, std::size_t n,
                     const Footprint& fp, double* out) {
  const double* r = fp.rot;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - fp.origin[0];
    const double dy = y[i] - fp.origin[1];
    const double dz = z[i] - fp.origin[2];
    // local = R^T * d
    const double lx = (r[0] * dx + r[3] * dy) + r[6] * dz;
    const double ly = (r[1] * dx + r[4] * dy) + r[7] * dz;
    const double lz = (r[2] * dx + r[5] * dy) + r[8] * dz;
    const bool inside = std::abs(ly) <= fp.half_width && std::abs(lz) <= fp.half_height;
    out[i] = inside ? lx : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace taskgrasp::kernels::scalar
