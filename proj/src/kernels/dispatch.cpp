#include "taskgrasp/error.hpp"
#include "taskgrasp/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace taskgrasp::kernels {
namespace {

Isa detect() {
  if (const char* force = std::getenv("TASKGRASP_FORCE_SCALAR"); force && *force && *force != '0')
    return Isa::Scalar;
  return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

// -1 = no override
std::atomic<int> g_override{-1};

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) fail(ErrorKind::InvalidInput, std::string("kernel size mismatch: ") + what);
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  const int o = g_override.load(std::memory_order_relaxed);
  if (o >= 0) return static_cast<Isa>(o);
  static const Isa detected = detect();
  return detected;
}

void override_isa(std::optional<Isa> isa) {
  if (isa && !isa_supported(*isa))
    fail(ErrorKind::InvalidConfig, "requested ISA not supported on this CPU");
  g_override.store(isa ? static_cast<int>(*isa) : -1, std::memory_order_relaxed);
}

void fuse_gaussian(std::span<double> mean, std::span<double> var, std::span<const double> meas,
                   std::span<const double> meas_var) {
  check_sizes(mean.size(), var.size(), "var");
  check_sizes(mean.size(), meas.size(), "meas");
  check_sizes(mean.size(), meas_var.size(), "meas_var");
  if (active_isa() == Isa::Avx2)
    avx2::fuse_gaussian(mean.data(), var.data(), meas.data(), meas_var.data(), mean.size());
  else
    scalar::fuse_gaussian(mean.data(), var.data(), meas.data(), meas_var.data(), mean.size());
}

void mixture_density(std::span<const Gaussian2> comps, std::span<const double> x0,
                     std::span<const double> x1, std::span<double> out) {
  check_sizes(x0.size(), x1.size(), "x1");
  check_sizes(x0.size(), out.size(), "out");
  if (active_isa() == Isa::Avx2)
    avx2::mixture_density(comps.data(), comps.size(), x0.data(), x1.data(), out.data(), out.size());
  else
    scalar::mixture_density(comps.data(), comps.size(), x0.data(), x1.data(), out.data(),
                            out.size());
}

void footprint_depth(const PointsSoA& pts, const Footprint& fp, std::span<double> out) {
  check_sizes(pts.x.size(), pts.y.size(), "y");
  check_sizes(pts.x.size(), pts.z.size(), "z");
  check_sizes(pts.x.size(), out.size(), "out");
  if (active_isa() == Isa::Avx2)
    avx2::footprint_depth(pts.x.data(), pts.y.data(), pts.z.data(), out.size(), fp, out.data());
  else
    scalar::footprint_depth(pts.x.data(), pts.y.data(), pts.z.data(), out.size(), fp, out.data());
}

}  // namespace taskgrasp::kernels
