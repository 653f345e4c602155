#include "taskgrasp/kernels/kernels.hpp"
#include "taskgrasp/random.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

using namespace taskgrasp;
using namespace taskgrasp::kernels;

namespace {

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// odd length exercises the scalar tail of the vector loops
constexpr std::size_t kN = 1027;

}  // namespace

TEST_CASE("dispatch") {
  CHECK(isa_supported(Isa::Scalar));
  override_isa(Isa::Scalar);
  CHECK(active_isa() == Isa::Scalar);
  override_isa(std::nullopt);
  if (isa_supported(Isa::Avx2)) CHECK(active_isa() == Isa::Avx2);
  CHECK(to_string(Isa::Avx2) == "avx2");
}

TEST_CASE("fuse_gaussian variants are bit-identical") {
  if (!isa_supported(Isa::Avx2)) return;
  Rng rng(1);
  std::vector<double> m(kN), v(kN), z(kN), zv(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    m[i] = rng.uniform(-12, 12);
    v[i] = rng.uniform(1e-3, 50);
    z[i] = rng.uniform(-12, 12);
    zv[i] = rng.uniform(1e-3, 50);
  }
  auto m1 = m, v1 = v, m2 = m, v2 = v;
  scalar::fuse_gaussian(m1.data(), v1.data(), z.data(), zv.data(), kN);
  avx2::fuse_gaussian(m2.data(), v2.data(), z.data(), zv.data(), kN);
  CHECK(bits_equal(m1, m2));
  CHECK(bits_equal(v1, v2));
  // and the scalar kernel is the textbook update
  for (std::size_t i = 0; i < kN; i += 97) {
    CHECK(m1[i] == doctest::Approx((zv[i] * m[i] + v[i] * z[i]) / (v[i] + zv[i])).epsilon(1e-14));
    CHECK(v1[i] == doctest::Approx(v[i] * zv[i] / (v[i] + zv[i])).epsilon(1e-14));
  }
}

TEST_CASE("footprint_depth variants are bit-identical") {
  if (!isa_supported(Isa::Avx2)) return;
  Rng rng(2);
  std::vector<double> x(kN), y(kN), z(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    x[i] = rng.uniform(-60, 60);
    y[i] = rng.uniform(-60, 60);
    z[i] = rng.uniform(-60, 60);
  }
  Footprint fp{};
  const double c = std::cos(0.4), s = std::sin(0.4);
  const double rot[9] = {c, -s, 0, s, c, 0, 0, 0, 1};
  std::memcpy(fp.rot, rot, sizeof rot);
  fp.origin[0] = 3;
  fp.origin[1] = -2;
  fp.origin[2] = 1;
  fp.half_width = 10;
  fp.half_height = 7.5;
  std::vector<double> a(kN), b(kN);
  scalar::footprint_depth(x.data(), y.data(), z.data(), kN, fp, a.data());
  avx2::footprint_depth(x.data(), y.data(), z.data(), kN, fp, b.data());
  CHECK(bits_equal(a, b));
  std::size_t inside = 0;
  for (double d : a) inside += !std::isnan(d);
  CHECK(inside > 0);
  CHECK(inside < kN);
}

TEST_CASE("mixture_density variants agree to a few ulp") {
  if (!isa_supported(Isa::Avx2)) return;
  Rng rng(3);
  std::vector<Gaussian2> comps;
  for (int k = 0; k < 4; ++k) {
    const double s0 = rng.uniform(0.05, 0.5), s1 = rng.uniform(0.05, 0.5), r = rng.uniform(-0.5, 0.5);
    const double c01 = r * s0 * s1, det = s0 * s0 * s1 * s1 - c01 * c01;
    comps.push_back({rng.uniform(0.1, 1.0) / (2.0 * M_PI * std::sqrt(det)), rng.uniform(-3, 3),
                     rng.uniform(0, 3), s1 * s1 / det, -c01 / det, s0 * s0 / det});
  }
  std::vector<double> x0(kN), x1(kN), a(kN), b(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    x0[i] = rng.uniform(-3.5, 3.5);
    x1[i] = rng.uniform(-0.5, 3.5);
  }
  scalar::mixture_density(comps.data(), comps.size(), x0.data(), x1.data(), a.data(), kN);
  avx2::mixture_density(comps.data(), comps.size(), x0.data(), x1.data(), b.data(), kN);
  double worst = 0.0;
  for (std::size_t i = 0; i < kN; ++i) {
    const double scale = std::max(std::abs(a[i]), 1e-300);
    if (a[i] > 1e-290) worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    else CHECK(std::abs(b[i]) < 1e-280);
  }
  CHECK(worst < 1e-13);
}

TEST_CASE("top-level entry points follow the selected variant") {
  Rng rng(4);
  std::vector<double> m(33), v(33), z(33), zv(33);
  for (std::size_t i = 0; i < 33; ++i) {
    m[i] = rng.uniform(-1, 1);
    v[i] = rng.uniform(0.1, 2);
    z[i] = rng.uniform(-1, 1);
    zv[i] = rng.uniform(0.1, 2);
  }
  auto m1 = m, v1 = v, m2 = m, v2 = v;
  override_isa(Isa::Scalar);
  fuse_gaussian(m1, v1, z, zv);
  override_isa(std::nullopt);
  fuse_gaussian(m2, v2, z, zv);
  CHECK(bits_equal(m1, m2));
  CHECK(bits_equal(v1, v2));
}
