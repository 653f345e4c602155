#include "taskgrasp/error.hpp"
#include "taskgrasp/random.hpp"
#include "taskgrasp/surface.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

using namespace taskgrasp;

namespace {

// Exact signed distance of a sphere (positive inside) sampled on a grid.
fusion::FusedVolume analytic_sphere(double r, double vs, double var = 4.0) {
  const int n = static_cast<int>(std::ceil(2.0 * (r + 4.0 * vs) / vs));
  const Vec3 origin = Vec3::Constant(-n * vs / 2.0);
  const std::array<int, 3> dims{n, n, n};
  std::vector<double> mean, v;
  std::vector<std::uint8_t> obs;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3 c = origin + vs * Vec3(i + 0.5, j + 0.5, k + 0.5);
        mean.push_back(std::clamp(r - c.norm(), -4.0 * vs, 4.0 * vs));
        v.push_back(var);
        obs.push_back(1);
      }
  auto vol = fusion::FusedVolume::from_raw(origin, vs, dims, 4.0 * vs, mean, v, obs);
  vol.freeze();
  return vol;
}

}  // namespace

TEST_CASE("marching cubes on an analytic sphere is closed, outward and accurate") {
  const auto vol = analytic_sphere(50.0, 3.0);
  const auto mesh = surface::marching_cubes(vol);
  REQUIRE(!mesh.triangles.empty());

  // every edge shared by exactly two triangles, Euler characteristic 2
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      auto a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  bool manifold = true;
  for (const auto& [e, c] : edges) manifold = manifold && c == 2;
  CHECK(manifold);
  const long chi = static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
                   static_cast<long>(mesh.triangles.size());
  CHECK(chi == 2);

  std::size_t inward = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 c = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
    if (mesh.face_normal(t).dot(c) <= 0.0) ++inward;
  }
  CHECK(inward == 0);

  double worst = 0.0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - 50.0));
  CHECK(worst < 0.5);
  CHECK(mesh.area() == doctest::Approx(4.0 * std::numbers::pi * 2500.0).epsilon(0.02));
  for (double s : mesh.vertex_sigma) CHECK(s == doctest::Approx(2.0));
}

TEST_CASE("extraction contract") {
  const auto vol = analytic_sphere(50.0, 3.0);
  const auto cloud = surface::extract_surface(vol, {1000, 3});
  CHECK(cloud.size() == 1000);
  double rms = 0.0;
  for (const auto& p : cloud.points) {
    rms += std::pow(p.position.norm() - 50.0, 2);
    CHECK(p.normal.norm() == doctest::Approx(1.0));
    CHECK(p.normal.dot(p.position.normalized()) > 0.9);
    CHECK(p.c == doctest::Approx(2.0));
  }
  CHECK(std::sqrt(rms / 1000.0) <= 3.0);

  const auto again = surface::extract_surface(vol, {1000, 3});
  bool same = true;
  for (std::size_t i = 0; i < 1000; ++i) same = same && again.points[i].position == cloud.points[i].position;
  CHECK(same);
}

TEST_CASE("no zero crossing is an empty-surface error") {
  const std::array<int, 3> dims{8, 8, 8};
  std::vector<double> mean(512, 12.0), var(512, 1.0);
  std::vector<std::uint8_t> obs(512, 1);
  auto vol = fusion::FusedVolume::from_raw(Vec3::Zero(), 3.0, dims, 12.0, mean, var, obs);
  CHECK_THROWS_AS((void)surface::extract_surface(vol, {}), Error);  // not frozen
  vol.freeze();
  try {
    (void)surface::extract_surface(vol, {});
    FAIL("expected EmptySurface");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptySurface);
  }
}

TEST_CASE("surface variation") {
  Rng rng(11);
  SUBCASE("plane") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j) pts.emplace_back(i * 2.0, j * 2.0, 5.0);
    const auto r = surface::surface_variation(pts, 16);
    for (double u : r.u) CHECK(u == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  }
  SUBCASE("isotropic blob") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 4000; ++i) pts.emplace_back(rng.normal(), rng.normal(), rng.normal());
    const auto r = surface::surface_variation(pts, 4000);
    CHECK(r.u[0] == doctest::Approx(1.0 / 3.0).epsilon(0.05));
  }
  SUBCASE("thin cylinder wall") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 3000; ++i) {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      pts.emplace_back(5.0 * std::cos(a), 5.0 * std::sin(a), rng.uniform(0.0, 20.0));
    }
    const auto r = surface::surface_variation(pts, 32);
    for (double u : r.u) {
      CHECK(u > 0.0);
      CHECK(u < 1.0 / 3.0);
    }
  }
  SUBCASE("coincident points are pinned to zero and flagged") {
    std::vector<Vec3> pts(20, Vec3(1, 2, 3));
    const auto r = surface::surface_variation(pts, 16);
    CHECK(r.degenerate == 20);
    for (double u : r.u) CHECK(u == 0.0);
  }
}
