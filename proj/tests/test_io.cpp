#include "support.hpp"

#include "taskgrasp/error.hpp"
#include "taskgrasp/io.hpp"

#include <doctest.h>

#include <fstream>

using namespace taskgrasp;

TEST_CASE("pgm round trip, 8 and 16 bit") {
  tgtest::TempDir dir("pgm");
  io::Pgm a{3, 2, 65535, {0, 1, 256, 1000, 65535, 7}};
  io::write_pgm(dir / "a.pgm", a);
  const auto b = io::read_pgm(dir / "a.pgm");
  CHECK(b.width == 3);
  CHECK(b.height == 2);
  CHECK(b.data == a.data);
  io::Pgm m{2, 2, 255, {0, 255, 255, 0}};
  io::write_pgm(dir / "m.pgm", m);
  CHECK(io::read_pgm(dir / "m.pgm").data == m.data);
  CHECK(tgtest::slurp(dir / "m.pgm").size() == std::string("P5\n2 2\n255\n").size() + 4);
}

TEST_CASE("frames round trip through pgm + sidecar") {
  tgtest::TempDir dir("frame");
  const auto f = synth::render_depth(tgtest::sphere_scene(), 1);
  io::write_frame(dir.path, "view", f, {{"seed", 0}});
  const auto g = io::read_frame(dir / "view.json");
  CHECK(g.width == f.width);
  CHECK(g.mask == f.mask);
  CHECK(g.pose.isApprox(f.pose, 1e-15));
  for (std::size_t i = 0; i < f.depth.size(); i += 101) CHECK(std::abs(g.depth[i] - f.depth[i]) <= 0.5);

  std::filesystem::remove(dir / "view_mask.pgm");
  try {
    (void)io::read_frame(dir / "view.json");
    FAIL("expected Io");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find("view_mask.pgm") != std::string::npos);
  }
}

TEST_CASE("ply round trip keeps scores exactly") {
  tgtest::TempDir dir("ply");
  io::PlyCloud p;
  for (int i = 0; i < 10; ++i) {
    p.cloud.points.push_back({Vec3(i, -i, 0.5 * i), Vec3(0, 0, 1), 0.25 * i, 0.01 * i});
    p.score.push_back(static_cast<float>(i) / 7.0f);
    p.color.push_back({static_cast<std::uint8_t>(i), 2, 3});
  }
  p.comments = {"generator taskgrasp", "seed 5"};
  io::write_ply(dir / "c.ply", p);
  const auto q = io::read_ply(dir / "c.ply");
  REQUIRE(q.cloud.size() == 10);
  CHECK(q.score == p.score);
  CHECK(q.color == p.color);
  CHECK(q.comments == p.comments);
  for (int i = 0; i < 10; ++i) {
    CHECK(q.cloud.points[i].position == p.cloud.points[i].position);
    CHECK(q.cloud.points[i].c == doctest::Approx(0.25 * i));
  }
}

TEST_CASE("ascii ply with extra properties") {
  tgtest::TempDir dir("ascii");
  {
    std::ofstream f(dir / "a.ply");
    f << "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
         "property double z\nproperty int label\nelement face 0\nproperty list uchar int vertex_indices\n"
         "end_header\n1 2 3 7\n4 5 6 8\n";
  }
  const auto p = io::read_ply(dir / "a.ply");
  REQUIRE(p.cloud.size() == 2);
  CHECK(p.cloud.points[1].position == Vec3(4, 5, 6));
  CHECK(p.cloud.points[1].normal == Vec3::Zero());
  {
    std::ofstream f(dir / "bad.ply");
    f << "ply\nformat ascii 1.0\nelement vertex 1\nproperty float y\nend_header\n1\n";
  }
  CHECK_THROWS_AS((void)io::read_ply(dir / "bad.ply"), Error);
  CHECK_THROWS_AS((void)io::read_ply(dir / "missing.ply"), Error);
}

TEST_CASE("volume round trip") {
  tgtest::TempDir dir("vol");
  const auto f = synth::render_depth(tgtest::sphere_scene(), 0);
  auto v = fusion::FusedVolume::covering(Vec3(-80, -80, -80), Vec3(80, 80, 80), 4.0, 16.0);
  fusion::integrate(v, f);
  io::write_volume(dir / "v.psdf", v);
  const auto w = io::read_volume(dir / "v.psdf");
  CHECK(w.frozen());
  CHECK(w.dims() == v.dims());
  CHECK(w.origin() == v.origin());
  CHECK(std::equal(v.means().begin(), v.means().end(), w.means().begin()));
  CHECK(std::equal(v.variances().begin(), v.variances().end(), w.variances().begin()));
  CHECK(std::equal(v.observed_flags().begin(), v.observed_flags().end(), w.observed_flags().begin()));
  io::write_text(dir / "junk.psdf", "NOTAVOL");
  CHECK_THROWS_AS((void)io::read_volume(dir / "junk.psdf"), Error);
}
