#include "support.hpp"

#include "taskgrasp/error.hpp"
#include "taskgrasp/grasp_gen.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <numbers>

using namespace taskgrasp;
using namespace taskgrasp::grasp;

namespace {

constexpr double kPi = std::numbers::pi;

double angle_between(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

double det3(const Vec3& a, const Vec3& b, const Vec3& c) { return a.dot(b.cross(c)); }

// Two parallel walls facing away from each other, `gap` apart along x: the
// object is the slab between them.
surface::SurfaceCloud walls(double gap, bool second = true) {
  surface::SurfaceCloud c;
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j) {
      c.points.push_back({Vec3(0, i, j), Vec3(-1, 0, 0), 0.5, 0.0});
      if (second) c.points.push_back({Vec3(gap, i, j), Vec3(1, 0, 0), 0.5, 0.0});
    }
  return c;
}

// index of the wall point at the origin
constexpr std::size_t kWallOrigin = (20 * 41 + 20) * 2;

// Ground-truth sample of a catalogue shape with surface variation filled in
// and a nominal location uncertainty.
surface::SurfaceCloud gt_cloud(const tgtest::GtObject& o, double c = 0.5) {
  auto cloud = o.surface.cloud;
  surface::annotate_surface_variation(cloud, 16);
  for (auto& p : cloud.points) p.c = c;
  return cloud;
}

Pose translated(double x, double y, double z) {
  Pose p = Pose::Identity();
  p.translation() = Vec3(x, y, z);
  return p;
}

}  // namespace

TEST_CASE("start point sampling") {
  SUBCASE("all mass on one point") {
    std::vector<double> w(50, 0.0);
    w[0] = 1.0;
    const auto r = sample_start_points(50, w, 20, 3);
    REQUIRE(r.indices.size() == 20);
    for (auto i : r.indices) CHECK(i == 0);
  }
  SUBCASE("uniform weights pass a chi-square test") {
    const std::size_t n = 100, draws = 100000;
    std::vector<double> w(n, 1.0);
    std::vector<double> count(n, 0.0);
    for (std::size_t s = 0; s < draws; ++s) count[sample_start_points(n, w, 1, s).indices[0]] += 1.0;
    const double e = static_cast<double>(draws) / n;
    double chi2 = 0.0;
    for (double c : count) chi2 += (c - e) * (c - e) / e;
    const double p = boost::math::gamma_q((n - 1) / 2.0, chi2 / 2.0);
    CHECK(p > 0.01);
  }
  SUBCASE("proportional to weight") {
    std::vector<double> w = {1.0, 3.0};
    double second = 0.0;
    for (std::uint64_t s = 0; s < 20000; ++s) second += sample_start_points(2, w, 1, s).indices[0] == 1;
    CHECK(second / 20000.0 == doctest::Approx(0.75).epsilon(0.02));
  }
  SUBCASE("deterministic, distinct without replacement, all points when oversized") {
    std::vector<double> w(200);
    for (std::size_t i = 0; i < 200; ++i) w[i] = 1.0 + std::sin(static_cast<double>(i));
    const auto a = sample_start_points(200, w, 45, 17), b = sample_start_points(200, w, 45, 17);
    CHECK(a.indices == b.indices);
    auto sorted = a.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    const auto all = sample_start_points(10, {}, 45, 0);
    CHECK(all.all_points);
    CHECK(all.indices.size() == 10);
    std::vector<double> neg = {1.0, -1.0};
    CHECK_THROWS_AS((void)sample_start_points(2, neg, 1, 0), Error);
  }
}

TEST_CASE("gripper placement") {
  const Vec3 up = Vec3::UnitZ();
  SUBCASE("top face uses the fallback reference") {
    const auto g = pose_gripper(Vec3(1, 2, 3), -up, 0.3, up);
    CHECK(g.fallback);
    CHECK(is_rigid(g.pose));
    CHECK(g.pose.linear().col(0).isApprox(up));
  }
  SUBCASE("roll 0 on a side face stays in the normal/up plane") {
    const Vec3 n(1, 0, 0);
    const auto g = pose_gripper(Vec3(30, 0, 20), n, 0.0, up);
    CHECK_FALSE(g.fallback);
    CHECK(is_rigid(g.pose));
    CHECK(std::abs(det3(n, up, g.pose.linear().col(0))) < 1e-9);
    CHECK(std::abs(det3(n, up, g.pose.linear().col(2))) < 1e-9);
    CHECK(g.pose.linear().col(0).isApprox(-n));
    CHECK(g.pose.linear().col(2).dot(up) < 0.0);  // approaches from above
  }
  SUBCASE("opposite rolls differ by twice the roll about the closing axis") {
    const Vec3 n = Vec3(1, 0.4, -0.2).normalized();
    const auto p = pose_gripper(Vec3::Zero(), n, 20.0 * kPi / 180.0, up);
    const auto m = pose_gripper(Vec3::Zero(), n, -20.0 * kPi / 180.0, up);
    const Mat3 rel = axis_angle(-n, 40.0 * kPi / 180.0) * m.pose.linear();
    CHECK((rel - p.pose.linear()).norm() < 1e-12);
  }
}

TEST_CASE("closing") {
  const GripperModel g;
  const auto pose = pose_gripper(Vec3::Zero(), Vec3(-1, 0, 0), 0.0, Vec3::UnitZ()).pose;
  SUBCASE("walls 40 mm apart") {
    const auto cloud = walls(40.0);
    const surface::CloudColumns cols(cloud);
    const auto r = close_gripper(pose, g, {&cloud, &cols, {}}, {}, kWallOrigin);
    REQUIRE(r.closed);
    CHECK(std::abs(r.opening - 40.0) <= 1.0);
    REQUIRE(r.contacts.size() == 2);
    CHECK(r.contacts[0].position.x() == doctest::Approx(0.0));
    CHECK(r.contacts[1].position.x() == doctest::Approx(40.0));
    CHECK(angle_between(r.contacts[0].normal, r.contacts[1].normal) == doctest::Approx(kPi));
    CHECK(contact_angle_score(r.contacts, 0.8) == doctest::Approx(1.0));
  }
  SUBCASE("walls wider than the opening") {
    const auto cloud = walls(100.0);
    const surface::CloudColumns cols(cloud);
    CHECK_FALSE(close_gripper(pose, g, {&cloud, &cols, {}}).closed);
  }
  SUBCASE("single point") {
    surface::SurfaceCloud cloud;
    cloud.points.push_back({Vec3::Zero(), Vec3(-1, 0, 0), 0.5, 0.0});
    const surface::CloudColumns cols(cloud);
    CHECK_FALSE(close_gripper(pose, g, {&cloud, &cols, {}}, {}, 0).closed);
  }
  SUBCASE("sampled point must sit under the fixed pad") {
    const auto cloud = walls(40.0);
    const surface::CloudColumns cols(cloud);
    const auto off = pose_gripper(Vec3(-30, 0, 0), Vec3(-1, 0, 0), 0.0, Vec3::UnitZ()).pose;
    try {
      (void)close_gripper(off, g, {&cloud, &cols, {}}, {}, 0);
      FAIL("expected InvalidPose");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidPose);
    }
  }
}

TEST_CASE("table collision") {
  const GripperModel g;
  // fingertips point straight down; the lowest vertices sit pad_height/2 below the origin
  Pose p = Pose::Identity();
  p.linear() << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  auto at = [&](double z) {
    Pose q = p;
    q.translation() = Vec3(0, 0, z);
    return q;
  };
  const TablePlane table;
  CHECK(check_collision(at(107.5), g, table, 40.0, 2.0));
  CHECK_FALSE(check_collision(at(6.5), g, table, 40.0, 2.0));  // 1 mm below
  CHECK_FALSE(check_collision(at(9.5), g, table, 40.0, 2.0));  // exactly at the margin
  CHECK(check_collision(at(9.5 + 1e-9), g, table, 40.0, 2.0));
  CHECK(body_vertices(at(50), g, 40.0).size() == 24);
}

TEST_CASE("baseline plan on a box is antipodal and refinement never loses") {
  const auto box = tgtest::gt_object("box", 6000, 2, translated(0, 0, 30));
  const auto cloud = gt_cloud(box);
  PlanConfig cfg;
  cfg.seed = 5;
  const ScoreConfig sc;
  const auto r = plan(cloud, nullptr, nullptr, cfg, sc);
  CHECK(r.baseline);
  REQUIRE(r.stats.scored > 0);
  CHECK(r.ranked.size() == cfg.n_samples * static_cast<std::size_t>(cfg.rotations));
  CHECK(r.stats.scored + r.stats.unclosed + r.stats.collided + r.stats.invalid_pose == r.ranked.size());
  const auto& best = r.refined.grasp;
  REQUIRE(best.contacts.size() == 2);
  CHECK(angle_between(best.contacts[0].normal, best.contacts[1].normal) > kPi - sc.friction_cone);
  CHECK(std::abs(best.opening - 60.0) <= 2.0);
  for (std::size_t i = 1; i < r.refined.history.size(); ++i) CHECK(r.refined.history[i] >= r.refined.history[i - 1]);
  CHECK(r.refined.history.size() == static_cast<std::size_t>(cfg.refine_iterations) + 1);
  for (std::size_t i = 1; i < r.stats.scored; ++i) CHECK(r.ranked[i - 1].score.total >= r.ranked[i].score.total);

  const auto again = plan(cloud, nullptr, nullptr, cfg, sc);
  CHECK(nlohmann::json(to_json(again)).dump() == nlohmann::json(to_json(r)).dump());
}

TEST_CASE("constant task scores rank like baseline") {
  const auto box = tgtest::gt_object("box", 3000, 3, translated(0, 0, 30));
  const auto cloud = gt_cloud(box);
  PlanConfig cfg;
  cfg.n_samples = 20;
  const ScoreConfig sc;
  const std::vector<double> ones(cloud.size(), 1.0);
  const auto base = plan_with_scores(cloud, {}, true, cfg, sc);
  const auto task = plan_with_scores(cloud, ones, false, cfg, sc);
  CHECK(base.samples == task.samples);
  REQUIRE(base.ranked.size() == task.ranked.size());
  const double w12 = sc.weights[0] + sc.weights[1];
  std::map<std::size_t, double> base_total;
  for (const auto& c : base.ranked) base_total[c.id] = c.score.total;
  for (std::size_t i = 0; i < base.ranked.size(); ++i) {
    // symmetric shapes give exact ties in the baseline; rounding may reorder those
    if (base.ranked[i].id != task.ranked[i].id)
      CHECK(std::abs(base_total[task.ranked[i].id] - base.ranked[i].score.total) <= 1e-12);
    if (base.ranked[i].status != CandidateStatus::Scored) {
      CHECK(task.ranked[i].score.total == 0.0);
      continue;
    }
    CHECK(task.ranked[i].score.total ==
          doctest::Approx(w12 * base.ranked[i].score.total + sc.weights[2]).epsilon(1e-12));
  }
}

TEST_CASE("handle-biased model steers sampling onto the handle") {
  const auto hammer = tgtest::gt_object("hammer", 8000, 4, translated(0, 0, 40));
  task::ExemplarAnnotation a;
  a.class_name = "hammer";
  a.task = "handle";
  a.exemplar = hammer.skeleton;
  for (std::size_t i = 0; i < hammer.surface.cloud.size(); ++i)
    if (hammer.in_part(i, "handle") && hammer.surface.local[i].x() > 60.0 && hammer.surface.local[i].x() < 140.0)
      a.grasp_points.push_back(hammer.surface.cloud.points[i].position);
  const auto model = task::train(a);
  const auto cloud = gt_cloud(hammer);
  const auto scores = task::score_surface(&model, &hammer.skeleton, cloud.positions()).scores;
  std::size_t high = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = sample_start_points(cloud.size(), scores, 45, seed);
    for (auto i : s.indices) {
      ++total;
      high += hammer.in_part(i, "handle");
    }
  }
  CHECK(static_cast<double>(high) / static_cast<double>(total) >= 0.8);
}

TEST_CASE("nothing scores when the table sits above the object") {
  const auto box = tgtest::gt_object("box", 2000, 5, translated(0, 0, 30));
  const auto cloud = gt_cloud(box);
  PlanConfig cfg;
  cfg.n_samples = 10;
  cfg.table.offset = 200.0;
  try {
    (void)plan(cloud, nullptr, nullptr, cfg, {});
    FAIL("expected NoGraspFound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoGraspFound);
    CHECK(std::string(e.what()).find("collided") != std::string::npos);
  }
}

TEST_CASE("config json round trip") {
  PlanConfig p;
  p.n_samples = 7;
  p.table.offset = -3.0;
  const auto q = plan_config_from_json(to_json(p));
  CHECK(q.n_samples == 7);
  CHECK(q.table.offset == -3.0);
  CHECK(to_json(q) == to_json(p));
  GripperModel g;
  g.max_opening = 90.0;
  CHECK(to_json(gripper_from_json(to_json(g))) == to_json(g));
  CHECK_THROWS_AS((void)gripper_from_json(nlohmann::json{{"max_opening", -1.0}}), Error);
}
