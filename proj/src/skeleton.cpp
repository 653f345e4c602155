#include "taskgrasp/skeleton.hpp"

#include "taskgrasp/error.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace taskgrasp::skeleton {

void SkeletonSpec::validate() const {
  const int n = static_cast<int>(keypoints.size());
  if (n == 0) fail(ErrorKind::InvalidInput, "skeleton spec has no keypoints");
  std::set<std::string> names(keypoints.begin(), keypoints.end());
  if (names.size() != keypoints.size())
    fail(ErrorKind::InvalidInput, "keypoint names must be unique");
  if (frame_rules.size() != links.size())
    fail(ErrorKind::InvalidInput, "every link needs a frame rule");
  for (std::size_t l = 0; l < links.size(); ++l) {
    const auto& [a, b] = links[l];
    if (a < 0 || b < 0 || a >= n || b >= n || a == b)
      fail(ErrorKind::InvalidInput, "link " + std::to_string(l) + " has invalid keypoint indices");
    const auto& rule = frame_rules[l];
    if (rule.reference != a && rule.reference != b)
      fail(ErrorKind::InvalidInput, "frame rule reference must be an endpoint of its link");
    if (rule.third && (*rule.third < 0 || *rule.third >= n || *rule.third == a || *rule.third == b))
      fail(ErrorKind::InvalidInput, "frame rule third keypoint must be a different keypoint");
  }
}

int SkeletonSpec::keypoint_index(const std::string& name) const {
  const auto it = std::find(keypoints.begin(), keypoints.end(), name);
  return it == keypoints.end() ? -1 : static_cast<int>(it - keypoints.begin());
}

namespace {

// y, z from the cloud's principal directions orthogonal to x. Signs are made
// intrinsic to the shape: z points along positive skew (third central moment)
// of the cloud; symmetric clouds fall back to world +z.
Mat3 eigen_frame(const Vec3& x, std::span<const Vec3> cloud) {
  if (cloud.size() < 3) fail(ErrorKind::FrameUndefined, "eigenvector frame needs an object cloud");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : cloud) mean += p;
  mean /= static_cast<double>(cloud.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : cloud) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(cloud.size());
  const Mat3 proj = Mat3::Identity() - x * x.transpose();
  const Mat3 c2 = proj * cov * proj;
  const Eigen::SelfAdjointEigenSolver<Mat3> es(c2);
  // Largest eigenvalue is last.
  Vec3 y = es.eigenvectors().col(2);
  y = (y - y.dot(x) * x);
  if (y.norm() < 1e-9) fail(ErrorKind::FrameUndefined, "object cloud is degenerate");
  y.normalize();
  Vec3 z = x.cross(y).normalized();

  double m3 = 0.0, m2 = 0.0;
  for (const auto& p : cloud) {
    const double s = (p - mean).dot(z);
    m2 += s * s;
    m3 += s * s * s;
  }
  m2 /= static_cast<double>(cloud.size());
  m3 /= static_cast<double>(cloud.size());
  const double sd = std::sqrt(m2);
  bool flip;
  if (sd > 0.0 && std::abs(m3) > 1e-6 * sd * sd * sd)
    flip = m3 < 0.0;
  else
    flip = z.z() < 0.0;
  if (flip) z = -z;
  y = z.cross(x);
  Mat3 f;
  f.col(0) = x;
  f.col(1) = y;
  f.col(2) = z;
  return f;
}

}  // namespace

void build_frames(Skeleton& skel, std::span<const Vec3> cloud, const FrameOptions& opts) {
  const auto& spec = skel.spec;
  const std::size_t n = spec.keypoints.size();
  skel.frames.assign(n, Mat3::Identity());
  skel.eigen_frame.assign(n, false);
  std::vector<bool> done(n, false);
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    const auto& link = spec.links[l];
    const auto& rule = spec.frame_rules[l];
    const int ref = rule.reference;
    const int other = ref == link[0] ? link[1] : link[0];
    const Vec3 axis = skel.keypoints[static_cast<std::size_t>(other)] - skel.keypoints[static_cast<std::size_t>(ref)];

    std::optional<Vec3> plane_normal;
    if (rule.third && !rule.eigen_fallback) {
      const Vec3 to_third =
          skel.keypoints[static_cast<std::size_t>(*rule.third)] - skel.keypoints[static_cast<std::size_t>(ref)];
      const Vec3 cr = axis.cross(to_third);
      const double sine = cr.norm() / (axis.norm() * to_third.norm());
      if (std::isfinite(sine) && sine > opts.collinear_sine) plane_normal = cr.normalized();
    }

    for (int kp : {link[0], link[1]}) {
      const auto k = static_cast<std::size_t>(kp);
      if (done[k]) continue;
      const int far = kp == link[0] ? link[1] : link[0];
      const Vec3 x = (skel.keypoints[static_cast<std::size_t>(far)] - skel.keypoints[k]).normalized();
      if (plane_normal) {
        Mat3 f;
        f.col(0) = x;
        f.col(2) = *plane_normal;
        f.col(1) = plane_normal->cross(x);
        skel.frames[k] = f;
      } else {
        if (cloud.empty())
          fail(ErrorKind::FrameUndefined,
               "keypoint '" + spec.keypoints[k] + "' needs the cloud fallback but no cloud was given");
        skel.frames[k] = eigen_frame(x, cloud);
        skel.eigen_frame[k] = true;
      }
      done[k] = true;
    }
  }
}

Skeleton build_skeleton(const SkeletonSpec& spec, std::vector<Vec3> keypoints,
                        std::span<const Vec3> cloud, const FrameOptions& opts) {
  spec.validate();
  if (keypoints.size() != spec.keypoints.size())
    fail(ErrorKind::InvalidInput, "keypoint count does not match the spec");
  Skeleton s;
  s.spec = spec;
  s.keypoints = std::move(keypoints);
  for (const auto& link : spec.links) {
    const double len = (s.keypoints[static_cast<std::size_t>(link[1])] -
                        s.keypoints[static_cast<std::size_t>(link[0])]).norm();
    if (!(len > 0.0)) fail(ErrorKind::DegenerateGeometry, "link has zero length");
    s.link_lengths.push_back(len);
  }
  build_frames(s, cloud, opts);
  return s;
}

std::vector<TriangulatedKeypoint> triangulate_keypoints(
    std::span<const KeypointObservation> observations, int keypoint_count,
    const TriangulationOptions& opts) {
  if (keypoint_count <= 0) fail(ErrorKind::InvalidInput, "keypoint count must be positive");
  struct Ray {
    int view;
    Vec3 origin, dir;
  };
  std::vector<std::vector<Ray>> rays(static_cast<std::size_t>(keypoint_count));
  for (const auto& ob : observations) {
    if (ob.keypoint < 0 || ob.keypoint >= keypoint_count)
      fail(ErrorKind::InvalidInput, "observation keypoint index out of range");
    ob.intrinsics.validate();
    if (!(ob.u >= 0.0 && ob.v >= 0.0 && ob.u <= ob.intrinsics.x_res - 1 &&
          ob.v <= ob.intrinsics.y_res - 1))
      fail(ErrorKind::InvalidInput, "observation pixel outside the image");
    if (!is_rigid(ob.camera_pose)) fail(ErrorKind::InvalidPose, "observation pose is not rigid");
    const double f = ob.intrinsics.focal();
    const Vec3 dc((ob.u - ob.intrinsics.cx) / f, (ob.v - ob.intrinsics.cy) / f, 1.0);
    rays[static_cast<std::size_t>(ob.keypoint)].push_back(
        {ob.view, ob.camera_pose.translation(), (ob.camera_pose.rotation() * dc).normalized()});
  }

  std::vector<TriangulatedKeypoint> out(static_cast<std::size_t>(keypoint_count));
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& rs = rays[k];
    std::set<int> views;
    for (const auto& r : rs) views.insert(r.view);
    out[k].views = static_cast<int>(views.size());
    if (out[k].views < opts.min_views) continue;

    double spread = 0.0, scale = 0.0;
    for (const auto& r : rs) {
      scale = std::max(scale, r.origin.norm());
      for (const auto& q : rs) spread = std::max(spread, (r.origin - q.origin).norm());
    }
    if (spread <= 1e-9 * std::max(1.0, scale))
      fail(ErrorKind::DegenerateGeometry,
           "keypoint " + std::to_string(k) + ": all views share one camera centre");

    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const auto& r : rs) {
      const Mat3 p = Mat3::Identity() - r.dir * r.dir.transpose();
      a += p;
      b += p * r.origin;
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> es(a);
    const Vec3 ev = es.eigenvalues();
    if (!(ev[0] > opts.min_conditioning * ev[2]))
      fail(ErrorKind::DegenerateGeometry,
           "keypoint " + std::to_string(k) + ": rays are nearly parallel");
    const Vec3 x = a.ldlt().solve(b);
    double sq = 0.0;
    for (const auto& r : rs) {
      const Vec3 d = x - r.origin;
      sq += (d - d.dot(r.dir) * r.dir).squaredNorm();
    }
    out[k].position = x;
    out[k].residual = std::sqrt(sq / static_cast<double>(rs.size()));
  }
  return out;
}

Spherical to_spherical(const Mat3& frame, const Vec3& keypoint, double link_length,
                       const Vec3& point) {
  if (!(link_length > 0.0)) fail(ErrorKind::InvalidInput, "link length must be positive");
  const Vec3 local = frame.transpose() * (point - keypoint);
  const double len = local.norm();
  if (!(len > 0.0)) fail(ErrorKind::UndefinedDirection, "point coincides with the keypoint");
  const Vec3 s = local * (link_length / len);
  Spherical out;
  if (s.x() == 0.0 && s.y() == 0.0) {
    out.theta = 0.0;
  } else {
    out.theta = std::atan2(s.y(), s.x());
    if (out.theta <= -std::numbers::pi) out.theta = std::numbers::pi;
  }
  out.phi = std::acos(std::clamp(s.z() / link_length, -1.0, 1.0));
  return out;
}

double link_distance(const Skeleton& skel, std::size_t link, const Vec3& point) {
  const auto& l = skel.spec.links[link];
  return point_segment_distance(point, skel.keypoints[static_cast<std::size_t>(l[0])],
                                skel.keypoints[static_cast<std::size_t>(l[1])]);
}

std::size_t nearest_link(const Skeleton& skel, const Vec3& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < skel.link_count(); ++l) {
    const double d = link_distance(skel, l, point);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

SkeletonSpec spec_from_json(const nlohmann::json& j) {
  SkeletonSpec s;
  try {
    s.class_name = j.at("class").get<std::string>();
    s.keypoints = j.at("keypoints").get<std::vector<std::string>>();
    for (const auto& l : j.at("links")) s.links.push_back({l.at(0).get<int>(), l.at(1).get<int>()});
    if (j.contains("frame_rules")) {
      for (const auto& r : j.at("frame_rules")) {
        FrameRule rule;
        rule.reference = r.at("reference").get<int>();
        if (r.contains("third") && !r.at("third").is_null()) rule.third = r.at("third").get<int>();
        rule.eigen_fallback = r.value("eigen", false);
        s.frame_rules.push_back(rule);
      }
    } else {
      for (const auto& l : s.links) s.frame_rules.push_back({l[0], std::nullopt, true});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("skeleton spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SkeletonSpec& spec) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : spec.frame_rules) {
    nlohmann::json jr = {{"reference", r.reference}, {"eigen", r.eigen_fallback}};
    jr["third"] = r.third ? nlohmann::json(*r.third) : nlohmann::json(nullptr);
    rules.push_back(jr);
  }
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : spec.links) links.push_back({l[0], l[1]});
  return {{"class", spec.class_name},
          {"keypoints", spec.keypoints},
          {"links", links},
          {"frame_rules", rules}};
}

nlohmann::json to_json(const Skeleton& skel) {
  nlohmann::json j = to_json(skel.spec);
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& p : skel.keypoints) pos.push_back({p.x(), p.y(), p.z()});
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : skel.frames) {
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.push_back(f(r, c));
    frames.push_back(m);
  }
  j["positions"] = pos;
  j["link_lengths"] = skel.link_lengths;
  j["frames"] = frames;
  j["eigen_frames"] = skel.eigen_frame;
  return j;
}

Skeleton skeleton_from_json(const nlohmann::json& j) {
  Skeleton s;
  s.spec = spec_from_json(j);
  try {
    for (const auto& p : j.at("positions")) {
      if (p.is_null()) fail(ErrorKind::InvalidInput, "skeleton instance has missing keypoints");
      s.keypoints.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    }
    if (s.keypoints.size() != s.spec.keypoints.size())
      fail(ErrorKind::InvalidInput, "skeleton positions do not match keypoints");
    for (const auto& link : s.spec.links)
      s.link_lengths.push_back((s.keypoints[static_cast<std::size_t>(link[1])] -
                                s.keypoints[static_cast<std::size_t>(link[0])]).norm());
    for (const auto& m : j.at("frames")) {
      Mat3 f;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) f(r, c) = m.at(static_cast<std::size_t>(r * 3 + c)).get<double>();
      s.frames.push_back(f);
    }
    if (s.frames.size() != s.keypoints.size())
      fail(ErrorKind::InvalidInput, "skeleton frames do not match keypoints");
    if (j.contains("eigen_frames")) s.eigen_frame = j.at("eigen_frames").get<std::vector<bool>>();
    else s.eigen_frame.assign(s.keypoints.size(), false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("skeleton instance: ") + e.what());
  }
  return s;
}

std::vector<KeypointObservation> observations_from_jsonl(const std::string& text) {
  std::vector<KeypointObservation> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      KeypointObservation ob;
      ob.view = j.at("view").get<int>();
      ob.keypoint = j.at("keypoint").get<int>();
      ob.u = j.at("u").get<double>();
      ob.v = j.at("v").get<double>();
      const auto pose = j.at("pose").get<std::vector<double>>();
      ob.camera_pose.matrix() = matrix_from_row_major(pose);
      ob.intrinsics = sensor::intrinsics_from_json(j.at("intrinsics"));
      out.push_back(ob);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::InvalidInput, "observations line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace taskgrasp::skeleton
