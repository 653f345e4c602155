#include "taskgrasp/synth.hpp"

#include "taskgrasp/error.hpp"
#include "taskgrasp/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace taskgrasp::synth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = std::numbers::pi / 180.0;

const std::map<std::string, std::map<std::string, double>>& catalogue() {
  static const std::map<std::string, std::map<std::string, double>> c = {
      {"sphere", {{"radius", 50.0}}},
      {"box", {{"x", 60.0}, {"y", 60.0}, {"z", 60.0}}},
      {"cylinder", {{"radius", 20.0}, {"length", 120.0}}},
      {"hammer",
       {{"handle_length", 200.0}, {"handle_radius", 12.0}, {"head_length", 100.0}, {"head_width", 25.0}}},
      {"screwdriver",
       {{"handle_length", 100.0},
        {"handle_radius", 15.0},
        {"shaft_length", 80.0},
        {"shaft_radius", 4.0},
        {"tip_length", 10.0},
        {"tip_width", 8.0},
        {"tip_thickness", 2.0}}},
      {"brush",
       {{"handle_length", 150.0},
        {"handle_radius", 10.0},
        {"head_length", 70.0},
        {"head_width", 40.0},
        {"head_height", 25.0},
        {"head_offset", 6.0}}},
      {"cup",
       {{"radius", 40.0},
        {"height", 90.0},
        {"handle_reach", 22.0},
        {"handle_width", 10.0},
        {"handle_height", 50.0}}},
      {"mesh", {}},
  };
  return c;
}

std::map<std::string, double> resolved_dims(const ShapeSpec& spec) {
  auto dims = default_dims(spec.type);
  for (const auto& [k, v] : spec.dims) {
    if (!dims.contains(k)) fail(ErrorKind::InvalidInput, "shape '" + spec.type + "' has no dimension '" + k + "'");
    dims[k] = v;
  }
  for (const auto& [k, v] : dims)
    if (!(v > 0.0) || !std::isfinite(v))
      fail(ErrorKind::InvalidInput, "dimension '" + k + "' must be positive");
  return dims;
}

Pose translation(double x, double y, double z) {
  Pose p = Pose::Identity();
  p.translation() = Vec3(x, y, z);
  return p;
}

Primitive make_cylinder(const Pose& pose, double radius, double length, std::string part) {
  Primitive p;
  p.kind = Primitive::Kind::Cylinder;
  p.pose = pose;
  p.radius = radius;
  p.length = length;
  p.part = std::move(part);
  return p;
}

Primitive make_box(const Pose& pose, const Vec3& half, std::string part) {
  Primitive p;
  p.kind = Primitive::Kind::Box;
  p.pose = pose;
  p.half = half;
  p.part = std::move(part);
  return p;
}

// Object-frame primitives of a parametric shape.
std::vector<Primitive> build_primitives(const std::string& type, const std::map<std::string, double>& d) {
  std::vector<Primitive> out;
  if (type == "sphere") {
    Primitive p;
    p.kind = Primitive::Kind::Sphere;
    p.radius = d.at("radius");
    p.part = "body";
    out.push_back(p);
  } else if (type == "box") {
    out.push_back(make_box(Pose::Identity(), Vec3(d.at("x"), d.at("y"), d.at("z")) / 2.0, "body"));
  } else if (type == "cylinder") {
    const double l = d.at("length");
    out.push_back(make_cylinder(translation(-l / 2.0, 0, 0), d.at("radius"), l, "body"));
  } else if (type == "hammer") {
    const double l = d.at("handle_length"), hw = d.at("head_width");
    out.push_back(make_cylinder(Pose::Identity(), d.at("handle_radius"), l, "handle"));
    out.push_back(make_box(translation(l + hw / 2.0, 0, 0), Vec3(hw / 2.0, d.at("head_length") / 2.0, hw / 2.0),
                           "head"));
  } else if (type == "screwdriver") {
    const double lh = d.at("handle_length"), ls = d.at("shaft_length"), lt = d.at("tip_length");
    out.push_back(make_cylinder(Pose::Identity(), d.at("handle_radius"), lh, "handle"));
    out.push_back(make_cylinder(translation(lh, 0, 0), d.at("shaft_radius"), ls, "shaft"));
    out.push_back(make_box(translation(lh + ls + lt / 2.0, 0, 0),
                           Vec3(lt / 2.0, d.at("tip_width") / 2.0, d.at("tip_thickness") / 2.0), "tip"));
  } else if (type == "brush") {
    const double lh = d.at("handle_length"), hl = d.at("head_length");
    out.push_back(make_cylinder(Pose::Identity(), d.at("handle_radius"), lh, "handle"));
    // Head hangs below the handle axis so the cross-section is not symmetric.
    out.push_back(make_box(translation(lh + hl / 2.0, 0, -d.at("head_offset")),
                           Vec3(hl / 2.0, d.at("head_width") / 2.0, d.at("head_height") / 2.0), "head"));
  } else if (type == "cup") {
    const double r = d.at("radius"), h = d.at("height"), reach = d.at("handle_reach");
    Pose up = Pose::Identity();
    up.linear() = axis_angle(Vec3::UnitY(), -std::numbers::pi / 2.0);  // local x -> world z
    out.push_back(make_cylinder(up, r, h, "body"));
    out.push_back(make_box(translation(r + (reach - 2.0) / 2.0, 0, h / 2.0),
                           Vec3((reach + 2.0) / 2.0, d.at("handle_width") / 2.0, d.at("handle_height") / 2.0),
                           "handle"));
  }
  if (type != "mesh" && type != "sphere" && out.empty())
    fail(ErrorKind::InvalidInput, "unknown shape type '" + type + "'");
  return out;
}

// Ray/primitive in the primitive frame: entry/exit parameters and the
// outward normal at entry.
struct Interval {
  double t_in = -kInf, t_out = kInf;
  Vec3 n_in = Vec3::Zero();
};

bool clip_slab(double o, double d, double lo, double hi, int axis, Interval& iv) {
  if (d == 0.0) return o >= lo && o <= hi;
  double t0 = (lo - o) / d, t1 = (hi - o) / d;
  Vec3 n0 = Vec3::Zero();
  n0[axis] = -1.0;
  if (t0 > t1) {
    std::swap(t0, t1);
    n0[axis] = 1.0;
  }
  if (t0 > iv.t_in) {
    iv.t_in = t0;
    iv.n_in = n0;
  }
  iv.t_out = std::min(iv.t_out, t1);
  return iv.t_in <= iv.t_out;
}

std::optional<Interval> ray_local(const Primitive& p, const Vec3& o, const Vec3& d) {
  Interval iv;
  switch (p.kind) {
    case Primitive::Kind::Sphere: {
      const double a = d.dot(d), b = o.dot(d), c = o.dot(o) - p.radius * p.radius;
      const double disc = b * b - a * c;
      if (disc < 0.0) return std::nullopt;
      const double s = std::sqrt(disc);
      iv.t_in = (-b - s) / a;
      iv.t_out = (-b + s) / a;
      iv.n_in = (o + iv.t_in * d) / p.radius;
      return iv;
    }
    case Primitive::Kind::Box:
      for (int k = 0; k < 3; ++k)
        if (!clip_slab(o[k], d[k], -p.half[k], p.half[k], k, iv)) return std::nullopt;
      return iv;
    case Primitive::Kind::Cylinder: {
      const double a = d.y() * d.y() + d.z() * d.z();
      const double b = o.y() * d.y() + o.z() * d.z();
      const double c = o.y() * o.y() + o.z() * o.z() - p.radius * p.radius;
      if (a > 0.0) {
        const double disc = b * b - a * c;
        if (disc < 0.0) return std::nullopt;
        const double s = std::sqrt(disc);
        iv.t_in = (-b - s) / a;
        iv.t_out = (-b + s) / a;
        const Vec3 q = o + iv.t_in * d;
        iv.n_in = Vec3(0.0, q.y(), q.z()) / p.radius;
      } else if (c > 0.0) {
        return std::nullopt;
      }
      if (!clip_slab(o.x(), d.x(), 0.0, p.length, 0, iv)) return std::nullopt;
      return iv;
    }
  }
  return std::nullopt;
}

double sdf_local(const Primitive& p, const Vec3& q) {
  switch (p.kind) {
    case Primitive::Kind::Sphere:
      return q.norm() - p.radius;
    case Primitive::Kind::Box: {
      const Vec3 e = q.cwiseAbs() - p.half;
      return e.cwiseMax(0.0).norm() + std::min(e.maxCoeff(), 0.0);
    }
    case Primitive::Kind::Cylinder: {
      const double dr = std::hypot(q.y(), q.z()) - p.radius;
      const double dx = std::abs(q.x() - p.length / 2.0) - p.length / 2.0;
      return std::hypot(std::max(dr, 0.0), std::max(dx, 0.0)) + std::min(std::max(dr, dx), 0.0);
    }
  }
  return kInf;
}

double primitive_area(const Primitive& p) {
  switch (p.kind) {
    case Primitive::Kind::Sphere: return 4.0 * std::numbers::pi * p.radius * p.radius;
    case Primitive::Kind::Box:
      return 8.0 * (p.half.x() * p.half.y() + p.half.y() * p.half.z() + p.half.x() * p.half.z());
    case Primitive::Kind::Cylinder:
      return 2.0 * std::numbers::pi * p.radius * (p.length + p.radius);
  }
  return 0.0;
}

// Uniform point on the primitive's surface (local frame) with its normal.
std::pair<Vec3, Vec3> sample_local(const Primitive& p, Rng& rng) {
  switch (p.kind) {
    case Primitive::Kind::Sphere: {
      Vec3 n;
      do {
        n = Vec3(rng.normal(), rng.normal(), rng.normal());
      } while (n.norm() < 1e-12);
      n.normalize();
      return {p.radius * n, n};
    }
    case Primitive::Kind::Box: {
      const Vec3& h = p.half;
      const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
      double r = rng.uniform() * (areas[0] + areas[1] + areas[2]);
      int axis = 0;
      while (axis < 2 && r >= areas[axis]) r -= areas[axis++];
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      Vec3 q(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()), rng.uniform(-h.z(), h.z()));
      q[axis] = sign * h[axis];
      Vec3 n = Vec3::Zero();
      n[axis] = sign;
      return {q, n};
    }
    case Primitive::Kind::Cylinder: {
      const double lateral = p.length, cap = p.radius / 2.0;  // areas / (2 pi r)
      const double r = rng.uniform() * (lateral + 2.0 * cap);
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      if (r < lateral) {
        const Vec3 n(0.0, std::cos(a), std::sin(a));
        return {Vec3(rng.uniform(0.0, p.length), 0, 0) + p.radius * n, n};
      }
      const double rad = p.radius * std::sqrt(rng.uniform());
      const bool far = r >= lateral + cap;
      return {Vec3(far ? p.length : 0.0, rad * std::cos(a), rad * std::sin(a)), Vec3(far ? 1.0 : -1.0, 0, 0)};
    }
  }
  return {Vec3::Zero(), Vec3::UnitX()};
}

// Moller-Trumbore; returns t of the hit (front or back face).
std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double den = 1.0 / (va + vb + vc);
  return a + ab * (vb * den) + ac * (vc * den);
}

// Parity along three skewed rays, majority vote: a single ray through a
// vertex or edge double-counts (the (1,1,1) diagonal of a centred cube does).
bool mesh_inside(const TriMesh& m, const Vec3& p) {
  static const std::array<Vec3, 3> dirs = {Vec3(0.4183, 0.7071, 0.5701).normalized(),
                                           Vec3(-0.6237, 0.2911, 0.7253).normalized(),
                                           Vec3(0.3319, -0.8417, 0.4259).normalized()};
  int votes = 0;
  for (const auto& dir : dirs) {
    int crossings = 0;
    for (const auto& t : m.triangles)
      if (ray_triangle(p, dir, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]])) ++crossings;
    votes += crossings % 2;
  }
  return votes >= 2;
}

std::uint64_t noise_key(std::uint64_t seed, int view, std::size_t pixel) {
  return splitmix64(splitmix64(seed ^ 0x6a09e667f3bcc909ULL) +
                    static_cast<std::uint64_t>(view) * 0x9e3779b97f4a7c15ULL + pixel);
}

double standard_normal(std::uint64_t key) {
  const double u1 = (static_cast<double>(splitmix64(key) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(splitmix64(key + 1) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec3 vec_from(const nlohmann::json& j, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) fail(ErrorKind::InvalidInput, std::string(what) + " needs three entries");
  return Vec3(v[0], v[1], v[2]);
}

}  // namespace

std::map<std::string, double> default_dims(const std::string& type) {
  const auto& c = catalogue();
  const auto it = c.find(type);
  if (it == c.end()) fail(ErrorKind::InvalidInput, "unknown shape type '" + type + "'");
  return it->second;
}

void SceneSpec::validate() const {
  resolved_dims(object);
  if (object.type == "mesh" && object.obj_path.empty())
    fail(ErrorKind::InvalidInput, "mesh shape needs obj_path");
  if (!is_rigid(object.pose)) fail(ErrorKind::InvalidPose, "object pose is not rigid");
  if (cameras.count < 1) fail(ErrorKind::InvalidInput, "camera count must be at least 1");
  if (!(cameras.radius > 0.0)) fail(ErrorKind::InvalidInput, "camera radius must be positive");
  cameras.intrinsics.validate();
  if (!(noise.scale >= 0.0)) fail(ErrorKind::InvalidInput, "noise scale must be non-negative");
  if (!(std::abs(table.normal.norm() - 1.0) < 1e-9)) fail(ErrorKind::InvalidInput, "table normal must be unit");
}

TriMesh parse_obj(const std::string& text) {
  TriMesh m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) fail(ErrorKind::InvalidInput, "OBJ line " + std::to_string(lineno) + ": bad vertex");
      m.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        const int n = static_cast<int>(m.vertices.size());
        const int r = i < 0 ? n + i : i - 1;
        if (i == 0 || r < 0 || r >= n)
          fail(ErrorKind::InvalidInput, "OBJ line " + std::to_string(lineno) + ": vertex index out of range");
        idx.push_back(r);
      }
      if (idx.size() < 3) fail(ErrorKind::InvalidInput, "OBJ line " + std::to_string(lineno) + ": face needs 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (m.triangles.empty()) fail(ErrorKind::InvalidInput, "OBJ has no faces");
  return m;
}

TriMesh load_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open OBJ file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_obj(ss.str());
}

Shape::Shape(const ShapeSpec& spec) : type_(spec.type) {
  const auto dims = resolved_dims(spec);
  if (type_ == "mesh") {
    if (spec.obj_path.empty()) fail(ErrorKind::InvalidInput, "mesh shape needs obj_path");
    mesh_ = load_obj(spec.obj_path);
    for (auto& v : mesh_.vertices) v = spec.pose * v;
    parts_ = {"mesh"};
    return;
  }
  prims_ = build_primitives(type_, dims);
  for (auto& p : prims_) {
    p.pose = spec.pose * p.pose;
    if (std::find(parts_.begin(), parts_.end(), p.part) == parts_.end()) parts_.push_back(p.part);
  }
}

std::optional<RayHit> Shape::intersect(const Vec3& o, const Vec3& d) const {
  std::optional<RayHit> best;
  if (!mesh_.triangles.empty()) {
    for (const auto& t : mesh_.triangles) {
      const Vec3 &a = mesh_.vertices[t[0]], &b = mesh_.vertices[t[1]], &c = mesh_.vertices[t[2]];
      const auto hit = ray_triangle(o, d, a, b, c);
      if (hit && (!best || *hit < best->t)) {
        const Vec3 n = (b - a).cross(c - a);
        best = RayHit{*hit, n.normalized(), 0};
      }
    }
    return best;
  }
  for (const auto& p : prims_) {
    const Mat3 r = p.pose.rotation();
    const Vec3 ol = r.transpose() * (o - p.pose.translation());
    const Vec3 dl = r.transpose() * d;
    const auto iv = ray_local(p, ol, dl);
    if (!iv || iv->t_in <= 0.0 || iv->t_in > iv->t_out) continue;
    if (!best || iv->t_in < best->t) {
      const int part = static_cast<int>(std::find(parts_.begin(), parts_.end(), p.part) - parts_.begin());
      best = RayHit{iv->t_in, r * iv->n_in, part};
    }
  }
  return best;
}

double Shape::signed_distance(const Vec3& p) const {
  if (!mesh_.triangles.empty()) {
    double best = kInf;
    for (const auto& t : mesh_.triangles)
      best = std::min(best, (p - closest_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                                     mesh_.vertices[t[2]])).norm());
    return mesh_inside(mesh_, p) ? -best : best;
  }
  double best = kInf;
  for (const auto& pr : prims_) best = std::min(best, sdf_local(pr, pr.pose.inverse() * p));
  return best;
}

int Shape::part_of(const Vec3& p) const {
  if (prims_.empty()) return 0;
  std::size_t best = 0;
  double bd = kInf;
  for (std::size_t i = 0; i < prims_.size(); ++i) {
    const double d = std::abs(sdf_local(prims_[i], prims_[i].pose.inverse() * p));
    if (d < bd) bd = d, best = i;
  }
  return static_cast<int>(std::find(parts_.begin(), parts_.end(), prims_[best].part) - parts_.begin());
}

SampledSurface sample_surface(const Shape& shape, const ShapeSpec& spec, std::size_t count, std::uint64_t seed) {
  SampledSurface out;
  Rng rng(seed);
  const Pose to_local = spec.pose.inverse();
  const auto& mesh = shape.mesh();
  if (!mesh.triangles.empty()) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& t : mesh.triangles)
      cdf.push_back(acc += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                                     .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                                     .norm());
    if (!(acc > 0.0)) fail(ErrorKind::EmptySurface, "mesh has zero area");
    while (out.cloud.size() < count) {
      auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform() * acc);
      if (it == cdf.end()) --it;
      const auto& t = mesh.triangles[static_cast<std::size_t>(it - cdf.begin())];
      double a = rng.uniform(), b = rng.uniform();
      if (a + b > 1.0) a = 1.0 - a, b = 1.0 - b;
      const Vec3 &p0 = mesh.vertices[t[0]], &p1 = mesh.vertices[t[1]], &p2 = mesh.vertices[t[2]];
      const Vec3 p = p0 + a * (p1 - p0) + b * (p2 - p0);
      out.cloud.points.push_back({p, (p1 - p0).cross(p2 - p0).normalized(), 0.0, 0.0});
      out.parts.push_back(0);
      out.local.push_back(to_local * p);
    }
    return out;
  }

  const auto& prims = shape.primitives();
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& p : prims) cdf.push_back(acc += primitive_area(p));
  while (out.cloud.size() < count) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform() * acc);
    if (it == cdf.end()) --it;
    const std::size_t k = static_cast<std::size_t>(it - cdf.begin());
    const auto [ql, nl] = sample_local(prims[k], rng);
    const Vec3 q = prims[k].pose * ql;
    // Drop points on or inside another primitive: they are not on the union
    // boundary (this also removes coincident interface faces).
    bool covered = false;
    for (std::size_t j = 0; j < prims.size() && !covered; ++j)
      if (j != k && sdf_local(prims[j], prims[j].pose.inverse() * q) <= 1e-9) covered = true;
    if (covered) continue;
    out.cloud.points.push_back({q, prims[k].pose.rotation() * nl, 0.0, 0.0});
    out.parts.push_back(static_cast<int>(
        std::find(shape.part_names().begin(), shape.part_names().end(), prims[k].part) - shape.part_names().begin()));
    out.local.push_back(to_local * q);
  }
  return out;
}

Pose camera_pose(const SceneSpec& scene, int view) {
  const auto& ring = scene.cameras;
  if (view < 0 || view >= ring.count) fail(ErrorKind::InvalidInput, "view index out of range");
  const Vec3 target = ring.target.value_or(scene.object.pose.translation());
  const double az = ring.azimuth_offset + 2.0 * std::numbers::pi * view / ring.count;
  const double ce = std::cos(ring.elevation);
  const Vec3 pos = target + ring.radius * Vec3(ce * std::cos(az), ce * std::sin(az), std::sin(ring.elevation));
  const Vec3 z = (target - pos).normalized();
  Vec3 up = scene.table.normal;
  if (std::abs(z.dot(up)) > 0.999) up = any_orthogonal(up);
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Pose p = Pose::Identity();
  p.linear().col(0) = x;
  p.linear().col(1) = y;
  p.linear().col(2) = z;
  p.translation() = pos;
  return p;
}

fusion::DepthFrame render_depth(const SceneSpec& scene, int view) {
  scene.validate();
  return render_depth(scene, Shape(scene.object), view);
}

fusion::DepthFrame render_depth(const SceneSpec& scene, const Shape& shape, int view) {
  const Pose cam = camera_pose(scene, view);
  if (shape.signed_distance(cam.translation()) <= 0.0)
    fail(ErrorKind::DegenerateGeometry, "camera " + std::to_string(view) + " is inside the object");
  const auto& intr = scene.cameras.intrinsics;
  const double f = intr.focal();
  fusion::DepthFrame fr;
  fr.width = intr.x_res;
  fr.height = intr.y_res;
  fr.pose = cam;
  fr.intrinsics = intr;
  const std::size_t n = static_cast<std::size_t>(fr.width) * fr.height;
  fr.depth.assign(n, 0.0);
  fr.mask.assign(n, 0);
  const Mat3 r = cam.rotation();
  const Vec3 o = cam.translation();
  constexpr double theta_cap = sensor::kDefaultGrazingClamp - 1e-9;
  for (int v = 0; v < fr.height; ++v)
    for (int u = 0; u < fr.width; ++u) {
      // Camera-frame ray with unit z, so the hit parameter is the depth.
      const Vec3 dc((u - intr.cx) / f, (v - intr.cy) / f, 1.0);
      const Vec3 dw = r * dc;
      const auto hit = shape.intersect(o, dw);
      if (!hit) continue;
      const std::size_t idx = static_cast<std::size_t>(v) * fr.width + u;
      double depth = hit->t;
      if (scene.noise.enabled && scene.noise.scale > 0.0) {
        const double c = std::abs(hit->normal.dot(dw.normalized()));
        const double theta = std::min(std::acos(std::min(1.0, c)), theta_cap);
        const double var = *sensor::measurement_variance(depth, theta, intr);
        depth += scene.noise.scale * std::sqrt(var) * standard_normal(noise_key(scene.seed, view, idx));
        if (!(depth > 0.0)) continue;
      }
      fr.depth[idx] = depth;
      fr.mask[idx] = 255;
    }
  return fr;
}

skeleton::SkeletonSpec skeleton_spec(const std::string& type) {
  skeleton::SkeletonSpec s;
  s.class_name = type;
  const auto two = [&](const char* a, const char* b) {
    s.keypoints = {a, b};
    s.links = {{0, 1}};
    s.frame_rules = {{0, std::nullopt, true}};
  };
  const auto three = [&](const char* a, const char* b, const char* c) {
    s.keypoints = {a, b, c};
    s.links = {{0, 1}, {1, 2}};
    s.frame_rules = {{0, 2, false}, {1, 0, false}};
  };
  if (type == "box" || type == "cylinder") two("end_a", "end_b");
  else if (type == "screwdriver") two("handle_end", "tip");
  else if (type == "brush") two("handle_end", "head_end");
  else if (type == "hammer") three("handle_end", "head_junction", "head_tip");
  else if (type == "cup") three("base", "rim", "handle");
  else fail(ErrorKind::UnsupportedShape, "shape '" + type + "' has no skeleton definition");
  return s;
}

skeleton::Skeleton ground_truth_skeleton(const SceneSpec& scene) { return ground_truth_skeleton(scene.object); }

skeleton::Skeleton ground_truth_skeleton(const ShapeSpec& spec) {
  const auto sspec = skeleton_spec(spec.type);
  const auto d = resolved_dims(spec);
  std::vector<Vec3> kp;
  if (spec.type == "box") {
    const Vec3 size(d.at("x"), d.at("y"), d.at("z"));
    int axis = 0;
    for (int k = 1; k < 3; ++k)
      if (size[k] > size[axis]) axis = k;
    Vec3 e = Vec3::Zero();
    e[axis] = size[axis] / 2.0;
    kp = {-e, e};
  } else if (spec.type == "cylinder") {
    kp = {Vec3(-d.at("length") / 2.0, 0, 0), Vec3(d.at("length") / 2.0, 0, 0)};
  } else if (spec.type == "screwdriver") {
    kp = {Vec3::Zero(), Vec3(d.at("handle_length") + d.at("shaft_length") + d.at("tip_length"), 0, 0)};
  } else if (spec.type == "brush") {
    kp = {Vec3::Zero(), Vec3(d.at("handle_length") + d.at("head_length"), 0, 0)};
  } else if (spec.type == "hammer") {
    const double l = d.at("handle_length");
    kp = {Vec3::Zero(), Vec3(l, 0, 0), Vec3(l + d.at("head_width") / 2.0, d.at("head_length") / 2.0, 0)};
  } else if (spec.type == "cup") {
    const double h = d.at("height");
    kp = {Vec3::Zero(), Vec3(0, 0, h), Vec3(d.at("radius") + d.at("handle_reach"), 0, h / 2.0)};
  }
  for (auto& p : kp) p = spec.pose * p;

  const bool needs_cloud = std::any_of(sspec.frame_rules.begin(), sspec.frame_rules.end(),
                                       [](const skeleton::FrameRule& r) { return r.eigen_fallback; });
  std::vector<Vec3> cloud;
  if (needs_cloud) cloud = sample_surface(Shape(spec), spec, 4000, 0).cloud.positions();
  return skeleton::build_skeleton(sspec, std::move(kp), cloud);
}

Pose pose_from_json(const nlohmann::json& j) {
  try {
    Pose p = Pose::Identity();
    if (j.contains("matrix")) {
      const auto m = j.at("matrix").get<std::vector<double>>();
      if (m.size() != 16) fail(ErrorKind::InvalidPose, "pose matrix needs 16 entries");
      const Eigen::Matrix4d mat = matrix_from_row_major(m);
      if (!is_rigid(mat)) fail(ErrorKind::InvalidPose, "pose matrix is not rigid");
      p.matrix() = mat;
      return p;
    }
    if (j.contains("rpy_deg")) {
      const Vec3 rpy = vec_from(j.at("rpy_deg"), "rpy_deg") * kDeg;
      p.linear() = axis_angle(Vec3::UnitZ(), rpy.z()) * axis_angle(Vec3::UnitY(), rpy.y()) *
                   axis_angle(Vec3::UnitX(), rpy.x());
    }
    if (j.contains("position")) p.translation() = vec_from(j.at("position"), "position");
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("pose: ") + e.what());
  }
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    const auto& o = j.at("object");
    s.object.type = o.at("type").get<std::string>();
    if (o.contains("dims")) s.object.dims = o.at("dims").get<std::map<std::string, double>>();
    if (o.contains("pose")) s.object.pose = pose_from_json(o.at("pose"));
    s.object.obj_path = o.value("obj_path", std::string());
    if (j.contains("cameras")) {
      const auto& c = j.at("cameras");
      s.cameras.count = c.value("count", s.cameras.count);
      s.cameras.radius = c.value("radius", s.cameras.radius);
      if (c.contains("elevation_deg")) s.cameras.elevation = c.at("elevation_deg").get<double>() * kDeg;
      if (c.contains("azimuth_offset_deg")) s.cameras.azimuth_offset = c.at("azimuth_offset_deg").get<double>() * kDeg;
      if (c.contains("target")) s.cameras.target = vec_from(c.at("target"), "camera target");
      if (c.contains("intrinsics")) s.cameras.intrinsics = sensor::intrinsics_from_json(c.at("intrinsics"));
    }
    if (j.contains("noise")) {
      s.noise.enabled = j.at("noise").value("enabled", false);
      s.noise.scale = j.at("noise").value("scale", 1.0);
    }
    if (j.contains("table")) {
      const auto& t = j.at("table");
      if (t.contains("normal")) {
        s.table.normal = vec_from(t.at("normal"), "table normal");
        if (!(s.table.normal.norm() > 0.0)) fail(ErrorKind::InvalidInput, "zero table normal");
        s.table.normal.normalize();
      }
      s.table.offset = t.value("offset", 0.0);
    }
    s.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json o{{"type", s.object.type},
                   {"dims", resolved_dims(s.object)},
                   {"pose", {{"matrix", to_row_major(s.object.pose)}}}};
  if (!s.object.obj_path.empty()) o["obj_path"] = s.object.obj_path;
  nlohmann::json c{{"count", s.cameras.count},
                   {"radius", s.cameras.radius},
                   {"elevation_deg", s.cameras.elevation / kDeg},
                   {"azimuth_offset_deg", s.cameras.azimuth_offset / kDeg},
                   {"intrinsics", sensor::to_json(s.cameras.intrinsics)}};
  if (s.cameras.target) c["target"] = {s.cameras.target->x(), s.cameras.target->y(), s.cameras.target->z()};
  return {{"object", o},
          {"cameras", c},
          {"noise", {{"enabled", s.noise.enabled}, {"scale", s.noise.scale}}},
          {"table", {{"normal", {s.table.normal.x(), s.table.normal.y(), s.table.normal.z()}}, {"offset", s.table.offset}}},
          {"seed", s.seed}};
}

}  // namespace taskgrasp::synth
