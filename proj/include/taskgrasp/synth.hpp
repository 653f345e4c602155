#pragma once

// Synthetic test scenes: parametric shapes built as unions of spheres, boxes
// and capped cylinders (or a user OBJ mesh), ray-cast depth frames from a
// ring of virtual cameras with optional sensor-model noise, and exact
// ground-truth skeletons.

#include "taskgrasp/grasp_gen.hpp"
#include "taskgrasp/psdf.hpp"
#include "taskgrasp/skeleton.hpp"
#include "taskgrasp/surface.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace taskgrasp::synth {

struct ShapeSpec {
  std::string type = "sphere";          // sphere box cylinder hammer screwdriver brush cup mesh
  std::map<std::string, double> dims;   // mm; missing entries take the shape's defaults
  Pose pose = Pose::Identity();         // world <- object
  std::string obj_path;                 // type == "mesh"
};

struct CameraRing {
  int count = 4;
  double radius = 400.0;       // mm from the target
  double elevation = 0.5235987755982988;  // rad above the horizontal
  double azimuth_offset = 0.0;
  std::optional<Vec3> target;  // default: the object origin
  sensor::CameraIntrinsics intrinsics;
};

struct NoiseSpec {
  bool enabled = false;
  double scale = 1.0;
};

struct SceneSpec {
  ShapeSpec object;
  CameraRing cameras;
  NoiseSpec noise;
  grasp::TablePlane table;
  std::uint64_t seed = 0;

  void validate() const;
};

// Default dimensions of a shape type (InvalidInput for unknown types).
std::map<std::string, double> default_dims(const std::string& type);

struct Primitive {
  enum class Kind { Sphere, Box, Cylinder } kind = Kind::Sphere;
  Pose pose = Pose::Identity();  // world <- primitive
  double radius = 0.0;           // sphere, cylinder
  double length = 0.0;           // cylinder, along local x from 0
  Vec3 half = Vec3::Zero();      // box half extents, centred on the origin
  std::string part;
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

// Parses v/f records (polygons fan-triangulated, negative indices allowed).
TriMesh load_obj(const std::string& path);
TriMesh parse_obj(const std::string& text);

struct RayHit {
  double t = 0.0;
  Vec3 normal;  // outward, unit
  int part = 0;
};

class Shape {
 public:
  explicit Shape(const ShapeSpec& spec);

  const std::string& type() const { return type_; }
  const std::vector<Primitive>& primitives() const { return prims_; }
  const std::vector<std::string>& part_names() const { return parts_; }

  // First intersection along o + t d, t > 0.
  std::optional<RayHit> intersect(const Vec3& o, const Vec3& d) const;

  // Negative inside.
  double signed_distance(const Vec3& p) const;

  // Part whose surface is nearest p.
  int part_of(const Vec3& p) const;

  const TriMesh& mesh() const { return mesh_; }

 private:
  std::string type_;
  std::vector<Primitive> prims_;
  std::vector<std::string> parts_;
  TriMesh mesh_;  // world frame, type "mesh"
};

// Area-uniform samples of the exact surface with analytic normals (c = 0,
// u left at 0). `parts` gives each point's part index.
struct SampledSurface {
  surface::SurfaceCloud cloud;
  std::vector<int> parts;
  std::vector<Vec3> local;  // object-frame positions
};
SampledSurface sample_surface(const Shape& shape, const ShapeSpec& spec, std::size_t count,
                              std::uint64_t seed);

// world <- camera for view i (OpenCV convention: x right, y down, z forward).
Pose camera_pose(const SceneSpec& scene, int view);

// Throws DegenerateGeometry when the camera is inside the object,
// InvalidInput for an out-of-range view.
fusion::DepthFrame render_depth(const SceneSpec& scene, int view);
fusion::DepthFrame render_depth(const SceneSpec& scene, const Shape& shape, int view);

// Keypoint layout of a shape type; UnsupportedShape when it has none.
skeleton::SkeletonSpec skeleton_spec(const std::string& type);

// Exact keypoints from the parametric shape; the cloud fallback frames use a
// dense ground-truth surface sample.
skeleton::Skeleton ground_truth_skeleton(const SceneSpec& scene);
skeleton::Skeleton ground_truth_skeleton(const ShapeSpec& spec);

SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& s);
Pose pose_from_json(const nlohmann::json& j);

}  // namespace taskgrasp::synth
