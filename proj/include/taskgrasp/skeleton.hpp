#pragma once

// Semantic keypoint skeletons: multi-view keypoint triangulation, per-keypoint
// coordinate frames, the spherical direction encoding used by task models, and
// nearest-link assignment of surface points.

#include "taskgrasp/geometry.hpp"
#include "taskgrasp/sensor_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace taskgrasp::skeleton {

// How the frames of a link's endpoints are oriented. The plane rule uses the
// (reference, other endpoint, third) plane normal as z; otherwise y/z come
// from the object cloud's principal directions orthogonal to the link.
struct FrameRule {
  int reference = 0;
  std::optional<int> third;
  bool eigen_fallback = false;
};

struct SkeletonSpec {
  std::string class_name;
  std::vector<std::string> keypoints;
  std::vector<std::array<int, 2>> links;
  std::vector<FrameRule> frame_rules;  // one per link

  void validate() const;  // throws InvalidInput
  int keypoint_index(const std::string& name) const;  // -1 if absent
};

struct Skeleton {
  SkeletonSpec spec;
  std::vector<Vec3> keypoints;      // world, mm
  std::vector<double> link_lengths; // mm
  // Columns are the x, y, z axes in world coordinates. Keypoints that belong
  // to no link keep the identity.
  std::vector<Mat3> frames;
  std::vector<bool> eigen_frame;    // frame came from the cloud fallback

  std::size_t link_count() const { return spec.links.size(); }
};

struct FrameOptions {
  double collinear_sine = 1e-3;
};

// Link lengths and per-keypoint frames. Each linked keypoint takes its frame
// from the lowest-index link it belongs to, with x pointing along the link
// towards the other endpoint. `cloud` is needed only for the eigenvector
// fallback; without it a fallback raises FrameUndefined.
Skeleton build_skeleton(const SkeletonSpec& spec, std::vector<Vec3> keypoints,
                        std::span<const Vec3> cloud = {}, const FrameOptions& opts = {});

// Recompute frames in place.
void build_frames(Skeleton& skel, std::span<const Vec3> cloud = {}, const FrameOptions& opts = {});

struct KeypointObservation {
  int view = 0;
  int keypoint = 0;
  double u = 0.0, v = 0.0;  // pixels
  Pose camera_pose = Pose::Identity();  // world <- camera
  sensor::CameraIntrinsics intrinsics;
};

struct TriangulatedKeypoint {
  std::optional<Vec3> position;  // nullopt: missing (too few views)
  double residual = 0.0;         // RMS point-to-ray distance, mm
  int views = 0;
};

struct TriangulationOptions {
  int min_views = 2;
  double min_conditioning = 1e-10;  // smallest/largest normal-matrix eigenvalue
};

// Least-squares intersection of the back-projected rays of each keypoint.
// Throws DegenerateGeometry for coincident camera centres or near-parallel
// rays, InvalidInput for out-of-image pixels.
std::vector<TriangulatedKeypoint> triangulate_keypoints(
    std::span<const KeypointObservation> observations, int keypoint_count,
    const TriangulationOptions& opts = {});

struct Spherical {
  double theta = 0.0;  // (-pi, pi]
  double phi = 0.0;    // [0, pi]
};

// Direction from the keypoint to the point in the keypoint frame, scaled onto
// a sphere of radius link_length. theta = 0 at the poles. Throws
// UndefinedDirection when the point coincides with the keypoint.
Spherical to_spherical(const Mat3& frame, const Vec3& keypoint, double link_length,
                       const Vec3& point);

// Link with the smallest point-to-segment distance; ties go to the lowest
// index.
std::size_t nearest_link(const Skeleton& skel, const Vec3& point);
double link_distance(const Skeleton& skel, std::size_t link, const Vec3& point);

SkeletonSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SkeletonSpec& spec);
// Instance JSON embeds the spec; frames are 3x3 row-major with axes as
// columns; missing keypoints are null.
nlohmann::json to_json(const Skeleton& skel);
Skeleton skeleton_from_json(const nlohmann::json& j);

// One JSON object per line:
// {"view", "keypoint", "u", "v", "pose": [16 row-major], "intrinsics": {...}}
std::vector<KeypointObservation> observations_from_jsonl(const std::string& text);

}  // namespace taskgrasp::skeleton
