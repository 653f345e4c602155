#pragma once

// Sampling-based parallel-jaw grasp generation: start points drawn with
// probability proportional to task score, gripper placed opposing the surface
// normal with its body above the object, jaws closed along one degree of
// freedom, table collisions rejected, survivors scored and the best one
// refined locally.

#include "taskgrasp/grasp_eval.hpp"
#include "taskgrasp/surface.hpp"
#include "taskgrasp/task_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace taskgrasp::grasp {

// Gripper frame: origin at the centre of the fixed pad's contact face,
// x = closing axis (fixed pad towards moving pad), z = approach direction
// (palm towards fingertips), y = z cross x.
struct GripperModel {
  double max_opening = 80.0;      // mm
  double pad_width = 20.0;        // along y
  double pad_height = 15.0;       // along z
  double finger_thickness = 10.0; // along x, behind each pad face
  double palm_depth = 50.0;       // pad centre to palm along -z
  double palm_thickness = 20.0;

  void validate() const;
};

struct TablePlane {
  Vec3 normal = Vec3::UnitZ();  // unit, pointing up into free space
  double offset = 0.0;          // signed distance = normal . p - offset

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct SampleResult {
  std::vector<std::size_t> indices;
  bool all_points = false;  // n_s exceeded the cloud size
};

// n_s draws without replacement with probability proportional to weight;
// when the positive-weight points run out the remaining draws are made with
// replacement. Empty or all-zero weights sample uniformly.
SampleResult sample_start_points(std::size_t point_count, std::span<const double> weights,
                                 std::size_t n_samples, std::uint64_t seed);

struct GripperPose {
  Pose pose;
  bool fallback = false;  // normal parallel to up; world +x used as reference
};

// Closing axis anti-parallel to the normal, palm on the +up side, then
// rolled about the closing axis.
GripperPose pose_gripper(const Vec3& point, const Vec3& normal, double roll, const Vec3& up);

struct ClosingParams {
  double contact_threshold = 1.0;  // mm
  double step = 0.5;               // mm
};

struct ClosingResult {
  bool closed = false;
  double opening = 0.0;
  ContactSet contacts;  // [fixed, moving]
  std::vector<std::size_t> fixed_points, moving_points;
};

// Everything the closing simulation needs from the cloud.
struct CloudView {
  const surface::SurfaceCloud* cloud = nullptr;
  const surface::CloudColumns* columns = nullptr;
  std::span<const double> task_scores;  // empty = all 1
};

// Sweeps the moving pad in from max_opening until a point is within the
// contact threshold of its face. `sampled_index`, when given, must lie under
// the fixed pad (InvalidPose otherwise).
ClosingResult close_gripper(const Pose& pose, const GripperModel& gripper, const CloudView& view,
                            const ClosingParams& params = {},
                            std::optional<std::size_t> sampled_index = std::nullopt);

// Corners of the finger, swept moving-finger and palm boxes, world frame.
std::vector<Vec3> body_vertices(const Pose& pose, const GripperModel& gripper, double final_opening);

// Passes iff every body vertex is strictly more than `margin` above the table.
bool check_collision(const Pose& pose, const GripperModel& gripper, const TablePlane& table,
                     double final_opening = 0.0, double margin = 2.0);

enum class CandidateStatus { Unclosed, Collided, InvalidPose, Scored };

struct Candidate {
  std::size_t id = 0;
  std::size_t point_index = 0;
  double roll = 0.0;
  Pose pose = Pose::Identity();
  bool fallback_frame = false;
  CandidateStatus status = CandidateStatus::Unclosed;
  double opening = 0.0;
  ContactSet contacts;
  GraspScore score;
};

struct PlanConfig {
  std::size_t n_samples = 45;
  int rotations = 3;             // 0, +step, -step, +2 step, ...
  double roll_step = 0.3490658503988659;  // 20 deg
  int refine_iterations = 3;
  double rotation_offset = 0.2617993877991494;  // 15 deg
  double position_offset = 5.0;                 // mm
  std::uint64_t seed = 0;
  TablePlane table;
  double collision_margin = 2.0;
  ClosingParams closing;
  task::ScoreOptions task_scoring;

  void validate() const;
};

struct RejectionStats {
  std::size_t unclosed = 0, collided = 0, invalid_pose = 0, scored = 0;
};

struct Refinement {
  Candidate grasp;
  std::vector<double> history;  // best total before and after each iteration
};

struct PlanResult {
  std::vector<Candidate> ranked;  // scored first (total desc), then rejected by id
  RejectionStats stats;
  std::vector<std::size_t> samples;
  bool baseline = false;
  ScoreConfig effective_scoring;
  Refinement refined;
};

// model == nullptr runs baseline mode (uniform sampling, P3 dropped with its
// weight redistributed). Throws NoGraspFound when nothing scores.
PlanResult plan(const surface::SurfaceCloud& cloud, const skeleton::Skeleton* skel,
                const task::TaskModel* model, const PlanConfig& cfg, const ScoreConfig& scoring,
                const GripperModel& gripper = {});

// Variant with precomputed per-point task scores (empty = baseline).
PlanResult plan_with_scores(const surface::SurfaceCloud& cloud, std::span<const double> task_scores,
                            bool baseline, const PlanConfig& cfg, const ScoreConfig& scoring,
                            const GripperModel& gripper = {});

nlohmann::json to_json(const Candidate& c);
nlohmann::json to_json(const PlanResult& r);
GripperModel gripper_from_json(const nlohmann::json& j, GripperModel base = {});
nlohmann::json to_json(const GripperModel& g);
PlanConfig plan_config_from_json(const nlohmann::json& j, PlanConfig base = {});
nlohmann::json to_json(const PlanConfig& p);

}  // namespace taskgrasp::grasp
