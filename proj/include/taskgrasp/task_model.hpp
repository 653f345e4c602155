#pragma once

// Task models: per-keypoint mixtures over the directions (in the keypoint's
// frame) from the keypoint to exemplar grasp points. A surface point is scored
// by the two endpoint keypoints of its nearest link.

#include "taskgrasp/gmm.hpp"
#include "taskgrasp/skeleton.hpp"
#include "taskgrasp/surface.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <vector>

namespace taskgrasp::task {

struct ExemplarAnnotation {
  std::string class_name;
  std::string task;
  skeleton::Skeleton exemplar;
  std::vector<Vec3> grasp_points;  // mm, on the exemplar surface

  // >= 3 grasp points; when a surface cloud is given, every grasp point lies
  // within max_surface_distance of it.
  void validate(std::span<const Vec3> surface = {}, double max_surface_distance = 0.0) const;
};

struct KeypointGmm {
  int keypoint = 0;
  gmm::Mixture mixture;
  double normalizer = 1.0;  // density at the highest-density component mean
  bool low_data = false;
  std::size_t samples = 0;
  std::vector<gmm::BicEntry> bic;
};

struct TaskModel {
  std::string class_name;
  std::string task;
  std::vector<std::string> keypoint_names;
  std::vector<std::array<int, 2>> links;
  std::vector<std::optional<KeypointGmm>> keypoints;  // indexed by keypoint
  std::vector<double> training_link_lengths;          // metadata only
  std::uint64_t seed = 0;
  int max_components = 4;

  const KeypointGmm& gmm_for(int keypoint) const;
};

struct TrainOptions {
  int max_components = 4;
  std::uint64_t seed = 0;
  gmm::EmOptions em;
};

// Per linked keypoint: exemplar grasp points whose nearest link touches the
// keypoint are mapped to (theta, phi) and fitted with EM + BIC. Fewer than
// three such points falls back to all grasp points with one component and
// flags the keypoint low-data.
TaskModel train(const ExemplarAnnotation& annotation, const TrainOptions& opts = {});

// Per-keypoint traces kept for diagnostics (EM monotonicity etc.).
struct TrainReport {
  std::vector<std::vector<std::vector<double>>> traces;  // [keypoint][run][iter]
};
TaskModel train(const ExemplarAnnotation& annotation, const TrainOptions& opts,
                TrainReport* report);

// Wrapped mixture density at (theta, phi): the maximum over theta and
// theta +- 2 pi.
double wrapped_density(const gmm::Mixture& m, double theta, double phi);

struct ScoreOptions {
  double distance_cap = 3.0;  // points farther than cap * S from every link score 0
};

struct ScoreStats {
  std::size_t clamped = 0;  // normalised densities above 1
  std::size_t capped = 0;   // beyond the distance cap
};

// Skeleton must match the model's keypoint/link layout (classes may differ,
// which is how models transfer between similar objects).
void check_conforms(const TaskModel& model, const skeleton::Skeleton& skel);

double score_point(const TaskModel& model, const skeleton::Skeleton& skel, const Vec3& point,
                   const ScoreOptions& opts = {}, ScoreStats* stats = nullptr);

struct SurfaceScores {
  std::vector<double> scores;
  ScoreStats stats;
};

// Batched score_point over a cloud (vectorised density evaluation). A null
// model is baseline mode: every score is 1.
SurfaceScores score_surface(const TaskModel* model, const skeleton::Skeleton* skel,
                            std::span<const Vec3> points, const ScoreOptions& opts = {});

// Element-wise product of per-constraint score arrays. Throws InvalidScore
// for values outside [0, 1], InvalidInput for length mismatches.
std::vector<double> combine_constraints(std::span<const std::vector<double>> constraints,
                                        std::size_t point_count);

nlohmann::json to_json(const TaskModel& model);
TaskModel model_from_json(const nlohmann::json& j);

}  // namespace taskgrasp::task
