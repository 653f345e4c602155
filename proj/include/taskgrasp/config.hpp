#pragma once

// Run configuration: one JSON file holding input paths, every module default
// and the seed. Relative paths resolve against the config file's directory.

#include "taskgrasp/gmm.hpp"
#include "taskgrasp/grasp_eval.hpp"
#include "taskgrasp/grasp_gen.hpp"
#include "taskgrasp/skeleton.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace taskgrasp::config {

namespace fs = std::filesystem;

struct Paths {
  std::optional<fs::path> scene;         // render
  std::vector<fs::path> frames;          // fuse: frame sidecars
  std::optional<fs::path> frames_manifest;  // fuse: {"frames": [...]} as written by render
  std::optional<fs::path> observations;  // triangulate (JSON lines)
  std::optional<fs::path> skeleton_spec; // triangulate
  std::optional<fs::path> cloud;         // PLY
  std::optional<fs::path> skeleton;      // skeleton instance JSON
  std::optional<fs::path> annotation;    // train
  std::vector<fs::path> task_models;     // scored jointly (product)
  std::optional<fs::path> out;
};

struct FusionSection {
  double voxel_size = 3.0;               // mm
  std::optional<double> truncation;      // default 4 voxels
  double padding = 3.0;                  // voxels added around the masked bounds
  double theta_max = 1.3;                // rad
  std::size_t target_points = 10000;
  std::size_t variation_k = 16;

  double tau() const { return truncation.value_or(4.0 * voxel_size); }
};

struct TrainSection {
  int max_components = 4;
  gmm::EmOptions em;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Paths paths;
  FusionSection fusion;
  skeleton::TriangulationOptions triangulation;
  grasp::ScoreConfig score;
  grasp::GripperModel gripper;
  grasp::PlanConfig plan;
  TrainSection train;
  bool baseline = false;

  // Range checks only; commands check the input paths they actually read.
  void validate() const;
};

// Unknown top-level sections are rejected so typos fail loudly.
RunConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load(const fs::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace taskgrasp::config
