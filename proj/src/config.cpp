#include "taskgrasp/config.hpp"

#include "taskgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace taskgrasp::config {

namespace {

std::optional<fs::path> opt_path(const nlohmann::json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

std::vector<fs::path> path_list(const nlohmann::json& j, const char* key, const fs::path& base) {
  std::vector<fs::path> out;
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (v.is_string()) {
    const fs::path p = v.get<std::string>();
    out.push_back(p.is_absolute() ? p : base / p);
    return out;
  }
  for (const auto& e : v) {
    const fs::path p = e.get<std::string>();
    out.push_back(p.is_absolute() ? p : base / p);
  }
  return out;
}

nlohmann::json path_json(const std::optional<fs::path>& p) {
  return p ? nlohmann::json(p->generic_string()) : nlohmann::json(nullptr);
}

}  // namespace

void RunConfig::validate() const {
  if (!(fusion.voxel_size > 0.0)) fail(ErrorKind::InvalidConfig, "voxel_size must be positive");
  if (!(fusion.tau() > 0.0)) fail(ErrorKind::InvalidConfig, "truncation must be positive");
  if (!(fusion.padding >= 0.0)) fail(ErrorKind::InvalidConfig, "padding must be non-negative");
  if (!(fusion.theta_max > 0.0 && fusion.theta_max < 1.5707963267948966))
    fail(ErrorKind::InvalidConfig, "theta_max must lie in (0, pi/2)");
  if (fusion.target_points == 0) fail(ErrorKind::InvalidConfig, "target_points must be positive");
  if (fusion.variation_k < 3) fail(ErrorKind::InvalidConfig, "variation_k must be at least 3");
  if (triangulation.min_views < 2) fail(ErrorKind::InvalidConfig, "min_views must be at least 2");
  if (train.max_components < 1) fail(ErrorKind::InvalidConfig, "max_components must be at least 1");
  if (train.em.max_iterations < 1 || !(train.em.tolerance > 0.0) || !(train.em.cov_floor > 0.0) ||
      train.em.restarts < 1)
    fail(ErrorKind::InvalidConfig, "invalid EM options");
  score.validate();
  gripper.validate();
  plan.validate();
}

RunConfig from_json(const nlohmann::json& j, const fs::path& base) {
  static const std::set<std::string> known = {"seed",  "paths", "fusion", "triangulation", "score",
                                              "gripper", "plan", "train",  "baseline"};
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) fail(ErrorKind::InvalidConfig, "unknown config section '" + k + "'");

  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.baseline = j.value("baseline", c.baseline);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.paths.scene = opt_path(p, "scene", base);
      c.paths.frames = path_list(p, "frames", base);
      c.paths.frames_manifest = opt_path(p, "frames_manifest", base);
      c.paths.observations = opt_path(p, "observations", base);
      c.paths.skeleton_spec = opt_path(p, "skeleton_spec", base);
      c.paths.cloud = opt_path(p, "cloud", base);
      c.paths.skeleton = opt_path(p, "skeleton", base);
      c.paths.annotation = opt_path(p, "annotation", base);
      c.paths.task_models = path_list(p, "task_models", base);
      c.paths.out = opt_path(p, "out", base);
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      c.fusion.voxel_size = f.value("voxel_size", c.fusion.voxel_size);
      if (f.contains("truncation") && !f.at("truncation").is_null())
        c.fusion.truncation = f.at("truncation").get<double>();
      c.fusion.padding = f.value("padding", c.fusion.padding);
      c.fusion.theta_max = f.value("theta_max", c.fusion.theta_max);
      c.fusion.target_points = f.value("target_points", c.fusion.target_points);
      c.fusion.variation_k = f.value("variation_k", c.fusion.variation_k);
    }
    if (j.contains("triangulation")) {
      const auto& t = j.at("triangulation");
      c.triangulation.min_views = t.value("min_views", c.triangulation.min_views);
      c.triangulation.min_conditioning = t.value("min_conditioning", c.triangulation.min_conditioning);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.max_components = t.value("max_components", c.train.max_components);
      c.train.em.max_iterations = t.value("max_iterations", c.train.em.max_iterations);
      c.train.em.tolerance = t.value("tolerance", c.train.em.tolerance);
      c.train.em.cov_floor = t.value("cov_floor", c.train.em.cov_floor);
      c.train.em.restarts = t.value("restarts", c.train.em.restarts);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
  if (j.contains("score")) c.score = grasp::score_config_from_json(j.at("score"));
  if (j.contains("gripper")) c.gripper = grasp::gripper_from_json(j.at("gripper"));
  if (j.contains("plan")) c.plan = grasp::plan_config_from_json(j.at("plan"));
  return c;
}

RunConfig load(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::Io, "config not found: " + path.string());
  std::ifstream f(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : c.paths.frames) frames.push_back(f.generic_string());
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.paths.task_models) models.push_back(m.generic_string());
  return {
      {"seed", c.seed},
      {"baseline", c.baseline},
      {"paths",
       {{"scene", path_json(c.paths.scene)},
        {"frames", frames},
        {"frames_manifest", path_json(c.paths.frames_manifest)},
        {"observations", path_json(c.paths.observations)},
        {"skeleton_spec", path_json(c.paths.skeleton_spec)},
        {"cloud", path_json(c.paths.cloud)},
        {"skeleton", path_json(c.paths.skeleton)},
        {"annotation", path_json(c.paths.annotation)},
        {"task_models", models},
        {"out", path_json(c.paths.out)}}},
      {"fusion",
       {{"voxel_size", c.fusion.voxel_size},
        {"truncation", c.fusion.tau()},
        {"padding", c.fusion.padding},
        {"theta_max", c.fusion.theta_max},
        {"target_points", c.fusion.target_points},
        {"variation_k", c.fusion.variation_k}}},
      {"triangulation",
       {{"min_views", c.triangulation.min_views}, {"min_conditioning", c.triangulation.min_conditioning}}},
      {"score", grasp::to_json(c.score)},
      {"gripper", grasp::to_json(c.gripper)},
      {"plan", grasp::to_json(c.plan)},
      {"train",
       {{"max_components", c.train.max_components},
        {"max_iterations", c.train.em.max_iterations},
        {"tolerance", c.train.em.tolerance},
        {"cov_floor", c.train.em.cov_floor},
        {"restarts", c.train.em.restarts}}},
  };
}

}  // namespace taskgrasp::config
