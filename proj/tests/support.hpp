#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include "taskgrasp/psdf.hpp"
#include "taskgrasp/surface.hpp"
#include "taskgrasp/synth.hpp"
#include "taskgrasp/task_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tgtest {

namespace fs = std::filesystem;
using taskgrasp::Vec3;

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  fs::path operator/(const std::string& s) const { return path / s; }
};

taskgrasp::synth::SceneSpec sphere_scene(double radius = 50.0, double camera_radius = 400.0);

std::vector<taskgrasp::fusion::DepthFrame> render_all(const taskgrasp::synth::SceneSpec& scene);

// RMS of |p - center| - radius.
double rms_radial_error(const taskgrasp::surface::SurfaceCloud& cloud, const Vec3& center, double radius);

// Exact-surface sample of a catalogue shape with its ground-truth skeleton.
struct GtObject {
  taskgrasp::synth::ShapeSpec spec;
  taskgrasp::synth::SampledSurface surface;
  taskgrasp::skeleton::Skeleton skeleton;

  bool in_part(std::size_t i, const std::string& part) const;
};
GtObject gt_object(const std::string& type, std::size_t count = 4000, std::uint64_t seed = 1,
                   const taskgrasp::Pose& pose = taskgrasp::Pose::Identity());

// Screwdriver exemplars: "tool use" grasps the handle, "handover" grasps the
// shaft and tip so the handle stays free.
taskgrasp::task::ExemplarAnnotation screwdriver_exemplar(const GtObject& obj, const std::string& task);

// Runs the CLI in-process; stdout/stderr captured.
struct CliResult {
  int code = 0;
  std::string out, err;
};
CliResult run_cli(const std::vector<std::string>& args);

std::string slurp(const fs::path& p);

}  // namespace tgtest
