#include "support.hpp"

#include "taskgrasp/cli.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace tgtest {

using namespace taskgrasp;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path = fs::temp_directory_path() /
         ("taskgrasp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path);
  fs::create_directories(path);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path, ec);
}

synth::SceneSpec sphere_scene(double radius, double camera_radius) {
  synth::SceneSpec s;
  s.object.type = "sphere";
  s.object.dims["radius"] = radius;
  s.cameras.radius = camera_radius;
  // keep the table out of the way
  s.table.offset = -1000.0;
  return s;
}

std::vector<fusion::DepthFrame> render_all(const synth::SceneSpec& scene) {
  const synth::Shape shape(scene.object);
  std::vector<fusion::DepthFrame> frames;
  for (int v = 0; v < scene.cameras.count; ++v) frames.push_back(synth::render_depth(scene, shape, v));
  return frames;
}

double rms_radial_error(const surface::SurfaceCloud& cloud, const Vec3& center, double radius) {
  double acc = 0.0;
  for (const auto& p : cloud.points) {
    const double e = (p.position - center).norm() - radius;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(cloud.size()));
}

bool GtObject::in_part(std::size_t i, const std::string& part) const {
  const synth::Shape shape(spec);
  return shape.part_names().at(static_cast<std::size_t>(surface.parts[i])) == part;
}

GtObject gt_object(const std::string& type, std::size_t count, std::uint64_t seed, const Pose& pose) {
  GtObject o;
  o.spec.type = type;
  o.spec.pose = pose;
  const synth::Shape shape(o.spec);
  o.surface = synth::sample_surface(shape, o.spec, count, seed);
  o.skeleton = synth::ground_truth_skeleton(o.spec);
  return o;
}

task::ExemplarAnnotation screwdriver_exemplar(const GtObject& obj, const std::string& task) {
  task::ExemplarAnnotation a;
  a.class_name = "screwdriver";
  a.task = task;
  a.exemplar = obj.skeleton;
  for (std::size_t i = 0; i < obj.surface.cloud.size(); ++i) {
    const double x = obj.surface.local[i].x();
    const bool take = task == "tool_use" ? obj.in_part(i, "handle") && x >= 20.0 && x <= 80.0
                                         : !obj.in_part(i, "handle") && x >= 120.0;
    if (take) a.grasp_points.push_back(obj.surface.cloud.points[i].position);
  }
  return a;
}

CliResult run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"taskgrasp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace tgtest
