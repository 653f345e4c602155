#include "taskgrasp/cli.hpp"

#include "taskgrasp/config.hpp"
#include "taskgrasp/error.hpp"
#include "taskgrasp/io.hpp"
#include "taskgrasp/pipeline.hpp"
#include "taskgrasp/psdf.hpp"
#include "taskgrasp/surface.hpp"
#include "taskgrasp/synth.hpp"
#include "taskgrasp/task_model.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace taskgrasp::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> voxel_size;
  std::string weights;
  std::string task_model;
  bool baseline = false;
};

struct Ctx {
  std::string command;
  config::RunConfig cfg;
  fs::path out_dir;
  std::ostream& out;
  std::ostream& err;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::NoGraspFound:
    case ErrorKind::EmptySurface:
      return 3;
    case ErrorKind::Numerical:
      return 4;
    default:
      return 2;
  }
}

// Re-raise with the pipeline stage prefixed to the message.
template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), name + ": " + e.what());
  }
}

std::array<double, 3> parse_weights(const std::string& s) {
  std::array<double, 3> w{};
  std::stringstream ss(s);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) fail(ErrorKind::InvalidConfig, "--weights takes exactly three values");
    try {
      std::size_t used = 0;
      w[static_cast<std::size_t>(n)] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      fail(ErrorKind::InvalidConfig, "--weights: '" + item + "' is not a number");
    }
    ++n;
  }
  if (n != 3) fail(ErrorKind::InvalidConfig, "--weights takes exactly three values");
  return w;
}

config::RunConfig effective_config(const Options& o) {
  config::RunConfig c = o.config.empty() ? config::RunConfig{} : config::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.voxel_size) c.fusion.voxel_size = *o.voxel_size;
  if (!o.weights.empty()) c.score.weights = parse_weights(o.weights);
  if (!o.task_model.empty()) c.paths.task_models = {fs::path(o.task_model)};
  if (o.baseline) c.baseline = true;
  c.plan.seed = c.seed;
  c.validate();
  return c;
}

nlohmann::json metadata(const Ctx& ctx) {
  return {{"generator", "taskgrasp"}, {"command", ctx.command}, {"seed", ctx.cfg.seed}};
}

std::vector<std::string> ply_comments(const Ctx& ctx) {
  return {"generator taskgrasp", "command " + ctx.command, "seed " + std::to_string(ctx.cfg.seed)};
}

const fs::path& need(const std::optional<fs::path>& v, const char* what) {
  if (!v) fail(ErrorKind::InvalidConfig, std::string("missing paths.") + what + " in the run config");
  if (!fs::exists(*v)) fail(ErrorKind::Io, std::string(what) + " not found: " + v->generic_string());
  return *v;
}

void announce(const Ctx& ctx, const fs::path& p) { ctx.out << "wrote " << p.generic_string() << "\n"; }

// ---------------------------------------------------------------- render

int cmd_render(Ctx& ctx) {
  const fs::path scene_path = need(ctx.cfg.paths.scene, "scene");
  synth::SceneSpec scene = synth::scene_from_json(io::read_json(scene_path));
  scene.seed = ctx.cfg.seed;
  const synth::Shape shape = stage("render", [&] { return synth::Shape(scene.object); });
  nlohmann::json frames = nlohmann::json::array();
  for (int v = 0; v < scene.cameras.count; ++v) {
    const auto fr = stage("render view " + std::to_string(v), [&] { return synth::render_depth(scene, shape, v); });
    char stem[32];
    std::snprintf(stem, sizeof stem, "frame_%03d", v);
    io::write_frame(ctx.out_dir, stem, fr, metadata(ctx));
    frames.push_back(std::string(stem) + ".json");
    announce(ctx, ctx.out_dir / (std::string(stem) + ".json"));
  }
  nlohmann::json manifest{{"frames", frames}, {"scene", synth::to_json(scene)}, {"metadata", metadata(ctx)}};
  io::write_json(ctx.out_dir / "frames.json", manifest);
  announce(ctx, ctx.out_dir / "frames.json");
  // Ground-truth skeleton when the shape defines one.
  try {
    const auto skel = synth::ground_truth_skeleton(scene);
    auto j = skeleton::to_json(skel);
    j["metadata"] = metadata(ctx);
    io::write_json(ctx.out_dir / "skeleton_gt.json", j);
    announce(ctx, ctx.out_dir / "skeleton_gt.json");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UnsupportedShape) throw;
  }
  return 0;
}

// ---------------------------------------------------------------- fuse

std::vector<fs::path> frame_paths(const config::RunConfig& cfg) {
  std::vector<fs::path> out = cfg.paths.frames;
  if (cfg.paths.frames_manifest) {
    const auto m = io::read_json(need(cfg.paths.frames_manifest, "frames_manifest"));
    const fs::path base = cfg.paths.frames_manifest->parent_path();
    try {
      for (const auto& f : m.at("frames")) out.push_back(io::resolve(base, f.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::InvalidInput, cfg.paths.frames_manifest->string() + ": " + e.what());
    }
  }
  if (out.empty()) fail(ErrorKind::InvalidConfig, "fuse needs paths.frames or paths.frames_manifest");
  return out;
}

int cmd_fuse(Ctx& ctx) {
  const auto& fc = ctx.cfg.fusion;
  std::vector<fusion::DepthFrame> frames;
  for (const auto& p : frame_paths(ctx.cfg))
    frames.push_back(stage("load " + p.generic_string(), [&] { return io::read_frame(p); }));
  pipeline::FuseOptions opts;
  opts.voxel_size = fc.voxel_size;
  opts.truncation = fc.tau();
  opts.padding = fc.padding;
  opts.theta_max = fc.theta_max;
  opts.target_points = fc.target_points;
  opts.variation_k = fc.variation_k;
  opts.seed = ctx.cfg.seed;
  auto r = pipeline::fuse_frames(frames, opts);

  io::write_volume(ctx.out_dir / "volume.psdf", r.volume);
  announce(ctx, ctx.out_dir / "volume.psdf");
  io::PlyCloud ply;
  ply.cloud = std::move(r.cloud);
  ply.comments = ply_comments(ctx);
  io::write_ply(ctx.out_dir / "cloud.ply", ply);
  announce(ctx, ctx.out_dir / "cloud.ply");
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& s : r.stats)
    stats.push_back({{"pixels_used", s.pixels_used},
                     {"pixels_grazing", s.pixels_grazing},
                     {"voxels_updated", s.voxels_updated},
                     {"voxels_first_touch", s.voxels_first_touch}});
  const auto& vol = r.volume;
  nlohmann::json report{{"metadata", metadata(ctx)},
                        {"frames", stats},
                        {"volume",
                         {{"origin", {vol.origin().x(), vol.origin().y(), vol.origin().z()}},
                          {"voxel_size", vol.voxel_size()},
                          {"dims", vol.dims()},
                          {"truncation", vol.truncation()}}},
                        {"points", ply.cloud.size()},
                        {"degenerate_variation", r.degenerate_variation}};
  io::write_json(ctx.out_dir / "fuse_report.json", report);
  announce(ctx, ctx.out_dir / "fuse_report.json");
  return 0;
}

// ---------------------------------------------------------------- triangulate

int cmd_triangulate(Ctx& ctx) {
  const auto spec = skeleton::spec_from_json(io::read_json(need(ctx.cfg.paths.skeleton_spec, "skeleton_spec")));
  const fs::path obs_path = need(ctx.cfg.paths.observations, "observations");
  const auto obs = skeleton::observations_from_jsonl(io::read_text(obs_path));
  if (obs.empty()) fail(ErrorKind::InvalidInput, obs_path.generic_string() + ": no observations");
  const int nk = static_cast<int>(spec.keypoints.size());
  for (const auto& o : obs)
    if (o.keypoint < 0 || o.keypoint >= nk)
      fail(ErrorKind::InvalidInput, "observation keypoint index out of range");
  const auto tri = stage("triangulate", [&] { return skeleton::triangulate_keypoints(obs, nk, ctx.cfg.triangulation); });

  nlohmann::json residuals = nlohmann::json::array(), views = nlohmann::json::array();
  std::vector<std::string> missing;
  std::vector<Vec3> pos;
  for (std::size_t k = 0; k < tri.size(); ++k) {
    residuals.push_back(tri[k].position ? nlohmann::json(tri[k].residual) : nlohmann::json(nullptr));
    views.push_back(tri[k].views);
    if (tri[k].position) pos.push_back(*tri[k].position);
    else missing.push_back(spec.keypoints[k]);
  }

  nlohmann::json j;
  if (missing.empty()) {
    std::vector<Vec3> cloud;
    if (ctx.cfg.paths.cloud) cloud = io::read_ply(need(ctx.cfg.paths.cloud, "cloud")).cloud.positions();
    const auto skel = stage("frames", [&] { return skeleton::build_skeleton(spec, pos, cloud); });
    j = skeleton::to_json(skel);
  } else {
    // Incomplete: positions only, frames cannot be built.
    j = skeleton::to_json(spec);
    nlohmann::json p = nlohmann::json::array();
    for (const auto& t : tri)
      p.push_back(t.position ? nlohmann::json{t.position->x(), t.position->y(), t.position->z()}
                             : nlohmann::json(nullptr));
    j["positions"] = p;
    ctx.err << "warning: " << missing.size() << " keypoint(s) seen in fewer than "
            << ctx.cfg.triangulation.min_views << " views\n";
  }
  j["missing"] = missing;
  j["residuals"] = residuals;
  j["views"] = views;
  j["metadata"] = metadata(ctx);
  io::write_json(ctx.out_dir / "skeleton.json", j);
  announce(ctx, ctx.out_dir / "skeleton.json");
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(Ctx& ctx) {
  const fs::path ann_path = need(ctx.cfg.paths.annotation, "annotation");
  const auto a = io::read_json(ann_path);
  const fs::path base = ann_path.parent_path();
  task::ExemplarAnnotation ann;
  surface::SurfaceCloud cloud;
  try {
    ann.class_name = a.at("class").get<std::string>();
    ann.task = a.at("task").get<std::string>();
    ann.exemplar = skeleton::skeleton_from_json(io::read_json(io::resolve(base, a.at("skeleton").get<std::string>())));
    if (a.contains("cloud")) cloud = io::read_ply(io::resolve(base, a.at("cloud").get<std::string>())).cloud;
    if (a.contains("grasp_indices")) {
      if (cloud.empty()) fail(ErrorKind::InvalidInput, "grasp_indices need a cloud");
      for (const auto& i : a.at("grasp_indices")) {
        const auto idx = i.get<std::size_t>();
        if (idx >= cloud.size()) fail(ErrorKind::InvalidInput, "grasp index out of range");
        ann.grasp_points.push_back(cloud.points[idx].position);
      }
    }
    if (a.contains("grasp_points"))
      for (const auto& p : a.at("grasp_points"))
        ann.grasp_points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, ann_path.generic_string() + ": " + e.what());
  }
  const auto positions = cloud.positions();
  stage("annotation", [&] { ann.validate(positions, 2.0 * ctx.cfg.fusion.tau()); });

  task::TrainOptions opts;
  opts.max_components = ctx.cfg.train.max_components;
  opts.seed = ctx.cfg.seed;
  opts.em = ctx.cfg.train.em;
  const auto model = stage("train", [&] { return task::train(ann, opts); });
  for (const auto& k : model.keypoints)
    if (k && k->low_data)
      ctx.err << "warning: keypoint '" << model.keypoint_names[static_cast<std::size_t>(k->keypoint)]
              << "' has fewer than 3 nearby grasp points; trained low-data\n";
  auto j = task::to_json(model);
  j["metadata"] = metadata(ctx);
  io::write_json(ctx.out_dir / "task_model.json", j);
  announce(ctx, ctx.out_dir / "task_model.json");
  return 0;
}

// ---------------------------------------------------------------- scoring

struct Scored {
  surface::SurfaceCloud cloud;
  std::vector<double> scores;
  task::ScoreStats stats;
  bool baseline = true;
};

Scored score_cloud(const Ctx& ctx) {
  Scored s;
  s.cloud = io::read_ply(need(ctx.cfg.paths.cloud, "cloud")).cloud;
  if (s.cloud.empty()) fail(ErrorKind::EmptySurface, "cloud has no points");
  s.baseline = ctx.cfg.baseline || ctx.cfg.paths.task_models.empty();
  if (s.baseline) {
    s.scores.assign(s.cloud.size(), 1.0);
    return s;
  }
  const auto skel = skeleton::skeleton_from_json(io::read_json(need(ctx.cfg.paths.skeleton, "skeleton")));
  const auto pts = s.cloud.positions();
  std::vector<std::vector<double>> per;
  for (const auto& mp : ctx.cfg.paths.task_models) {
    if (!fs::exists(mp)) fail(ErrorKind::Io, "task model not found: " + mp.generic_string());
    const auto model = task::model_from_json(io::read_json(mp));
    auto r = stage("score " + mp.filename().generic_string(),
                   [&] { return task::score_surface(&model, &skel, pts, ctx.cfg.plan.task_scoring); });
    s.stats.clamped += r.stats.clamped;
    s.stats.capped += r.stats.capped;
    per.push_back(std::move(r.scores));
  }
  s.scores = task::combine_constraints(per, s.cloud.size());
  return s;
}

nlohmann::json score_summary(const Scored& s) {
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (double v : s.scores) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  return {{"points", s.scores.size()},
          {"baseline", s.baseline},
          {"min", lo},
          {"max", hi},
          {"mean", sum / static_cast<double>(s.scores.size())},
          {"clamped", s.stats.clamped},
          {"capped", s.stats.capped}};
}

int cmd_score_surface(Ctx& ctx) {
  const Scored s = score_cloud(ctx);
  io::PlyCloud ply;
  ply.cloud = s.cloud;
  ply.comments = ply_comments(ctx);
  for (double v : s.scores) ply.score.push_back(static_cast<float>(v));
  io::write_ply(ctx.out_dir / "scores.ply", ply);
  announce(ctx, ctx.out_dir / "scores.ply");
  nlohmann::json j = score_summary(s);
  j["metadata"] = metadata(ctx);
  io::write_json(ctx.out_dir / "score_summary.json", j);
  announce(ctx, ctx.out_dir / "score_summary.json");
  return 0;
}

// Piecewise-linear ramp through five viridis samples; 1 maps to yellow.
std::array<std::uint8_t, 3> ramp(double t) {
  static const double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k)
    c[static_cast<std::size_t>(k)] =
        static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  return c;
}

int cmd_heatmap(Ctx& ctx) {
  const Scored s = score_cloud(ctx);
  io::PlyCloud ply;
  ply.cloud = s.cloud;
  ply.comments = ply_comments(ctx);
  for (double v : s.scores) {
    ply.score.push_back(static_cast<float>(v));
    ply.color.push_back(ramp(v));
  }
  io::write_ply(ctx.out_dir / "heatmap.ply", ply);
  announce(ctx, ctx.out_dir / "heatmap.ply");
  return 0;
}

// ---------------------------------------------------------------- plan

int cmd_plan(Ctx& ctx) {
  const Scored s = score_cloud(ctx);
  const auto result = stage("plan", [&] {
    return grasp::plan_with_scores(s.cloud, s.baseline ? std::span<const double>{} : std::span<const double>(s.scores),
                                   s.baseline, ctx.cfg.plan, ctx.cfg.score, ctx.cfg.gripper);
  });
  auto j = grasp::to_json(result);
  j["gripper"] = grasp::to_json(ctx.cfg.gripper);
  j["plan"] = grasp::to_json(ctx.cfg.plan);
  j["metadata"] = metadata(ctx);
  io::write_json(ctx.out_dir / "grasps.json", j);
  announce(ctx, ctx.out_dir / "grasps.json");

  // Contact overlay: refined grasp red, the other scored candidates grey.
  io::PlyCloud overlay;
  overlay.comments = ply_comments(ctx);
  const auto add = [&](const grasp::Candidate& c, std::array<std::uint8_t, 3> col) {
    for (const auto& k : c.contacts) {
      overlay.cloud.points.push_back({k.position, k.normal, k.c, k.u});
      overlay.score.push_back(static_cast<float>(c.score.total));
      overlay.color.push_back(col);
    }
  };
  add(result.refined.grasp, {255, 0, 0});
  for (const auto& c : result.ranked)
    if (c.status == grasp::CandidateStatus::Scored) add(c, {160, 160, 160});
  io::write_ply(ctx.out_dir / "contacts.ply", overlay);
  announce(ctx, ctx.out_dir / "contacts.ply");
  const auto& best = result.refined.grasp;
  ctx.out << "best grasp: total " << best.score.total << " (p1 " << best.score.p1 << ", p2 " << best.score.p2
          << ", p3 " << best.score.p3 << "), opening " << best.opening << " mm\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Task-oriented grasp planning from fused depth observations"};
  app.require_subcommand(1);
  Options opts;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(Ctx&);
  };
  const Command commands[] = {
      {"render", "ray-cast synthetic depth frames from a scene spec", cmd_render},
      {"fuse", "fuse masked depth frames into a volume and surface cloud", cmd_fuse},
      {"triangulate", "triangulate skeleton keypoints from 2D observations", cmd_triangulate},
      {"train", "fit a task model from an annotated exemplar", cmd_train},
      {"score-surface", "score every cloud point with the task model(s)", cmd_score_surface},
      {"heatmap", "write a colour-mapped score cloud", cmd_heatmap},
      {"plan", "generate, score and refine grasps", cmd_plan},
      {"show-config", "print the effective configuration", nullptr},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opts.config, "run config JSON");
    sub->add_option("--seed", opts.seed, "random seed");
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--voxel-size", opts.voxel_size, "voxel size, mm");
    sub->add_option("--weights", opts.weights, "score weights w1,w2,w3");
    sub->add_option("--task-model", opts.task_model, "task model JSON");
    sub->add_flag("--baseline", opts.baseline, "ignore task models");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  const Command& cmd = commands[which];

  try {
    config::RunConfig cfg = effective_config(opts);
    if (!cmd.fn) {
      out << config::to_json(cfg).dump(2) << "\n";
      return 0;
    }
    fs::path out_dir = !opts.out.empty() ? fs::path(opts.out) : cfg.paths.out.value_or(fs::path("."));
    fs::create_directories(out_dir);
    Ctx ctx{cmd.name, std::move(cfg), out_dir, out, err};
    return cmd.fn(ctx);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << cmd.name << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error [io]: " << cmd.name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error [internal]: " << cmd.name << ": " << e.what() << "\n";
    return 4;
  }
}

}  // namespace taskgrasp::cli
