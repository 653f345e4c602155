#include "taskgrasp/grasp_gen.hpp"

#include "taskgrasp/error.hpp"
#include "taskgrasp/kernels/kernels.hpp"
#include "taskgrasp/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace taskgrasp::grasp {

void GripperModel::validate() const {
  for (double v : {max_opening, pad_width, pad_height, finger_thickness, palm_thickness})
    if (!(v > 0.0 && std::isfinite(v))) fail(ErrorKind::InvalidConfig, "gripper dimensions must be positive");
  if (!(palm_depth >= pad_height / 2.0))
    fail(ErrorKind::InvalidConfig, "palm must sit behind the pads");
}

void PlanConfig::validate() const {
  if (n_samples == 0) fail(ErrorKind::InvalidConfig, "n_samples must be positive");
  if (rotations < 1) fail(ErrorKind::InvalidConfig, "rotations must be at least 1");
  if (refine_iterations < 0) fail(ErrorKind::InvalidConfig, "refine_iterations must be >= 0");
  if (!(closing.contact_threshold > 0.0) || !(closing.step > 0.0))
    fail(ErrorKind::InvalidConfig, "closing threshold and step must be positive");
  if (!(std::abs(table.normal.norm() - 1.0) < 1e-9))
    fail(ErrorKind::InvalidConfig, "table normal must be unit length");
  if (!(collision_margin >= 0.0)) fail(ErrorKind::InvalidConfig, "collision margin must be >= 0");
}

SampleResult sample_start_points(std::size_t point_count, std::span<const double> weights,
                                 std::size_t n_samples, std::uint64_t seed) {
  if (!weights.empty() && weights.size() != point_count)
    fail(ErrorKind::InvalidInput, "weight count does not match point count");
  SampleResult out;
  if (point_count == 0) return out;
  if (n_samples > point_count) {
    out.all_points = true;
    out.indices.resize(point_count);
    std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
    return out;
  }

  std::vector<double> w(point_count, 1.0);
  if (!weights.empty()) {
    bool any = false;
    for (std::size_t i = 0; i < point_count; ++i) {
      if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
        fail(ErrorKind::InvalidScore, "sampling weights must be finite and non-negative");
      any = any || weights[i] > 0.0;
    }
    if (any) w.assign(weights.begin(), weights.end());
  }

  Rng rng(seed);
  // Efraimidis-Spirakis keys in log form: log(u) / w, larger first.
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(point_count);
  for (std::size_t i = 0; i < point_count; ++i) {
    double u;
    do {
      u = rng.uniform();
    } while (u <= 0.0);
    if (w[i] > 0.0) keys.emplace_back(std::log(u) / w[i], i);
  }
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const std::size_t take = std::min(keys.size(), n_samples);
  for (std::size_t i = 0; i < take; ++i) out.indices.push_back(keys[i].second);

  if (out.indices.size() < n_samples) {
    std::vector<double> cdf(point_count);
    double acc = 0.0;
    for (std::size_t i = 0; i < point_count; ++i) cdf[i] = acc += w[i];
    while (out.indices.size() < n_samples) {
      const double r = rng.uniform() * acc;
      auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
      if (it == cdf.end()) --it;
      out.indices.push_back(static_cast<std::size_t>(it - cdf.begin()));
    }
  }
  return out;
}

GripperPose pose_gripper(const Vec3& point, const Vec3& normal, double roll, const Vec3& up) {
  if (!(normal.norm() > 0.0) || !(up.norm() > 0.0))
    fail(ErrorKind::UndefinedDirection, "zero-length normal or up vector");
  const Vec3 n = normal.normalized();
  const Vec3 a = -n;
  GripperPose out;
  Vec3 ref = up.normalized();
  if (std::abs(n.dot(ref)) > 1.0 - 1e-6) {
    ref = Vec3::UnitX();
    if (std::abs(n.dot(ref)) > 1.0 - 1e-6) ref = Vec3::UnitY();
    out.fallback = true;
  }
  Vec3 b = (ref - ref.dot(a) * a).normalized();
  b = axis_angle(a, roll) * b;
  const Vec3 z = -b;
  const Vec3 y = z.cross(a);
  Mat3 r;
  r.col(0) = a;
  r.col(1) = y.normalized();
  r.col(2) = z;
  out.pose = Pose::Identity();
  out.pose.linear() = r;
  out.pose.translation() = point;
  return out;
}

namespace {

kernels::Footprint footprint_of(const Pose& pose, const GripperModel& g) {
  kernels::Footprint fp{};
  const Mat3 r = pose.rotation();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) fp.rot[3 * i + j] = r(i, j);
  for (int i = 0; i < 3; ++i) fp.origin[i] = pose.translation()[i];
  fp.half_width = g.pad_width / 2.0;
  fp.half_height = g.pad_height / 2.0;
  return fp;
}

Contact average_contact(const CloudView& view, const std::vector<std::size_t>& idx,
                        const Vec3& closing) {
  Contact c;
  c.position.setZero();
  Vec3 nsum = Vec3::Zero();
  double task = 0.0;
  for (std::size_t i : idx) {
    const auto& p = view.cloud->points[i];
    c.position += p.position;
    nsum += p.normal;
    c.c += p.c;
    c.u += p.u;
    task += view.task_scores.empty() ? 1.0 : view.task_scores[i];
  }
  const double n = static_cast<double>(idx.size());
  c.position /= n;
  c.c /= n;
  c.u /= n;
  c.task = std::clamp(task / n, 0.0, 1.0);
  if (nsum.norm() > 1e-12) {
    c.normal = nsum.normalized();
  } else {
    // Opposing normals cancelled; take the point nearest the mean.
    std::size_t best = idx.front();
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
      const double d = (view.cloud->points[i].position - c.position).squaredNorm();
      if (d < bd) bd = d, best = i;
    }
    c.normal = view.cloud->points[best].normal;
  }
  c.closing = closing;
  return c;
}

}  // namespace

ClosingResult close_gripper(const Pose& pose, const GripperModel& gripper, const CloudView& view,
                            const ClosingParams& params, std::optional<std::size_t> sampled_index) {
  if (!view.cloud || !view.columns) fail(ErrorKind::InvalidInput, "closing needs a cloud");
  const std::size_t n = view.cloud->size();
  if (!view.task_scores.empty() && view.task_scores.size() != n)
    fail(ErrorKind::InvalidInput, "task score count does not match the cloud");
  std::vector<double> lx(n);
  const kernels::PointsSoA pts{view.columns->x, view.columns->y, view.columns->z};
  kernels::footprint_depth(pts, footprint_of(pose, gripper), lx);

  const double thr = params.contact_threshold;
  ClosingResult out;
  if (sampled_index) {
    const double v = lx.at(*sampled_index);
    if (!(std::abs(v) <= thr)) fail(ErrorKind::InvalidPose, "sampled point is not under the fixed pad");
  }

  double xmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = lx[i];
    if (std::isnan(v)) continue;
    if (std::abs(v) <= thr) out.fixed_points.push_back(i);
    if (v > 2.0 * thr && v <= gripper.max_opening) xmax = std::max(xmax, v);
  }
  if (out.fixed_points.empty() || !std::isfinite(xmax)) return out;

  double o = gripper.max_opening;
  while (xmax < o - thr) o -= params.step;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = lx[i];
    if (!std::isnan(v) && v > 2.0 * thr && v >= o - thr && v <= o) out.moving_points.push_back(i);
  }

  const Vec3 x = pose.rotation().col(0);
  out.closed = true;
  out.opening = o;
  out.contacts.push_back(average_contact(view, out.fixed_points, x));
  out.contacts.push_back(average_contact(view, out.moving_points, -x));
  return out;
}

std::vector<Vec3> body_vertices(const Pose& pose, const GripperModel& g, double final_opening) {
  const double t = g.finger_thickness, hw = g.pad_width / 2.0, hh = g.pad_height / 2.0;
  const double o = std::clamp(final_opening, 0.0, g.max_opening);
  struct Box {
    double lo[3], hi[3];
  };
  const Box boxes[] = {
      {{-t, -hw, -g.palm_depth}, {0.0, hw, hh}},
      {{o, -hw, -g.palm_depth}, {g.max_opening + t, hw, hh}},
      {{-t, -hw, -g.palm_depth - g.palm_thickness}, {g.max_opening + t, hw, -g.palm_depth}},
  };
  std::vector<Vec3> out;
  out.reserve(24);
  for (const auto& b : boxes)
    for (int c = 0; c < 8; ++c) {
      const Vec3 local((c & 1) ? b.hi[0] : b.lo[0], (c & 2) ? b.hi[1] : b.lo[1],
                       (c & 4) ? b.hi[2] : b.lo[2]);
      out.push_back(pose * local);
    }
  return out;
}

bool check_collision(const Pose& pose, const GripperModel& gripper, const TablePlane& table,
                     double final_opening, double margin) {
  for (const Vec3& v : body_vertices(pose, gripper, final_opening))
    if (!(table.signed_distance(v) > margin)) return false;
  return true;
}

namespace {

struct Evaluator {
  const CloudView& view;
  const GripperModel& gripper;
  const PlanConfig& cfg;
  const ScoreConfig& scoring;

  // Fills status/opening/contacts/score of c from its pose.
  void run(Candidate& c, std::optional<std::size_t> sampled) const {
    ClosingResult closed;
    try {
      closed = close_gripper(c.pose, gripper, view, cfg.closing, sampled);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InvalidPose) throw;
      c.status = CandidateStatus::InvalidPose;
      return;
    }
    if (!closed.closed) {
      c.status = CandidateStatus::Unclosed;
      return;
    }
    c.opening = closed.opening;
    c.contacts = std::move(closed.contacts);
    if (!check_collision(c.pose, gripper, cfg.table, c.opening, cfg.collision_margin)) {
      c.status = CandidateStatus::Collided;
      return;
    }
    c.status = CandidateStatus::Scored;
    c.score = score_contacts(c.contacts, scoring);
  }
};

double roll_for(int r, double step) {
  if (r == 0) return 0.0;
  const int k = (r + 1) / 2;
  return (r % 2 == 1 ? 1.0 : -1.0) * k * step;
}

}  // namespace

PlanResult plan_with_scores(const surface::SurfaceCloud& cloud, std::span<const double> task_scores,
                            bool baseline, const PlanConfig& cfg, const ScoreConfig& scoring,
                            const GripperModel& gripper) {
  cfg.validate();
  scoring.validate();
  gripper.validate();
  if (cloud.empty()) fail(ErrorKind::EmptySurface, "empty surface cloud");
  if (!task_scores.empty() && task_scores.size() != cloud.size())
    fail(ErrorKind::InvalidInput, "task score count does not match the cloud");

  PlanResult out;
  out.baseline = baseline;
  out.effective_scoring = baseline ? baseline_config(scoring) : scoring;
  const std::span<const double> used = baseline ? std::span<const double>{} : task_scores;

  const surface::CloudColumns columns(cloud);
  const CloudView view{&cloud, &columns, used};
  const Evaluator eval{view, gripper, cfg, out.effective_scoring};

  const SampleResult samples = sample_start_points(cloud.size(), used, cfg.n_samples, cfg.seed);
  out.samples = samples.indices;

  std::vector<Candidate> cands;
  for (std::size_t s : samples.indices) {
    const auto& p = cloud.points[s];
    for (int r = 0; r < cfg.rotations; ++r) {
      Candidate c;
      c.id = cands.size();
      c.point_index = s;
      c.roll = roll_for(r, cfg.roll_step);
      const GripperPose gp = pose_gripper(p.position, p.normal, c.roll, cfg.table.normal);
      c.pose = gp.pose;
      c.fallback_frame = gp.fallback;
      eval.run(c, s);
      switch (c.status) {
        case CandidateStatus::Unclosed: ++out.stats.unclosed; break;
        case CandidateStatus::Collided: ++out.stats.collided; break;
        case CandidateStatus::InvalidPose: ++out.stats.invalid_pose; break;
        case CandidateStatus::Scored: ++out.stats.scored; break;
      }
      cands.push_back(std::move(c));
    }
  }
  if (out.stats.scored == 0)
    fail(ErrorKind::NoGraspFound,
         "no candidate survived closing and collision checks (" + std::to_string(out.stats.unclosed) +
             " unclosed, " + std::to_string(out.stats.collided) + " collided, " +
             std::to_string(out.stats.invalid_pose) + " invalid)");

  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    const bool as = a.status == CandidateStatus::Scored, bs = b.status == CandidateStatus::Scored;
    if (as != bs) return as;
    if (as && a.score.total != b.score.total) return a.score.total > b.score.total;
    return a.id < b.id;
  });
  out.ranked = std::move(cands);

  // Greedy coordinate search around the best grasp.
  Candidate best = out.ranked.front();
  out.refined.history.push_back(best.score.total);
  double rot = cfg.rotation_offset, pos = cfg.position_offset;
  for (int it = 0; it < cfg.refine_iterations; ++it) {
    for (int kind = 0; kind < 2; ++kind)
      for (int axis = 0; axis < 3; ++axis)
        for (double sign : {1.0, -1.0}) {
          Candidate trial = best;
          const Vec3 ax = best.pose.rotation().col(axis);
          if (kind == 0) {
            trial.pose.linear() = axis_angle(ax, sign * rot) * best.pose.rotation();
          } else {
            trial.pose.translation() = best.pose.translation() + sign * pos * ax;
          }
          eval.run(trial, std::nullopt);
          if (trial.status == CandidateStatus::Scored && trial.score.total > best.score.total)
            best = std::move(trial);
        }
    rot /= 2.0;
    pos /= 2.0;
    out.refined.history.push_back(best.score.total);
  }
  out.refined.grasp = std::move(best);
  return out;
}

PlanResult plan(const surface::SurfaceCloud& cloud, const skeleton::Skeleton* skel,
                const task::TaskModel* model, const PlanConfig& cfg, const ScoreConfig& scoring,
                const GripperModel& gripper) {
  if (!model) return plan_with_scores(cloud, {}, true, cfg, scoring, gripper);
  const auto pts = cloud.positions();
  const task::SurfaceScores s = task::score_surface(model, skel, pts, cfg.task_scoring);
  return plan_with_scores(cloud, s.scores, false, cfg, scoring, gripper);
}

namespace {

std::string_view status_name(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::Unclosed: return "unclosed";
    case CandidateStatus::Collided: return "collided";
    case CandidateStatus::InvalidPose: return "invalid_pose";
    case CandidateStatus::Scored: return "scored";
  }
  return "unknown";
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

nlohmann::json to_json(const Candidate& c) {
  nlohmann::json j{{"id", c.id},
                   {"point_index", c.point_index},
                   {"roll", c.roll},
                   {"pose", to_row_major(c.pose)},
                   {"fallback_frame", c.fallback_frame},
                   {"status", status_name(c.status)}};
  if (c.status == CandidateStatus::Scored || c.status == CandidateStatus::Collided) {
    j["opening"] = c.opening;
    auto contacts = nlohmann::json::array();
    for (const auto& k : c.contacts)
      contacts.push_back({{"position", vec_json(k.position)},
                          {"normal", vec_json(k.normal)},
                          {"closing", vec_json(k.closing)},
                          {"c", k.c},
                          {"u", k.u},
                          {"task", k.task}});
    j["contacts"] = std::move(contacts);
  }
  if (c.status == CandidateStatus::Scored) j["score"] = to_json(c.score);
  return j;
}

nlohmann::json to_json(const PlanResult& r) {
  nlohmann::json j;
  j["baseline"] = r.baseline;
  j["scoring"] = to_json(r.effective_scoring);
  j["stats"] = {{"unclosed", r.stats.unclosed},
                {"collided", r.stats.collided},
                {"invalid_pose", r.stats.invalid_pose},
                {"scored", r.stats.scored}};
  j["samples"] = r.samples;
  auto ranked = nlohmann::json::array();
  for (const auto& c : r.ranked) ranked.push_back(to_json(c));
  j["candidates"] = std::move(ranked);
  j["refined"] = to_json(r.refined.grasp);
  j["refine_history"] = r.refined.history;
  return j;
}

GripperModel gripper_from_json(const nlohmann::json& j, GripperModel g) {
  try {
    g.max_opening = j.value("max_opening", g.max_opening);
    g.pad_width = j.value("pad_width", g.pad_width);
    g.pad_height = j.value("pad_height", g.pad_height);
    g.finger_thickness = j.value("finger_thickness", g.finger_thickness);
    g.palm_depth = j.value("palm_depth", g.palm_depth);
    g.palm_thickness = j.value("palm_thickness", g.palm_thickness);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("gripper config: ") + e.what());
  }
  g.validate();
  return g;
}

nlohmann::json to_json(const GripperModel& g) {
  return {{"max_opening", g.max_opening},       {"pad_width", g.pad_width},
          {"pad_height", g.pad_height},         {"finger_thickness", g.finger_thickness},
          {"palm_depth", g.palm_depth},         {"palm_thickness", g.palm_thickness}};
}

PlanConfig plan_config_from_json(const nlohmann::json& j, PlanConfig p) {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  try {
    p.n_samples = j.value("n_samples", p.n_samples);
    p.rotations = j.value("rotations", p.rotations);
    if (j.contains("roll_step_deg")) p.roll_step = j.at("roll_step_deg").get<double>() * deg;
    p.refine_iterations = j.value("refine_iterations", p.refine_iterations);
    if (j.contains("rotation_offset_deg"))
      p.rotation_offset = j.at("rotation_offset_deg").get<double>() * deg;
    p.position_offset = j.value("position_offset", p.position_offset);
    p.collision_margin = j.value("collision_margin", p.collision_margin);
    p.closing.contact_threshold = j.value("contact_threshold", p.closing.contact_threshold);
    p.closing.step = j.value("closing_step", p.closing.step);
    p.task_scoring.distance_cap = j.value("distance_cap", p.task_scoring.distance_cap);
    if (j.contains("table")) {
      const auto& t = j.at("table");
      if (t.contains("normal")) {
        const auto n = t.at("normal").get<std::vector<double>>();
        if (n.size() != 3) fail(ErrorKind::InvalidConfig, "table normal needs three entries");
        p.table.normal = Vec3(n[0], n[1], n[2]);
        if (!(p.table.normal.norm() > 0.0)) fail(ErrorKind::InvalidConfig, "zero table normal");
        p.table.normal.normalize();
      }
      p.table.offset = t.value("offset", p.table.offset);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("plan config: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const PlanConfig& p) {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  return {{"n_samples", p.n_samples},
          {"rotations", p.rotations},
          {"roll_step_deg", p.roll_step / deg},
          {"refine_iterations", p.refine_iterations},
          {"rotation_offset_deg", p.rotation_offset / deg},
          {"position_offset", p.position_offset},
          {"collision_margin", p.collision_margin},
          {"contact_threshold", p.closing.contact_threshold},
          {"closing_step", p.closing.step},
          {"distance_cap", p.task_scoring.distance_cap},
          {"table", {{"normal", vec_json(p.table.normal)}, {"offset", p.table.offset}}}};
}

}  // namespace taskgrasp::grasp
