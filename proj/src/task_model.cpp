#include "taskgrasp/task_model.hpp"

#include "taskgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace taskgrasp::task {

using gmm::Vec2;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void ExemplarAnnotation::validate(std::span<const Vec3> surface, double max_surface_distance) const {
  if (grasp_points.size() < 3) fail(ErrorKind::InvalidInput, "exemplar needs at least 3 grasp points");
  exemplar.spec.validate();
  if (surface.empty()) return;
  for (const auto& g : grasp_points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : surface) best = std::min(best, (s - g).squaredNorm());
    if (std::sqrt(best) > max_surface_distance)
      fail(ErrorKind::InvalidInput, "grasp point is not on the exemplar surface");
  }
}

const KeypointGmm& TaskModel::gmm_for(int keypoint) const {
  const auto k = static_cast<std::size_t>(keypoint);
  if (k >= keypoints.size() || !keypoints[k])
    fail(ErrorKind::InvalidInput, "task model has no mixture for keypoint " + std::to_string(keypoint));
  return *keypoints[k];
}

namespace {

// Length of the link that defines keypoint k's frame (lowest-index incident).
double frame_link_length(const skeleton::Skeleton& s, int k) {
  for (std::size_t l = 0; l < s.spec.links.size(); ++l)
    if (s.spec.links[l][0] == k || s.spec.links[l][1] == k) return s.link_lengths[l];
  return 1.0;
}

// Shift theta samples onto one branch so the widest empty arc of the circle
// straddles the seam; clusters crossing +-pi become contiguous.
void unwrap_theta(std::vector<Vec2>& samples) {
  if (samples.size() < 2) return;
  std::vector<double> th;
  th.reserve(samples.size());
  for (const auto& s : samples) th.push_back(s[0]);
  std::sort(th.begin(), th.end());
  double best_gap = th.front() + kTwoPi - th.back();
  double cut = th.back();  // gap starts after the last value and wraps
  for (std::size_t i = 1; i < th.size(); ++i) {
    const double g = th[i] - th[i - 1];
    if (g > best_gap) {
      best_gap = g;
      cut = th[i - 1];
    }
  }
  const double start = cut + 0.5 * best_gap;
  for (auto& s : samples) {
    double t = s[0];
    while (t < start) t += kTwoPi;
    while (t >= start + kTwoPi) t -= kTwoPi;
    s[0] = t;
  }
}

skeleton::Spherical spherical_or_pole(const Mat3& frame, const Vec3& kp, double len, const Vec3& p) {
  try {
    return skeleton::to_spherical(frame, kp, len, p);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UndefinedDirection) throw;
    return {0.0, 0.0};
  }
}

}  // namespace

double wrapped_density(const gmm::Mixture& m, double theta, double phi) {
  return std::max({m.density(Vec2(theta, phi)), m.density(Vec2(theta + kTwoPi, phi)),
                   m.density(Vec2(theta - kTwoPi, phi))});
}

TaskModel train(const ExemplarAnnotation& annotation, const TrainOptions& opts) {
  return train(annotation, opts, nullptr);
}

TaskModel train(const ExemplarAnnotation& annotation, const TrainOptions& opts,
                TrainReport* report) {
  annotation.validate();
  if (opts.max_components < 1) fail(ErrorKind::InvalidConfig, "max_components must be >= 1");
  const auto& skel = annotation.exemplar;
  const auto& spec = skel.spec;
  const std::size_t nk = spec.keypoints.size();

  TaskModel model;
  model.class_name = annotation.class_name;
  model.task = annotation.task;
  model.keypoint_names = spec.keypoints;
  model.links = spec.links;
  model.training_link_lengths = skel.link_lengths;
  model.seed = opts.seed;
  model.max_components = opts.max_components;
  model.keypoints.resize(nk);
  if (report) report->traces.assign(nk, {});

  std::vector<std::size_t> point_link;
  for (const auto& g : annotation.grasp_points) point_link.push_back(skeleton::nearest_link(skel, g));

  for (std::size_t k = 0; k < nk; ++k) {
    const int kp = static_cast<int>(k);
    const bool linked = std::any_of(spec.links.begin(), spec.links.end(),
                                    [&](const auto& l) { return l[0] == kp || l[1] == kp; });
    if (!linked) continue;

    std::vector<Vec3> near;
    for (std::size_t i = 0; i < annotation.grasp_points.size(); ++i) {
      const auto& l = spec.links[point_link[i]];
      if (l[0] == kp || l[1] == kp) near.push_back(annotation.grasp_points[i]);
    }
    KeypointGmm kg;
    kg.keypoint = kp;
    int max_k = opts.max_components;
    if (near.size() < 3) {
      near = annotation.grasp_points;
      kg.low_data = true;
      max_k = 1;
    }
    const double len = frame_link_length(skel, kp);
    std::vector<Vec2> samples;
    for (const auto& p : near) {
      if ((p - skel.keypoints[k]).norm() == 0.0) continue;
      const auto s = skeleton::to_spherical(skel.frames[k], skel.keypoints[k], len, p);
      samples.emplace_back(s.theta, s.phi);
    }
    if (samples.empty()) fail(ErrorKind::InvalidInput, "no usable grasp directions for a keypoint");
    unwrap_theta(samples);
    kg.samples = samples.size();

    const std::uint64_t seed = splitmix64(opts.seed + 0x9e37ULL * (k + 1));
    gmm::Selection sel = gmm::select_by_bic(samples, max_k, seed, opts.em);
    sel.mixture.validate(opts.em.cov_floor);
    kg.mixture = std::move(sel.mixture);
    // Move the whole mixture by whole turns so its heaviest component reads
    // in (-pi, pi]; components stay on one branch.
    const auto heavy = std::max_element(kg.mixture.components.begin(), kg.mixture.components.end(),
                                        [](const auto& a, const auto& b) { return a.weight < b.weight; });
    const double turns = std::ceil((heavy->mean[0] - std::numbers::pi) / kTwoPi);
    for (auto& c : kg.mixture.components) c.mean[0] -= turns * kTwoPi;
    kg.bic = std::move(sel.table);
    if (report) report->traces[k] = std::move(sel.traces);

    double norm = 0.0;
    for (const auto& c : kg.mixture.components)
      norm = std::max(norm, wrapped_density(kg.mixture, c.mean[0], c.mean[1]));
    if (!(norm > 0.0) || !std::isfinite(norm))
      fail(ErrorKind::Numerical, "mixture normaliser is not positive");
    kg.normalizer = norm;
    model.keypoints[k] = std::move(kg);
  }
  return model;
}

void check_conforms(const TaskModel& model, const skeleton::Skeleton& skel) {
  if (skel.spec.keypoints.size() != model.keypoint_names.size() || skel.spec.links != model.links)
    fail(ErrorKind::InvalidInput,
         "skeleton '" + skel.spec.class_name + "' does not match the model's keypoint layout");
}

SurfaceScores score_surface(const TaskModel* model, const skeleton::Skeleton* skel,
                            std::span<const Vec3> points, const ScoreOptions& opts) {
  SurfaceScores out;
  out.scores.assign(points.size(), 1.0);
  if (!model) return out;
  if (!skel) fail(ErrorKind::InvalidInput, "scoring with a task model needs a skeleton");
  check_conforms(*model, *skel);
  if (skel->link_count() == 0) fail(ErrorKind::InvalidInput, "skeleton has no links");

  struct Query {
    std::vector<std::size_t> index;
    std::vector<double> theta, phi;
  };
  std::vector<Query> queries(skel->keypoints.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t l = skeleton::nearest_link(*skel, points[i]);
    const double len = skel->link_lengths[l];
    if (skeleton::link_distance(*skel, l, points[i]) > opts.distance_cap * len) {
      out.scores[i] = 0.0;
      ++out.stats.capped;
      continue;
    }
    for (int kp : skel->spec.links[l]) {
      const auto k = static_cast<std::size_t>(kp);
      const auto s = spherical_or_pole(skel->frames[k], skel->keypoints[k], len, points[i]);
      queries[k].index.push_back(i);
      queries[k].theta.push_back(s.theta);
      queries[k].phi.push_back(s.phi);
    }
  }

  for (std::size_t k = 0; k < queries.size(); ++k) {
    auto& q = queries[k];
    if (q.index.empty()) continue;
    const KeypointGmm& kg = model->gmm_for(static_cast<int>(k));
    const auto packed = kg.mixture.packed();
    const std::size_t n = q.index.size();
    std::vector<double> best(n), shifted(n), tmp(n);
    kernels::mixture_density(packed, q.theta, q.phi, best);
    for (double offset : {kTwoPi, -kTwoPi}) {
      for (std::size_t i = 0; i < n; ++i) shifted[i] = q.theta[i] + offset;
      kernels::mixture_density(packed, shifted, q.phi, tmp);
      for (std::size_t i = 0; i < n; ++i) best[i] = std::max(best[i], tmp[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = best[i] / kg.normalizer;
      if (s > 1.0) {
        s = 1.0;
        ++out.stats.clamped;
      }
      out.scores[q.index[i]] *= s;
    }
  }
  return out;
}

double score_point(const TaskModel& model, const skeleton::Skeleton& skel, const Vec3& point,
                   const ScoreOptions& opts, ScoreStats* stats) {
  const Vec3 pts[1] = {point};
  const SurfaceScores s = score_surface(&model, &skel, pts, opts);
  if (stats) {
    stats->clamped += s.stats.clamped;
    stats->capped += s.stats.capped;
  }
  return s.scores[0];
}

std::vector<double> combine_constraints(std::span<const std::vector<double>> constraints,
                                        std::size_t point_count) {
  std::vector<double> out(point_count, 1.0);
  for (const auto& c : constraints) {
    if (c.size() != point_count) fail(ErrorKind::InvalidInput, "constraint array length mismatch");
    for (std::size_t i = 0; i < point_count; ++i) {
      if (!(c[i] >= 0.0 && c[i] <= 1.0)) fail(ErrorKind::InvalidScore, "constraint score outside [0,1]");
      out[i] *= c[i];
    }
  }
  return out;
}

nlohmann::json to_json(const TaskModel& model) {
  nlohmann::json kps = nlohmann::json::array();
  for (const auto& k : model.keypoints) {
    if (!k) continue;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : k->mixture.components)
      comps.push_back({{"w", c.weight},
                       {"mean", {c.mean[0], c.mean[1]}},
                       {"cov", {{c.cov(0, 0), c.cov(0, 1)}, {c.cov(1, 0), c.cov(1, 1)}}}});
    nlohmann::json bic = nlohmann::json::array();
    for (const auto& b : k->bic)
      bic.push_back({{"components", b.components}, {"log_likelihood", b.log_likelihood}, {"bic", b.bic}});
    kps.push_back({{"keypoint", k->keypoint},
                   {"name", model.keypoint_names[static_cast<std::size_t>(k->keypoint)]},
                   {"components", comps},
                   {"normalizer", k->normalizer},
                   {"low_data", k->low_data},
                   {"samples", k->samples},
                   {"bic", bic}});
  }
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : model.links) links.push_back({l[0], l[1]});
  return {{"class", model.class_name},
          {"task", model.task},
          {"keypoint_names", model.keypoint_names},
          {"links", links},
          {"keypoints", kps},
          {"training", {{"seed", model.seed},
                        {"max_components", model.max_components},
                        {"link_lengths", model.training_link_lengths}}}};
}

TaskModel model_from_json(const nlohmann::json& j) {
  TaskModel m;
  try {
    m.class_name = j.at("class").get<std::string>();
    m.task = j.at("task").get<std::string>();
    m.keypoint_names = j.at("keypoint_names").get<std::vector<std::string>>();
    for (const auto& l : j.at("links")) m.links.push_back({l.at(0).get<int>(), l.at(1).get<int>()});
    m.keypoints.resize(m.keypoint_names.size());
    for (const auto& jk : j.at("keypoints")) {
      KeypointGmm k;
      k.keypoint = jk.at("keypoint").get<int>();
      if (k.keypoint < 0 || static_cast<std::size_t>(k.keypoint) >= m.keypoints.size())
        fail(ErrorKind::InvalidInput, "task model keypoint index out of range");
      for (const auto& jc : jk.at("components")) {
        gmm::Component c;
        c.weight = jc.at("w").get<double>();
        c.mean = Vec2(jc.at("mean").at(0).get<double>(), jc.at("mean").at(1).get<double>());
        for (int r = 0; r < 2; ++r)
          for (int cc = 0; cc < 2; ++cc) c.cov(r, cc) = jc.at("cov").at(r).at(cc).get<double>();
        k.mixture.components.push_back(c);
      }
      k.normalizer = jk.at("normalizer").get<double>();
      k.low_data = jk.value("low_data", false);
      k.samples = jk.value("samples", std::size_t{0});
      if (jk.contains("bic"))
        for (const auto& b : jk.at("bic"))
          k.bic.push_back({b.at("components").get<int>(), b.at("log_likelihood").get<double>(),
                           b.at("bic").get<double>()});
      if (!(k.normalizer > 0.0)) fail(ErrorKind::InvalidInput, "task model normalizer must be positive");
      k.mixture.validate(0.0);
      m.keypoints[static_cast<std::size_t>(k.keypoint)] = std::move(k);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      m.seed = t.value("seed", std::uint64_t{0});
      m.max_components = t.value("max_components", 4);
      m.training_link_lengths = t.value("link_lengths", std::vector<double>{});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("task model: ") + e.what());
  }
  for (const auto& l : m.links)
    for (int kp : l)
      if (!m.keypoints[static_cast<std::size_t>(kp)])
        fail(ErrorKind::InvalidInput, "task model lacks a mixture for a link endpoint");
  return m;
}

}  // namespace taskgrasp::task
