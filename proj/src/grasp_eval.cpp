#include "taskgrasp/grasp_eval.hpp"

#include "taskgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace taskgrasp::grasp {

void ScoreConfig::validate() const {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) fail(ErrorKind::InvalidConfig, "score weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::InvalidConfig, "score weights must sum to 1");
  if (!(friction_cone > 0.0 && friction_cone < std::numbers::pi))
    fail(ErrorKind::InvalidConfig, "friction cone angle must lie in (0, pi)");
  if (!(c_max > 0.0)) fail(ErrorKind::InvalidConfig, "c_max must be positive");
}

namespace {

void check_contacts(std::span<const Contact> contacts) {
  if (contacts.empty()) fail(ErrorKind::InvalidContact, "no contacts");
  for (const auto& c : contacts)
    if (!(c.normal.norm() > 0.0) || !(c.closing.norm() > 0.0))
      fail(ErrorKind::InvalidContact, "contact has a zero-length normal or closing direction");
}

}  // namespace

double contact_angle(const Contact& c) {
  const double d = c.normal.normalized().dot(c.closing.normalized());
  return std::acos(std::clamp(d, -1.0, 1.0));
}

double contact_angle_score(std::span<const Contact> contacts, double friction_cone) {
  check_contacts(contacts);
  double sum = 0.0;
  for (const auto& c : contacts) {
    const double dev = std::abs(std::numbers::pi - contact_angle(c));
    if (!(dev < friction_cone / 2.0)) return 0.0;
    sum += 1.0 - (2.0 / friction_cone) * dev;
  }
  return sum / static_cast<double>(contacts.size());
}

double surface_quality_score(std::span<const Contact> contacts, double c_max) {
  check_contacts(contacts);
  double p = 1.0;
  for (const auto& c : contacts) {
    if (!(c.c < c_max)) return 0.0;
    p *= (1.0 - c.c / c_max) * std::max(0.0, 1.0 - 3.0 * c.u);
  }
  return p;
}

GraspScore combined_score(double p1, double p2, double p3, const ScoreConfig& cfg) {
  cfg.validate();
  for (double p : {p1, p2, p3})
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidScore, "criterion outside [0, 1]");
  const auto& w = cfg.weights;
  return {p1, p2, p3, w[0] * p1 + w[1] * p2 + w[2] * p3};
}

ScoreConfig baseline_config(const ScoreConfig& cfg) {
  ScoreConfig out = cfg;
  const double s = cfg.weights[0] + cfg.weights[1];
  if (!(s > 0.0)) fail(ErrorKind::InvalidConfig, "baseline mode needs w1 + w2 > 0");
  out.weights = {cfg.weights[0] / s, cfg.weights[1] / s, 0.0};
  return out;
}

double task_score(std::span<const Contact> contacts) {
  if (contacts.empty()) return 1.0;
  double log_sum = 0.0;
  for (const auto& c : contacts) {
    if (!(c.task >= 0.0 && c.task <= 1.0)) fail(ErrorKind::InvalidScore, "task score outside [0, 1]");
    if (c.task == 0.0) return 0.0;
    log_sum += std::log(c.task);
  }
  return std::exp(log_sum / static_cast<double>(contacts.size()));
}

GraspScore score_contacts(std::span<const Contact> contacts, const ScoreConfig& cfg) {
  const double p1 = contact_angle_score(contacts, cfg.friction_cone);
  const double p2 = surface_quality_score(contacts, cfg.c_max);
  const double p3 = std::min(1.0, task_score(contacts));
  return combined_score(p1, p2, p3, cfg);
}

nlohmann::json to_json(const GraspScore& s) {
  return {{"p1", s.p1}, {"p2", s.p2}, {"p3", s.p3}, {"total", s.total}};
}

nlohmann::json to_json(const ScoreConfig& s) {
  return {{"weights", s.weights}, {"friction_cone", s.friction_cone}, {"c_max", s.c_max}};
}

ScoreConfig score_config_from_json(const nlohmann::json& j, ScoreConfig base) {
  try {
    if (j.contains("weights")) {
      const auto w = j.at("weights").get<std::vector<double>>();
      if (w.size() != 3) fail(ErrorKind::InvalidConfig, "weights must have three entries");
      base.weights = {w[0], w[1], w[2]};
    }
    base.friction_cone = j.value("friction_cone", base.friction_cone);
    base.c_max = j.value("c_max", base.c_max);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("score config: ") + e.what());
  }
  base.validate();
  return base;
}

}  // namespace taskgrasp::grasp
