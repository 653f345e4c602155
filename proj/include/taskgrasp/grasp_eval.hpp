#pragma once

// Weighted probabilistic grasp criteria: contact-angle quality (P1),
// surface-recovery quality (P2) and the task product (P3).

#include "taskgrasp/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <span>
#include <vector>

namespace taskgrasp::grasp {

struct Contact {
  Vec3 position;
  Vec3 normal;     // outward surface normal, unit
  Vec3 closing;    // direction the finger pushes, unit
  double c = 0.0;  // location std. dev., mm
  double u = 0.0;  // surface variation
  double task = 1.0;  // mean task score of the contact's points
};

using ContactSet = std::vector<Contact>;

struct ScoreConfig {
  std::array<double, 3> weights{0.4, 0.3, 0.3};
  double friction_cone = 0.8;  // rad
  double c_max = 3.0;          // mm

  void validate() const;  // throws InvalidConfig
};

struct GraspScore {
  double p1 = 0.0, p2 = 0.0, p3 = 0.0, total = 0.0;
};

// Angle between the finger closing direction and the outward normal; pi is
// perfect opposition.
double contact_angle(const Contact& c);

// Mean of 1 - (2/cone)|pi - alpha_i| when every contact satisfies
// |pi - alpha_i| < cone/2, else 0.
double contact_angle_score(std::span<const Contact> contacts, double friction_cone);

// prod (1 - c_i/c_max)(1 - 3 u_i) when every c_i < c_max, else 0. Negative
// (1 - 3u) factors are clamped to 0.
double surface_quality_score(std::span<const Contact> contacts, double c_max);

GraspScore combined_score(double p1, double p2, double p3, const ScoreConfig& cfg);

// Baseline mode: P3 dropped, its weight redistributed over w1, w2 in
// proportion.
ScoreConfig baseline_config(const ScoreConfig& cfg);

// Geometric mean of the contacts' task scores.
double task_score(std::span<const Contact> contacts);

GraspScore score_contacts(std::span<const Contact> contacts, const ScoreConfig& cfg);

nlohmann::json to_json(const GraspScore& s);
nlohmann::json to_json(const ScoreConfig& s);
ScoreConfig score_config_from_json(const nlohmann::json& j, ScoreConfig base = {});

}  // namespace taskgrasp::grasp
