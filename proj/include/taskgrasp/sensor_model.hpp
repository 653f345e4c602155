#pragma once

// Per-pixel depth noise for structured-light/stereo depth cameras: an RMS
// term that grows quadratically with depth plus an incidence-angle term.
// Depths are millimetres, angles radians.

#include <nlohmann/json_fwd.hpp>

#include <optional>

namespace taskgrasp::sensor {

inline constexpr double kDefaultGrazingClamp = 1.3;  // rad

struct CameraIntrinsics {
  int x_res = 1280;
  int y_res = 720;
  double hfov = 1.1344640137963142;  // 65 deg
  double cx = 639.5;
  double cy = 359.5;

  // Throws InvalidIntrinsics.
  void validate() const;
  double focal() const;
};

struct NoiseEstimate {
  double depth_rms = 0.0;        // mm
  double incidence_error = 0.0;  // mm
  double total_variance = 0.0;   // mm^2
};

// 0.5 * x_res / tan(hfov / 2), pixels.
double focal_length(const CameraIntrinsics& intr);

// 0.08 d^2 / (55 f), mm.
double depth_rms_error(double depth_mm, double focal_px);

// theta / (pi/2 - theta)^2, mm. nullopt when theta >= clamp (grazing ray,
// excluded from fusion). Negative theta is invalid input.
std::optional<double> incidence_error(double theta, double clamp = kDefaultGrazingClamp);

// (E_drms + E_theta)^2. The two error terms are summed in millimetres and the
// sum squared, i.e. treated as fully correlated.
std::optional<NoiseEstimate> estimate_noise(double depth_mm, double theta,
                                            const CameraIntrinsics& intr,
                                            double clamp = kDefaultGrazingClamp);

std::optional<double> measurement_variance(double depth_mm, double theta,
                                           const CameraIntrinsics& intr,
                                           double clamp = kDefaultGrazingClamp);

// {x_res, y_res, hfov_deg, cx, cy}; focal length is always recomputed.
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CameraIntrinsics& intr);

}  // namespace taskgrasp::sensor
