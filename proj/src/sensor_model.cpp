#include "taskgrasp/sensor_model.hpp"

#include "taskgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

namespace taskgrasp::sensor {

void CameraIntrinsics::validate() const {
  if (x_res <= 0 || y_res <= 0)
    fail(ErrorKind::InvalidIntrinsics, "resolution must be positive");
  if (!(hfov > 0.0 && hfov < std::numbers::pi))
    fail(ErrorKind::InvalidIntrinsics, "hfov must lie in (0, pi)");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    fail(ErrorKind::InvalidIntrinsics, "principal point must be finite");
}

double CameraIntrinsics::focal() const { return focal_length(*this); }

double focal_length(const CameraIntrinsics& intr) {
  if (!(intr.hfov > 0.0 && intr.hfov < std::numbers::pi))
    fail(ErrorKind::InvalidIntrinsics, "hfov must lie in (0, pi)");
  if (intr.x_res <= 0) fail(ErrorKind::InvalidIntrinsics, "x_res must be positive");
  return 0.5 * static_cast<double>(intr.x_res) / std::tan(intr.hfov / 2.0);
}

double depth_rms_error(double depth_mm, double focal_px) {
  if (!(depth_mm >= 0.0) || !std::isfinite(depth_mm))
    fail(ErrorKind::InvalidInput, "depth must be finite and non-negative");
  if (!(focal_px > 0.0)) fail(ErrorKind::InvalidInput, "focal length must be positive");
  return 0.08 * depth_mm * depth_mm / (55.0 * focal_px);
}

std::optional<double> incidence_error(double theta, double clamp) {
  if (!(theta >= 0.0)) fail(ErrorKind::InvalidInput, "incidence angle must be non-negative");
  if (theta >= clamp || theta >= std::numbers::pi / 2.0) return std::nullopt;
  const double gap = std::numbers::pi / 2.0 - theta;
  return theta / (gap * gap);
}

std::optional<NoiseEstimate> estimate_noise(double depth_mm, double theta,
                                            const CameraIntrinsics& intr, double clamp) {
  const double drms = depth_rms_error(depth_mm, focal_length(intr));
  const auto inc = incidence_error(theta, clamp);
  if (!inc) return std::nullopt;
  const double sum = drms + *inc;
  return NoiseEstimate{drms, *inc, sum * sum};
}

std::optional<double> measurement_variance(double depth_mm, double theta,
                                           const CameraIntrinsics& intr, double clamp) {
  const auto n = estimate_noise(depth_mm, theta, intr, clamp);
  if (!n) return std::nullopt;
  return n->total_variance;
}

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics intr;
  try {
    intr.x_res = j.at("x_res").get<int>();
    intr.y_res = j.at("y_res").get<int>();
    intr.hfov = j.at("hfov_deg").get<double>() * std::numbers::pi / 180.0;
    intr.cx = j.value("cx", 0.5 * (intr.x_res - 1));
    intr.cy = j.value("cy", 0.5 * (intr.y_res - 1));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidIntrinsics, std::string("intrinsics: ") + e.what());
  }
  intr.validate();
  return intr;
}

nlohmann::json to_json(const CameraIntrinsics& intr) {
  return {{"x_res", intr.x_res},
          {"y_res", intr.y_res},
          {"hfov_deg", intr.hfov * 180.0 / std::numbers::pi},
          {"cx", intr.cx},
          {"cy", intr.cy}};
}

}  // namespace taskgrasp::sensor
