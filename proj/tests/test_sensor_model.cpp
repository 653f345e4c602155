#include "taskgrasp/error.hpp"
#include "taskgrasp/sensor_model.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace taskgrasp;
using sensor::CameraIntrinsics;

namespace {

constexpr double kPi = std::numbers::pi;

// Hand evaluations of the noise model, kept independent of the library.
double oracle_focal(int x_res, double hfov) { return 0.5 * x_res / std::tan(hfov / 2.0); }
double oracle_drms(double d, double f) { return 0.08 * d * d / (55.0 * f); }
double oracle_etheta(double t) { return t / ((kPi / 2.0 - t) * (kPi / 2.0 - t)); }

CameraIntrinsics intr(int x_res, double hfov_deg) {
  CameraIntrinsics c;
  c.x_res = x_res;
  c.y_res = x_res;
  c.hfov = hfov_deg * kPi / 180.0;
  c.cx = (x_res - 1) / 2.0;
  c.cy = (x_res - 1) / 2.0;
  return c;
}

}  // namespace

TEST_CASE("focal length") {
  const CameraIntrinsics d;
  CHECK(sensor::focal_length(d) == doctest::Approx(oracle_focal(1280, 65.0 * kPi / 180.0)).epsilon(1e-12));
  CHECK(sensor::focal_length(d) == doctest::Approx(1004.6).epsilon(1e-4));
  CHECK(sensor::focal_length(intr(2, 90.0)) == doctest::Approx(1.0).epsilon(1e-12));

  for (double bad : {180.0, 0.0, -10.0, 200.0}) {
    try {
      (void)sensor::focal_length(intr(2, bad));
      FAIL("expected InvalidIntrinsics for hfov " << bad);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidIntrinsics);
    }
  }
}

TEST_CASE("depth rms error") {
  const double f = 1004.6;
  CHECK(sensor::depth_rms_error(0.0, f) == 0.0);
  CHECK(sensor::depth_rms_error(500.0, f) == doctest::Approx(oracle_drms(500.0, f)).epsilon(1e-12));
  CHECK(sensor::depth_rms_error(500.0, f) == doctest::Approx(0.362).epsilon(1e-3));
  CHECK(sensor::depth_rms_error(1000.0, f) == doctest::Approx(4.0 * sensor::depth_rms_error(500.0, f)).epsilon(1e-12));
  CHECK(sensor::depth_rms_error(1000.0, f) == doctest::Approx(1.448).epsilon(1e-3));
  CHECK_THROWS_AS((void)sensor::depth_rms_error(-1.0, f), Error);
}

TEST_CASE("incidence error") {
  CHECK(*sensor::incidence_error(0.0) == 0.0);
  CHECK(*sensor::incidence_error(kPi / 4.0) == doctest::Approx(4.0 / kPi).epsilon(1e-12));
  CHECK(*sensor::incidence_error(1.0) == doctest::Approx(oracle_etheta(1.0)).epsilon(1e-12));
  CHECK_FALSE(sensor::incidence_error(1.4).has_value());
  CHECK_FALSE(sensor::incidence_error(1.3).has_value());  // clamp is exclusive
  CHECK(sensor::incidence_error(1.29).has_value());
  CHECK_THROWS_AS((void)sensor::incidence_error(-0.1), Error);
}

TEST_CASE("measurement variance") {
  const CameraIntrinsics d;
  CHECK(*sensor::measurement_variance(0.0, 0.0, d) == 0.0);
  const double f = oracle_focal(1280, 65.0 * kPi / 180.0);
  const double expect = std::pow(oracle_drms(500.0, f) + oracle_etheta(kPi / 4.0), 2.0);
  CHECK(*sensor::measurement_variance(500.0, kPi / 4.0, d) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(*sensor::measurement_variance(500.0, kPi / 4.0, d) == doctest::Approx(2.674).epsilon(1e-3));
  CHECK_FALSE(sensor::measurement_variance(500.0, 1.4, d).has_value());

  const auto est = sensor::estimate_noise(500.0, kPi / 4.0, d);
  REQUIRE(est);
  CHECK(est->depth_rms == doctest::Approx(oracle_drms(500.0, f)).epsilon(1e-12));
  CHECK(est->incidence_error == doctest::Approx(4.0 / kPi).epsilon(1e-12));
}

TEST_CASE("intrinsics json round trip") {
  const CameraIntrinsics a = intr(64, 70.0);
  const auto b = sensor::intrinsics_from_json(sensor::to_json(a));
  CHECK(b.x_res == a.x_res);
  CHECK(b.y_res == a.y_res);
  CHECK(b.hfov == doctest::Approx(a.hfov).epsilon(1e-14));
  CHECK(b.cx == a.cx);
  CHECK(b.cy == a.cy);
  CHECK_THROWS_AS((void)sensor::intrinsics_from_json(nlohmann::json{{"x_res", 10}, {"y_res", 10}, {"hfov_deg", 180.0}}),
                  Error);
}
