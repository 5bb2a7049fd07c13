#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "ddfusion/errors.hpp"

namespace ddfusion {

inline constexpr int kStateSize = 8;

using Vector8 = Eigen::Matrix<double, kStateSize, 1>;
using Matrix8 = Eigen::Matrix<double, kStateSize, kStateSize>;

/// Position of each quantity inside the stacked state vector.
enum StateIndex : int {
  kX = 0,
  kY = 1,
  kPsi = 2,
  kOmegaR = 3,
  kOmegaL = 4,
  kRadiusR = 5,
  kRadiusL = 6,
  kBias = 7,
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

/// Belief over the differential-drive vehicle: planar pose, wheel angular
/// speeds and the uncertain model parameters (wheel radii, gyro yaw-rate bias).
///
/// Heading is kept unwrapped; only innovations and error metrics are wrapped.
struct StateVector {
  double x = 0.0;        ///< east [m]
  double y = 0.0;        ///< north [m]
  double psi = 0.0;      ///< heading [rad]
  double omega_r = 0.0;  ///< right wheel speed [rad/s]
  double omega_l = 0.0;  ///< left wheel speed [rad/s]
  double radius_r = 0.1; ///< [m]
  double radius_l = 0.1; ///< [m]
  double bias = 0.0;     ///< IMU yaw-rate bias [rad/s]

  Vector8 to_vector() const {
    Vector8 v;
    v << x, y, psi, omega_r, omega_l, radius_r, radius_l, bias;
    return v;
  }

  static StateVector from_vector(const Vector8& v) {
    return {v[kX], v[kY], v[kPsi], v[kOmegaR], v[kOmegaL], v[kRadiusR], v[kRadiusL], v[kBias]};
  }

  bool is_valid() const { return to_vector().allFinite() && radius_r > 0.0 && radius_l > 0.0; }

  /// Forward speed of the vehicle reference point [m/s].
  double linear_speed() const { return 0.5 * (omega_r * radius_r + omega_l * radius_l); }

  /// Kinematic yaw rate implied by the wheels, without bias [rad/s].
  double yaw_rate(double track_width) const {
    return (omega_r * radius_r - omega_l * radius_l) / track_width;
  }

  friend bool operator==(const StateVector&, const StateVector&) = default;
};

struct ModelConfig {
  double track_width = 0.0;  ///< wheel separation [m], no default on purpose
  double sample_time = 1.0 / 60.0;

  bool is_valid() const {
    return std::isfinite(track_width) && std::isfinite(sample_time) && track_width > 0.0 &&
           sample_time > 0.0;
  }

  void validate() const {
    if (!(std::isfinite(track_width) && track_width > 0.0))
      throw ConfigError("track_width must be positive and finite");
    if (!(std::isfinite(sample_time) && sample_time > 0.0))
      throw ConfigError("sample_time must be positive and finite");
  }
};

/// One explicit-Euler step of the uncertain differential-drive kinematics.
/// Wheel speeds, radii and bias evolve statically.
inline StateVector predict_state(const StateVector& s, const ModelConfig& cfg) {
  const double ts = cfg.sample_time;
  const double v = s.linear_speed();
  StateVector next = s;
  next.x = s.x + v * std::cos(s.psi) * ts;
  next.y = s.y + v * std::sin(s.psi) * ts;
  next.psi = s.psi + s.yaw_rate(cfg.track_width) * ts;
  return next;
}

/// Analytic Jacobian of predict_state with respect to the state.
inline Matrix8 state_jacobian(const StateVector& s, const ModelConfig& cfg) {
  const double ts = cfg.sample_time;
  const double t = cfg.track_width;
  const double v = s.linear_speed();
  const double c = std::cos(s.psi);
  const double sn = std::sin(s.psi);

  Matrix8 a = Matrix8::Identity();

  a(kX, kPsi) = -v * sn * ts;
  a(kX, kOmegaR) = 0.5 * s.radius_r * c * ts;
  a(kX, kOmegaL) = 0.5 * s.radius_l * c * ts;
  a(kX, kRadiusR) = 0.5 * s.omega_r * c * ts;
  a(kX, kRadiusL) = 0.5 * s.omega_l * c * ts;

  a(kY, kPsi) = v * c * ts;
  a(kY, kOmegaR) = 0.5 * s.radius_r * sn * ts;
  a(kY, kOmegaL) = 0.5 * s.radius_l * sn * ts;
  a(kY, kRadiusR) = 0.5 * s.omega_r * sn * ts;
  a(kY, kRadiusL) = 0.5 * s.omega_l * sn * ts;

  a(kPsi, kOmegaR) = s.radius_r / t * ts;
  a(kPsi, kOmegaL) = -s.radius_l / t * ts;
  a(kPsi, kRadiusR) = s.omega_r / t * ts;
  a(kPsi, kRadiusL) = -s.omega_l / t * ts;

  return a;
}

}  // namespace ddfusion
