#pragma once

#include <array>
#include <cmath>
#include <initializer_list>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ddfusion/errors.hpp"
#include "ddfusion/state_model.hpp"

namespace ddfusion {

/// Sensor families fused by the filter. Declaration order is the canonical
/// stacking order of measurement rows.
enum class SensorKind : int {
  ImuYawRate = 0,
  Encoder = 1,
  GnssPosition = 2,
  AbsolutePose = 3,
};

inline constexpr std::array<SensorKind, 4> kAllSensorKinds = {
    SensorKind::ImuYawRate, SensorKind::Encoder, SensorKind::GnssPosition,
    SensorKind::AbsolutePose};

inline constexpr int sensor_index(SensorKind k) { return static_cast<int>(k); }

/// Number of scalar rows a sample of this kind contributes.
inline constexpr int block_size(SensorKind k) {
  switch (k) {
    case SensorKind::ImuYawRate: return 1;
    case SensorKind::Encoder: return 2;
    case SensorKind::GnssPosition: return 2;
    case SensorKind::AbsolutePose: return 3;
  }
  return 0;
}

inline constexpr bool is_absolute_position(SensorKind k) {
  return k == SensorKind::GnssPosition || k == SensorKind::AbsolutePose;
}

inline constexpr std::string_view to_string(SensorKind k) {
  switch (k) {
    case SensorKind::ImuYawRate: return "imu";
    case SensorKind::Encoder: return "encoder";
    case SensorKind::GnssPosition: return "gnss";
    case SensorKind::AbsolutePose: return "pose";
  }
  return "?";
}

inline SensorKind sensor_kind_from_string(std::string_view s) {
  for (SensorKind k : kAllSensorKinds)
    if (to_string(k) == s) return k;
  throw ConfigError("unknown sensor kind '" + std::string(s) + "'");
}

/// Small value-type set of sensor kinds.
class SensorSet {
 public:
  constexpr SensorSet() = default;
  constexpr SensorSet(std::initializer_list<SensorKind> kinds) {
    for (SensorKind k : kinds) insert(k);
  }

  static constexpr SensorSet all() {
    return {SensorKind::ImuYawRate, SensorKind::Encoder, SensorKind::GnssPosition,
            SensorKind::AbsolutePose};
  }

  constexpr void insert(SensorKind k) { bits_ |= 1u << sensor_index(k); }
  constexpr void erase(SensorKind k) { bits_ &= ~(1u << sensor_index(k)); }
  constexpr bool contains(SensorKind k) const { return (bits_ >> sensor_index(k)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }

  constexpr bool has_absolute_position() const {
    return contains(SensorKind::GnssPosition) || contains(SensorKind::AbsolutePose);
  }

  /// Total measurement rows for this subset.
  constexpr int rows() const {
    int n = 0;
    for (SensorKind k : kAllSensorKinds)
      if (contains(k)) n += block_size(k);
    return n;
  }

  constexpr bool operator==(const SensorSet&) const = default;

 private:
  unsigned bits_ = 0;
};

/// GNSS antenna mounting point relative to the vehicle reference, in polar form.
struct GnssAntennaOffset {
  double d = 0.0;      ///< radial distance [m]
  double alpha = 0.0;  ///< bearing from the vehicle x-axis [rad]

  void validate() const {
    if (!(std::isfinite(d) && std::isfinite(alpha) && d >= 0.0))
      throw ConfigError("antenna offset must be finite with d >= 0");
  }
};

using RowJacobian = Eigen::Matrix<double, Eigen::Dynamic, kStateSize>;

/// Stacked predicted measurement for the currently available sensors.
struct MeasurementPrediction {
  Eigen::VectorXd values;
  RowJacobian jacobian;
  std::vector<SensorKind> kinds;  ///< one entry per row block, canonical order

  int rows() const { return static_cast<int>(values.size()); }

  /// Row indices holding heading components (wrapped when forming innovations).
  std::vector<int> angle_rows() const {
    std::vector<int> out;
    int row = 0;
    for (SensorKind k : kinds) {
      if (k == SensorKind::AbsolutePose) out.push_back(row + 2);
      row += block_size(k);
    }
    return out;
  }
};

inline Eigen::Vector2d predict_encoder(const StateVector& s) { return {s.omega_r, s.omega_l}; }

inline Eigen::Vector3d predict_pose(const StateVector& s) { return {s.x, s.y, s.psi}; }

inline Eigen::Vector2d predict_gnss(const StateVector& s, const GnssAntennaOffset& off) {
  return {s.x + off.d * std::cos(s.psi + off.alpha), s.y + off.d * std::sin(s.psi + off.alpha)};
}

inline double predict_imu_yaw_rate(const StateVector& s, const ModelConfig& cfg) {
  return s.yaw_rate(cfg.track_width) + s.bias;
}

inline Eigen::Matrix<double, 2, kStateSize> encoder_jacobian(const StateVector&) {
  Eigen::Matrix<double, 2, kStateSize> c = Eigen::Matrix<double, 2, kStateSize>::Zero();
  c(0, kOmegaR) = 1.0;
  c(1, kOmegaL) = 1.0;
  return c;
}

inline Eigen::Matrix<double, 3, kStateSize> pose_jacobian(const StateVector&) {
  Eigen::Matrix<double, 3, kStateSize> c = Eigen::Matrix<double, 3, kStateSize>::Zero();
  c(0, kX) = 1.0;
  c(1, kY) = 1.0;
  c(2, kPsi) = 1.0;
  return c;
}

inline Eigen::Matrix<double, 2, kStateSize> gnss_jacobian(const StateVector& s,
                                                          const GnssAntennaOffset& off) {
  Eigen::Matrix<double, 2, kStateSize> c = Eigen::Matrix<double, 2, kStateSize>::Zero();
  c(0, kX) = 1.0;
  c(1, kY) = 1.0;
  c(0, kPsi) = -off.d * std::sin(s.psi + off.alpha);
  c(1, kPsi) = off.d * std::cos(s.psi + off.alpha);
  return c;
}

inline Eigen::Matrix<double, 1, kStateSize> imu_jacobian(const StateVector& s,
                                                         const ModelConfig& cfg) {
  const double t = cfg.track_width;
  Eigen::Matrix<double, 1, kStateSize> c = Eigen::Matrix<double, 1, kStateSize>::Zero();
  c(0, kOmegaR) = s.radius_r / t;
  c(0, kOmegaL) = -s.radius_l / t;
  c(0, kRadiusR) = s.omega_r / t;
  c(0, kRadiusL) = -s.omega_l / t;
  c(0, kBias) = 1.0;
  return c;
}

/// Stacks predictions and Jacobian rows for the available kinds in canonical
/// order (IMU, encoder, GNSS, pose).
inline MeasurementPrediction stack_predictions(const StateVector& s, SensorSet available,
                                               const ModelConfig& cfg,
                                               const GnssAntennaOffset& offset) {
  if (available.empty())
    throw std::invalid_argument("stack_predictions: empty availability set");

  const int n = available.rows();
  MeasurementPrediction out;
  out.values.resize(n);
  out.jacobian.resize(n, kStateSize);

  int row = 0;
  for (SensorKind k : kAllSensorKinds) {
    if (!available.contains(k)) continue;
    out.kinds.push_back(k);
    switch (k) {
      case SensorKind::ImuYawRate:
        out.values[row] = predict_imu_yaw_rate(s, cfg);
        out.jacobian.middleRows<1>(row) = imu_jacobian(s, cfg);
        break;
      case SensorKind::Encoder:
        out.values.segment<2>(row) = predict_encoder(s);
        out.jacobian.middleRows<2>(row) = encoder_jacobian(s);
        break;
      case SensorKind::GnssPosition:
        out.values.segment<2>(row) = predict_gnss(s, offset);
        out.jacobian.middleRows<2>(row) = gnss_jacobian(s, offset);
        break;
      case SensorKind::AbsolutePose:
        out.values.segment<3>(row) = predict_pose(s);
        out.jacobian.middleRows<3>(row) = pose_jacobian(s);
        break;
    }
    row += block_size(k);
  }
  return out;
}

}  // namespace ddfusion
