#pragma once

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ddfusion/errors.hpp"
#include "ddfusion/frame_alignment.hpp"
#include "ddfusion/measurement_models.hpp"
#include "ddfusion/state_model.hpp"

namespace ddfusion {

/// Full belief of the filter.
struct FilterState {
  StateVector x;
  Matrix8 P = Matrix8::Identity();
  double t = 0.0;
};

/// Default prior covariance: loose pose, moderate speeds, tight parameters.
inline Matrix8 default_initial_covariance() {
  Vector8 d;
  d << 1e2, 1e2, 1.0, 1.0, 1.0, 1e-4, 1e-4, 1e-4;
  return d.asDiagonal();
}

/// A timestamped sensor sample. `frame` names the reference frame of
/// absolute-position samples; empty means the filter frame.
struct Measurement {
  SensorKind kind = SensorKind::Encoder;
  double t = 0.0;
  Eigen::VectorXd values;
  std::optional<std::string> frame;

  void validate() const {
    if (!std::isfinite(t)) throw ConfigError("measurement timestamp is not finite");
    if (values.size() != block_size(kind))
      throw ConfigError("measurement of kind '" + std::string(to_string(kind)) + "' needs " +
                        std::to_string(block_size(kind)) + " values, got " +
                        std::to_string(values.size()));
    if (!values.allFinite()) throw ConfigError("measurement values are not finite");
    if (frame && !is_absolute_position(kind))
      throw ConfigError("frame label is only valid on absolute-position measurements");
  }
};

struct NoiseConfig {
  Matrix8 q = Matrix8::Zero();  ///< process noise per step
  Eigen::Matrix<double, 1, 1> r_imu = Eigen::Matrix<double, 1, 1>::Zero();
  Eigen::Matrix2d r_enc = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d r_gnss = Eigen::Matrix2d::Zero();
  Eigen::Matrix3d r_pose = Eigen::Matrix3d::Zero();

  static NoiseConfig defaults() {
    NoiseConfig n;
    Vector8 qd;
    qd << 1e-6, 1e-6, 1e-7, 1e-2, 1e-2, 1e-10, 1e-10, 1e-10;
    n.q = qd.asDiagonal();
    n.r_imu(0, 0) = 1e-5;
    n.r_enc = Eigen::Vector2d(1e-4, 1e-4).asDiagonal();
    n.r_gnss = Eigen::Vector2d(1e-2, 1e-2).asDiagonal();
    n.r_pose = Eigen::Vector3d(1e-2, 1e-2, 1e-4).asDiagonal();
    return n;
  }

  /// Copy with no process noise on the model parameters (radii, bias).
  NoiseConfig with_parameters_locked() const {
    NoiseConfig n = *this;
    for (int i : {kRadiusR, kRadiusL, kBias}) {
      n.q.row(i).setZero();
      n.q.col(i).setZero();
    }
    return n;
  }

  /// Block-diagonal measurement covariance for the given row blocks.
  Eigen::MatrixXd stacked_r(const std::vector<SensorKind>& kinds) const {
    int n = 0;
    for (SensorKind k : kinds) n += block_size(k);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    int row = 0;
    for (SensorKind k : kinds) {
      const int b = block_size(k);
      switch (k) {
        case SensorKind::ImuYawRate: r.block(row, row, b, b) = r_imu; break;
        case SensorKind::Encoder: r.block(row, row, b, b) = r_enc; break;
        case SensorKind::GnssPosition: r.block(row, row, b, b) = r_gnss; break;
        case SensorKind::AbsolutePose: r.block(row, row, b, b) = r_pose; break;
      }
      row += b;
    }
    return r;
  }

  void validate() const {
    auto check = [](const auto& m, const char* name) {
      if (!m.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
      const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw ConfigError(std::string(name) + " is not symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m), Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, m.trace()))
        throw ConfigError(std::string(name) + " is not positive semi-definite");
    };
    check(q, "process noise Q");
    check(r_imu, "R_imu");
    check(r_enc, "R_enc");
    check(r_gnss, "R_gnss");
    check(r_pose, "R_pose");
  }
};

/// Decides when a queued sample is fresh enough to be fused.
struct AvailabilityPolicy {
  double staleness_factor = 1.5;
  /// Nominal sample period per SensorKind, indexed by sensor_index [s].
  std::array<double, 4> nominal_period = {1.0 / 100.0, 1.0 / 100.0, 1.0 / 10.0, 1.0 / 20.0};

  double max_age(SensorKind k) const {
    return staleness_factor * nominal_period[static_cast<std::size_t>(sensor_index(k))];
  }

  void validate() const {
    if (!(staleness_factor >= 1.0)) throw ConfigError("staleness_factor must be >= 1");
    for (double p : nominal_period)
      if (!(std::isfinite(p) && p > 0.0)) throw ConfigError("nominal periods must be positive");
  }
};

/// Which states a correction may change.
struct CorrectionMask {
  std::array<bool, kStateSize> correctable{};

  /// With an absolute-position source every state is correctable (parameters
  /// only when they are being estimated); without one, only the wheel speeds.
  static CorrectionMask for_available(SensorSet available, bool estimate_parameters = true) {
    CorrectionMask m;
    if (available.has_absolute_position()) {
      m.correctable.fill(true);
      if (!estimate_parameters) m.correctable[kRadiusR] = m.correctable[kRadiusL] =
          m.correctable[kBias] = false;
    } else {
      m.correctable[kOmegaR] = m.correctable[kOmegaL] = true;
    }
    return m;
  }

  static CorrectionMask all() {
    CorrectionMask m;
    m.correctable.fill(true);
    return m;
  }

  bool operator[](int i) const { return correctable[static_cast<std::size_t>(i)]; }
};

/// Thread-safe holding area between asynchronous producers and the stepper.
/// Keeps only the newest pending sample per kind.
class MeasurementQueue {
 public:
  MeasurementQueue() { frames_.emplace("map", RigidTransform2D::identity()); }

  /// Registers a reference frame: samples labelled `label` are mapped into
  /// the filter frame with `to_filter`.
  void register_frame(const std::string& label, const RigidTransform2D& to_filter) {
    std::lock_guard lock(mutex_);
    frames_[label] = to_filter;
  }

  /// Returns false when the sample is older than the last fused sample of
  /// its kind (or than the pending one) and was dropped.
  bool ingest(Measurement m) {
    m.validate();
    std::lock_guard lock(mutex_);
    if (m.frame) {
      auto it = frames_.find(*m.frame);
      if (it == frames_.end()) throw ConfigError("unknown reference frame '" + *m.frame + "'");
      to_filter_frame(m, it->second);
    }
    auto& slot = slots_[static_cast<std::size_t>(sensor_index(m.kind))];
    if (slot.last_fused && m.t < *slot.last_fused) return false;
    if (slot.pending && m.t < slot.pending->t) return false;
    slot.pending = std::move(m);
    return true;
  }

  std::optional<Measurement> latest_of(SensorKind k) const {
    std::lock_guard lock(mutex_);
    return slots_[static_cast<std::size_t>(sensor_index(k))].pending;
  }

  /// Kinds with an un-fused, non-future sample no older than the staleness bound.
  SensorSet availability(double now, const AvailabilityPolicy& policy) const {
    std::lock_guard lock(mutex_);
    SensorSet out;
    for (SensorKind k : kAllSensorKinds) {
      const auto& p = slots_[static_cast<std::size_t>(sensor_index(k))].pending;
      if (p && p->t <= now + kClockSlack && now - p->t <= policy.max_age(k)) out.insert(k);
    }
    return out;
  }

  /// Removes and returns the pending samples of `kinds` in canonical order,
  /// recording their timestamps as fused.
  std::vector<Measurement> take(SensorSet kinds) {
    std::lock_guard lock(mutex_);
    std::vector<Measurement> out;
    for (SensorKind k : kAllSensorKinds) {
      if (!kinds.contains(k)) continue;
      auto& slot = slots_[static_cast<std::size_t>(sensor_index(k))];
      if (!slot.pending) continue;
      slot.last_fused = slot.pending->t;
      out.push_back(std::move(*slot.pending));
      slot.pending.reset();
    }
    return out;
  }

  std::optional<double> last_fused(SensorKind k) const {
    std::lock_guard lock(mutex_);
    return slots_[static_cast<std::size_t>(sensor_index(k))].last_fused;
  }

 private:
  // Tolerates timestamps that are on the step grid up to rounding.
  static constexpr double kClockSlack = 1e-9;

  struct Slot {
    std::optional<Measurement> pending;
    std::optional<double> last_fused;
  };

  static void to_filter_frame(Measurement& m, const RigidTransform2D& tf) {
    if (m.kind == SensorKind::GnssPosition) {
      m.values = apply_transform(tf, Eigen::Vector2d(m.values[0], m.values[1]));
    } else if (m.kind == SensorKind::AbsolutePose) {
      const Pose2 p = apply_transform(tf, Pose2{m.values[0], m.values[1], m.values[2]});
      m.values = Eigen::Vector3d(p.x, p.y, p.psi);
    }
    m.frame.reset();
  }

  mutable std::mutex mutex_;
  std::array<Slot, 4> slots_{};
  std::map<std::string, RigidTransform2D> frames_;
};

/// Everything the stepper needs besides the state and the queue.
struct FilterConfig {
  ModelConfig model;
  NoiseConfig noise = NoiseConfig::defaults();
  AvailabilityPolicy policy;
  GnssAntennaOffset antenna;
  bool estimate_parameters = true;

  void validate() const {
    model.validate();
    noise.validate();
    policy.validate();
    antenna.validate();
    if (estimate_parameters)
      for (int i : {kRadiusR, kRadiusL, kBias})
        if (!(noise.q(i, i) > 0.0))
          throw ConfigError("process noise on radii and bias must be > 0 when they are estimated");
  }
};

/// Time update on the full state: x <- f(x), P <- A P A^T + Q.
inline FilterState predict_step(const FilterState& fs, const ModelConfig& cfg,
                                const NoiseConfig& noise) {
  const Matrix8 a = state_jacobian(fs.x, cfg);
  FilterState out;
  out.x = predict_state(fs.x, cfg);
  out.P = a * fs.P * a.transpose() + noise.q;
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  out.t = fs.t + cfg.sample_time;
  return out;
}

/// Innovation z - h(x) with heading rows wrapped to (-pi, pi].
inline Eigen::VectorXd innovation(const MeasurementPrediction& pred, const Eigen::VectorXd& z) {
  Eigen::VectorXd nu = z - pred.values;
  for (int r : pred.angle_rows()) nu[r] = wrap_angle(nu[r]);
  return nu;
}

/// Measurement update restricted to the states allowed by `mask`. The gain is
/// computed on the full state and its masked rows zeroed; the covariance uses
/// the Joseph form, which stays consistent for such a suboptimal gain.
inline FilterState correct_step(const FilterState& fs, const MeasurementPrediction& pred,
                                const Eigen::VectorXd& z, const NoiseConfig& noise,
                                const CorrectionMask& mask) {
  if (z.size() != pred.rows() || pred.jacobian.rows() != pred.rows())
    throw std::invalid_argument("correct_step: measurement and prediction sizes differ");

  const RowJacobian& c = pred.jacobian;
  const Eigen::MatrixXd r = noise.stacked_r(pred.kinds);
  Eigen::MatrixXd s = c * fs.P * c.transpose() + r;
  s = 0.5 * (s + s.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw NumericalError("innovation covariance is numerically singular");

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  // K = P C^T S^-1, formed as (S^-1 C P)^T since S and P are symmetric.
  Eigen::Matrix<double, kStateSize, Eigen::Dynamic> k =
      ldlt.solve(c * fs.P).transpose();
  for (int i = 0; i < kStateSize; ++i)
    if (!mask[i]) k.row(i).setZero();

  const Eigen::VectorXd nu = innovation(pred, z);
  const Vector8 dx = k * nu;

  FilterState out = fs;
  Vector8 x = fs.x.to_vector();
  for (int i = 0; i < kStateSize; ++i)
    if (mask[i]) x[i] += dx[i];
  out.x = StateVector::from_vector(x);

  const Matrix8 ikc = Matrix8::Identity() - k * c;
  out.P = ikc * fs.P * ikc.transpose() + k * r * k.transpose();
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  return out;
}

struct StepResult {
  FilterState state;
  SensorSet fused;   ///< kinds used by the correction (empty: prediction only)
  int rows = 0;      ///< stacked measurement rows
};

/// One filter iteration: predict, collect whatever is available, correct.
inline StepResult filter_step(const FilterState& fs, MeasurementQueue& queue,
                              const FilterConfig& cfg) {
  StepResult res;
  res.state = predict_step(fs, cfg.model, cfg.noise);

  const SensorSet available = queue.availability(res.state.t, cfg.policy);
  if (available.empty()) return res;

  const std::vector<Measurement> samples = queue.take(available);
  const MeasurementPrediction pred =
      stack_predictions(res.state.x, available, cfg.model, cfg.antenna);
  Eigen::VectorXd z(pred.rows());
  int row = 0;
  for (const Measurement& m : samples) {
    z.segment(row, m.values.size()) = m.values;
    row += static_cast<int>(m.values.size());
  }

  res.state = correct_step(res.state, pred, z, cfg.noise,
                           CorrectionMask::for_available(available, cfg.estimate_parameters));
  res.fused = available;
  res.rows = pred.rows();
  return res;
}

/// Numerical rank of [C; CA; ...; CA^7] linearized at `x`.
inline int observability_rank(const StateVector& x, SensorSet available, const ModelConfig& cfg,
                              const GnssAntennaOffset& antenna = {}) {
  if (available.empty()) return 0;
  const MeasurementPrediction pred = stack_predictions(x, available, cfg, antenna);
  const Matrix8 a = state_jacobian(x, cfg);
  const int m = pred.rows();

  Eigen::MatrixXd obs(m * kStateSize, kStateSize);
  Eigen::MatrixXd block = pred.jacobian;
  for (int i = 0; i < kStateSize; ++i) {
    obs.middleRows(i * m, m) = block;
    block = (block * a).eval();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(obs);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * sv[0]) ++rank;
  return rank;
}

/// Owns the running estimate. One stepper at a time; readers get consistent
/// snapshots of state and covariance.
class LocalizationFilter {
 public:
  LocalizationFilter(FilterConfig cfg, FilterState initial)
      : cfg_(std::move(cfg)), state_(std::move(initial)) {
    cfg_.validate();
    if (!cfg_.estimate_parameters) {
      cfg_.noise = cfg_.noise.with_parameters_locked();
      for (int i : {kRadiusR, kRadiusL, kBias}) {
        state_.P.row(i).setZero();
        state_.P.col(i).setZero();
      }
    }
  }

  StepResult step(MeasurementQueue& queue) {
    std::lock_guard step_lock(step_mutex_);
    const FilterState current = snapshot();
    StepResult res = filter_step(current, queue, cfg_);
    std::lock_guard lock(state_mutex_);
    state_ = res.state;
    return res;
  }

  FilterState snapshot() const {
    std::lock_guard lock(state_mutex_);
    return state_;
  }

  const FilterConfig& config() const { return cfg_; }

 private:
  FilterConfig cfg_;
  mutable std::mutex step_mutex_;
  mutable std::mutex state_mutex_;
  FilterState state_;
};

}  // namespace ddfusion
