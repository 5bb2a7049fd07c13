#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ddfusion/errors.hpp"
#include "ddfusion/fusion_filter.hpp"
#include "ddfusion/measurement_models.hpp"
#include "ddfusion/state_model.hpp"

namespace ddfusion {

/// Constant body-rate command held for `duration` seconds.
struct ProfileSegment {
  double duration = 0.0;  ///< [s]
  double v = 0.0;         ///< [m/s]
  double yaw_rate = 0.0;  ///< [rad/s]
};

struct VehicleParams {
  double radius_r = 0.1;
  double radius_l = 0.1;
  double bias = 0.0;
  double track_width = 0.5;
};

struct NominalParams {
  double radius_r = 0.1;
  double radius_l = 0.1;
  double bias = 0.0;
};

struct SensorSpec {
  double rate = 0.0;   ///< [Hz]
  double sigma = 0.0;  ///< std-dev of each value (pose: position) in SI units
  double sigma_psi = 0.0;  ///< pose heading std-dev [rad], pose only
  double phase = 0.0;  ///< time of the first sample [s]
};

struct DropoutWindow {
  SensorKind kind = SensorKind::GnssPosition;
  double t_start = 0.0;
  double t_end = 0.0;

  bool contains(SensorKind k, double t) const { return k == kind && t >= t_start && t <= t_end; }
};

/// Filter tuning carried by a scenario.
struct FilterTuning {
  NoiseConfig noise = NoiseConfig::defaults();
  Matrix8 initial_covariance = default_initial_covariance();
  double staleness_factor = 1.5;
};

/// Declarative description of a simulated run.
struct Scenario {
  std::string name = "scenario";
  double duration = 10.0;
  double sample_time = 1.0 / 60.0;
  std::uint64_t seed = 1;
  Pose2 initial_pose;
  /// Segments are executed in order; the vehicle stands still afterwards.
  std::vector<ProfileSegment> profile;
  VehicleParams true_params;
  NominalParams nominal_params;
  GnssAntennaOffset antenna;
  /// Indexed by sensor_index.
  std::array<SensorSpec, 4> sensors = {
      SensorSpec{100.0, 0.0, 0.0, 0.0}, SensorSpec{100.0, 0.0, 0.0, 0.0},
      SensorSpec{10.0, 0.0, 0.0, 0.0}, SensorSpec{20.0, 0.0, 0.0, 0.0}};
  std::vector<DropoutWindow> dropouts;
  FilterTuning filter;
  /// Ramp between consecutive profile commands [s]; 0 gives step changes.
  double transition_time = 0.0;

  SensorSpec& sensor(SensorKind k) { return sensors[static_cast<std::size_t>(sensor_index(k))]; }
  const SensorSpec& sensor(SensorKind k) const {
    return sensors[static_cast<std::size_t>(sensor_index(k))];
  }

  std::size_t step_count() const {
    return static_cast<std::size_t>(std::llround(duration / sample_time));
  }

  ModelConfig model() const { return {true_params.track_width, sample_time}; }

  void validate() const {
    if (!(std::isfinite(duration) && duration > 0.0)) throw ConfigError("duration must be > 0");
    if (!(std::isfinite(sample_time) && sample_time > 0.0))
      throw ConfigError("sample_time must be > 0");
    model().validate();
    if (!(true_params.radius_r > 0.0 && true_params.radius_l > 0.0))
      throw ConfigError("true_params radii must be > 0");
    if (!(nominal_params.radius_r > 0.0 && nominal_params.radius_l > 0.0))
      throw ConfigError("nominal_params radii must be > 0");
    antenna.validate();
    for (SensorKind k : kAllSensorKinds) {
      const SensorSpec& s = sensor(k);
      if (!(std::isfinite(s.rate) && s.rate > 0.0))
        throw ConfigError("sensors." + std::string(to_string(k)) + ".rate must be > 0");
      if (!(s.sigma >= 0.0 && s.sigma_psi >= 0.0))
        throw ConfigError("sensors." + std::string(to_string(k)) + " sigmas must be >= 0");
      if (!(s.phase >= 0.0)) throw ConfigError("sensor phase must be >= 0");
    }
    for (const auto& seg : profile)
      if (!(seg.duration >= 0.0 && std::isfinite(seg.v) && std::isfinite(seg.yaw_rate)))
        throw ConfigError("profile segments need finite values and duration >= 0");
    for (const auto& w : dropouts)
      if (!(w.t_start >= 0.0 && w.t_end >= w.t_start && w.t_end <= duration))
        throw ConfigError("dropout windows must lie within [0, duration]");
    filter.noise.validate();
    if (!(filter.staleness_factor >= 1.0)) throw ConfigError("staleness_factor must be >= 1");
    if (!(std::isfinite(transition_time) && transition_time >= 0.0))
      throw ConfigError("transition_time must be >= 0");
  }

  ProfileSegment blend(const ProfileSegment& from, const ProfileSegment& to, double dt) const {
    if (transition_time <= 0.0 || dt >= transition_time) return to;
    const double u = dt / transition_time;
    return {to.duration, from.v + u * (to.v - from.v),
            from.yaw_rate + u * (to.yaw_rate - from.yaw_rate)};
  }

  /// Filter configuration implied by this scenario.
  FilterConfig filter_config(bool estimate_parameters) const {
    FilterConfig cfg;
    cfg.model = model();
    cfg.noise = filter.noise;
    cfg.policy.staleness_factor = filter.staleness_factor;
    for (SensorKind k : kAllSensorKinds)
      cfg.policy.nominal_period[static_cast<std::size_t>(sensor_index(k))] = 1.0 / sensor(k).rate;
    cfg.antenna = antenna;
    cfg.estimate_parameters = estimate_parameters;
    return cfg;
  }

  /// Filter prior: known start pose, wheels at rest, nominal parameters.
  FilterState initial_filter_state() const {
    FilterState fs;
    fs.x.x = initial_pose.x;
    fs.x.y = initial_pose.y;
    fs.x.psi = initial_pose.psi;
    fs.x.radius_r = nominal_params.radius_r;
    fs.x.radius_l = nominal_params.radius_l;
    fs.x.bias = nominal_params.bias;
    fs.P = filter.initial_covariance;
    fs.t = 0.0;
    return fs;
  }

  /// Body-rate command in effect at time t. Each segment starts with a linear
  /// blend of length transition_time from the previous command (rest before
  /// the first segment and after the last).
  ProfileSegment command_at(double t) const {
    double start = 0.0;
    ProfileSegment prev{};
    for (const auto& seg : profile) {
      if (t < start + seg.duration) return blend(prev, seg, t - start);
      start += seg.duration;
      prev = seg;
    }
    return blend(prev, ProfileSegment{}, t - start);
  }
};

/// Inverse differential-drive kinematics.
inline std::pair<double, double> wheel_speeds_from_body(double v, double yaw_rate,
                                                        double radius_r, double radius_l,
                                                        double track_width) {
  return {(v + 0.5 * yaw_rate * track_width) / radius_r,
          (v - 0.5 * yaw_rate * track_width) / radius_l};
}

struct TruthSample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;      ///< unwrapped
  double omega_r = 0.0;  ///< wheel speeds applied from t until the next sample
  double omega_l = 0.0;
};

struct GroundTruth {
  std::vector<TruthSample> samples;  ///< filter-rate grid, samples[k].t = k * Ts
  VehicleParams params;
  double sample_time = 1.0 / 60.0;

  /// Truth at an arbitrary time, consistent with the Euler integration.
  TruthSample at(double t) const {
    if (samples.empty()) return {};
    const double u = t / sample_time;
    std::size_t k = u <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(u + 1e-9));
    k = std::min(k, samples.size() - 1);
    TruthSample s = samples[k];
    const double dt = t - s.t;
    if (dt <= 0.0) return s;
    const double v = 0.5 * (s.omega_r * params.radius_r + s.omega_l * params.radius_l);
    const double w = (s.omega_r * params.radius_r - s.omega_l * params.radius_l) / params.track_width;
    s.x += v * std::cos(s.psi) * dt;
    s.y += v * std::sin(s.psi) * dt;
    s.psi += w * dt;
    s.t = t;
    return s;
  }

  /// Kinematic yaw rate at time t.
  double yaw_rate_at(double t) const {
    const TruthSample s = at(t);
    return (s.omega_r * params.radius_r - s.omega_l * params.radius_l) / params.track_width;
  }
};

/// Integrates the command profile with the true parameters at the filter rate.
inline GroundTruth generate_truth(const Scenario& s) {
  s.validate();
  GroundTruth g;
  g.params = s.true_params;
  g.sample_time = s.sample_time;
  const std::size_t n = s.step_count();
  g.samples.reserve(n + 1);

  const ModelConfig model = s.model();
  StateVector x;
  x.x = s.initial_pose.x;
  x.y = s.initial_pose.y;
  x.psi = s.initial_pose.psi;
  x.radius_r = s.true_params.radius_r;
  x.radius_l = s.true_params.radius_l;

  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * s.sample_time;
    const ProfileSegment cmd = s.command_at(t);
    std::tie(x.omega_r, x.omega_l) = wheel_speeds_from_body(
        cmd.v, cmd.yaw_rate, x.radius_r, x.radius_l, s.true_params.track_width);
    g.samples.push_back({t, x.x, x.y, x.psi, x.omega_r, x.omega_l});
    x = predict_state(x, model);
  }
  return g;
}

/// Emulated sensor samples of every kind, merged and sorted by time (ties in
/// canonical kind order).
struct SensorStreams {
  std::array<std::vector<Measurement>, 4> by_kind;

  const std::vector<Measurement>& of(SensorKind k) const {
    return by_kind[static_cast<std::size_t>(sensor_index(k))];
  }

  std::vector<Measurement> merged() const {
    std::vector<Measurement> all;
    for (const auto& v : by_kind) all.insert(all.end(), v.begin(), v.end());
    std::stable_sort(all.begin(), all.end(), [](const Measurement& a, const Measurement& b) {
      if (a.t != b.t) return a.t < b.t;
      return sensor_index(a.kind) < sensor_index(b.kind);
    });
    return all;
  }
};

/// Samples each sensor from the truth at its own rate, adds independent
/// Gaussian noise and omits samples inside dropout windows.
inline SensorStreams emulate_streams(const GroundTruth& truth, const Scenario& s) {
  SensorStreams out;
  // One engine per kind so dropouts or rate changes in one stream leave the others unchanged.
  std::array<std::mt19937_64, 4> engines;
  for (SensorKind k : kAllSensorKinds) {
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(sensor_index(k)) + 1u};
    engines[static_cast<std::size_t>(sensor_index(k))].seed(seq);
  }

  for (SensorKind k : kAllSensorKinds) {
    const SensorSpec& spec = s.sensor(k);
    auto& rng = engines[static_cast<std::size_t>(sensor_index(k))];
    std::normal_distribution<double> unit(0.0, 1.0);
    auto noise = [&](double sigma) { return sigma > 0.0 ? sigma * unit(rng) : 0.0; };

    auto& stream = out.by_kind[static_cast<std::size_t>(sensor_index(k))];
    for (std::size_t i = 0;; ++i) {
      const double t = spec.phase + static_cast<double>(i) / spec.rate;
      if (t > s.duration + 1e-9) break;
      const TruthSample ts = truth.at(t);

      Measurement m;
      m.kind = k;
      m.t = t;
      m.values.resize(block_size(k));
      switch (k) {
        case SensorKind::ImuYawRate:
          m.values[0] = truth.yaw_rate_at(t) + s.true_params.bias + noise(spec.sigma);
          break;
        case SensorKind::Encoder:
          m.values[0] = ts.omega_r + noise(spec.sigma);
          m.values[1] = ts.omega_l + noise(spec.sigma);
          break;
        case SensorKind::GnssPosition: {
          StateVector sv;
          sv.x = ts.x;
          sv.y = ts.y;
          sv.psi = ts.psi;
          const Eigen::Vector2d p = predict_gnss(sv, s.antenna);
          m.values[0] = p.x() + noise(spec.sigma);
          m.values[1] = p.y() + noise(spec.sigma);
          break;
        }
        case SensorKind::AbsolutePose:
          m.values[0] = ts.x + noise(spec.sigma);
          m.values[1] = ts.y + noise(spec.sigma);
          m.values[2] = wrap_angle(ts.psi + noise(spec.sigma_psi));
          break;
      }
      // Noise is drawn before the dropout test so windows do not shift later samples.
      const bool dropped = std::any_of(s.dropouts.begin(), s.dropouts.end(),
                                       [&](const DropoutWindow& w) { return w.contains(k, t); });
      if (!dropped) stream.push_back(std::move(m));
    }
  }
  return out;
}

/// Per-step output of a filter run.
struct EstimateRow {
  double t = 0.0;
  StateVector x;
  Vector8 p_diag = Vector8::Zero();
  SensorSet fused;
  int rows = 0;
};

/// Drives the filter on the fixed step grid over time-sorted records. Records
/// with t up to the end of a step are ingested before that step runs.
inline std::vector<EstimateRow> run_filter(const std::vector<Measurement>& records,
                                           const FilterConfig& cfg, const FilterState& initial,
                                           std::size_t steps,
                                           const std::vector<std::pair<std::string, RigidTransform2D>>&
                                               frames = {}) {
  LocalizationFilter filter(cfg, initial);
  MeasurementQueue queue;
  for (const auto& [label, tf] : frames) queue.register_frame(label, tf);

  std::vector<EstimateRow> out;
  out.reserve(steps + 1);
  {
    const FilterState fs = filter.snapshot();
    out.push_back({fs.t, fs.x, fs.P.diagonal(), {}, 0});
  }

  std::size_t next = 0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_step = static_cast<double>(k) * cfg.model.sample_time;
    while (next < records.size() && records[next].t <= t_step + 1e-9) queue.ingest(records[next++]);
    const StepResult res = filter.step(queue);
    out.push_back({res.state.t, res.state.x, res.state.P.diagonal(), res.fused, res.rows});
  }
  return out;
}

/// Error and coherence series of a run against ground truth.
struct RunMetrics {
  std::vector<double> t;
  std::vector<double> pos_err;      ///< [m]
  std::vector<double> yaw_err;      ///< |wrapped heading error| [rad]
  std::vector<double> s_pose;       ///< cumulative distance from estimated positions [m]
  std::vector<double> s_vel;        ///< cumulative distance from estimated speed [m]
  std::vector<double> cum_yaw_vel;  ///< integrated estimated yaw rate [rad]
  std::vector<double> cum_yaw_pose; ///< estimated heading change since start [rad]

  double final_pos_err() const { return pos_err.empty() ? 0.0 : pos_err.back(); }
  double final_yaw_err() const { return yaw_err.empty() ? 0.0 : yaw_err.back(); }

  double median_pos_err() const {
    if (pos_err.empty()) return 0.0;
    std::vector<double> v = pos_err;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  }
};

struct CoherenceSeries {
  std::vector<double> distance;  ///< s_pose - s_vel
  std::vector<double> yaw;       ///< heading change - integrated yaw rate
};

/// Compares the estimate with the truth and accumulates the coherence terms.
/// Velocities are integrated over each step with the state that starts it,
/// so a correction-free run has identical pose- and velocity-derived terms.
inline RunMetrics compute_metrics(const std::vector<EstimateRow>& est, const GroundTruth& truth,
                                  double track_width) {
  RunMetrics m;
  const std::size_t n = std::min(est.size(), truth.samples.size());
  double s_pose = 0.0, s_vel = 0.0, yaw_vel = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const StateVector& x = est[k].x;
    const TruthSample& g = truth.samples[k];
    if (k > 0) {
      const StateVector& prev = est[k - 1].x;
      const double dt = est[k].t - est[k - 1].t;
      // Displacement along the previous heading: lateral correction jitter
      // does not count as travelled distance.
      s_pose += std::abs((x.x - prev.x) * std::cos(prev.psi) + (x.y - prev.y) * std::sin(prev.psi));
      s_vel += std::abs(prev.linear_speed()) * dt;
      yaw_vel += prev.yaw_rate(track_width) * dt;
    }
    m.t.push_back(est[k].t);
    m.pos_err.push_back(std::hypot(x.x - g.x, x.y - g.y));
    m.yaw_err.push_back(std::abs(wrap_angle(x.psi - g.psi)));
    m.s_pose.push_back(s_pose);
    m.s_vel.push_back(s_vel);
    m.cum_yaw_vel.push_back(yaw_vel);
    m.cum_yaw_pose.push_back(x.psi - est.front().x.psi);
  }
  return m;
}

inline CoherenceSeries coherence_metrics(const RunMetrics& m) {
  CoherenceSeries c;
  for (std::size_t k = 0; k < m.t.size(); ++k) {
    c.distance.push_back(m.s_pose[k] - m.s_vel[k]);
    c.yaw.push_back(m.cum_yaw_pose[k] - m.cum_yaw_vel[k]);
  }
  return c;
}

struct RunOutput {
  GroundTruth truth;
  std::vector<Measurement> records;
  std::vector<EstimateRow> estimate;
  RunMetrics metrics;
};

/// Full pipeline: truth, emulated sensors, filter, metrics. Without parameter
/// estimation, radii and bias stay at their nominal values.
inline RunOutput run_scenario(const Scenario& s, bool estimate_uncertainties) {
  RunOutput out;
  out.truth = generate_truth(s);
  out.records = emulate_streams(out.truth, s).merged();
  out.estimate = run_filter(out.records, s.filter_config(estimate_uncertainties),
                            s.initial_filter_state(), s.step_count());
  out.metrics = compute_metrics(out.estimate, out.truth, s.true_params.track_width);
  return out;
}

/// Same scenario with every absolute-position source removed for the whole run
/// and the model parameters frozen: pure proprioceptive dead reckoning.
inline Scenario dead_reckoning_variant(Scenario s) {
  s.dropouts.erase(std::remove_if(s.dropouts.begin(), s.dropouts.end(),
                                  [](const DropoutWindow& w) { return is_absolute_position(w.kind); }),
                   s.dropouts.end());
  s.dropouts.push_back({SensorKind::GnssPosition, 0.0, s.duration});
  s.dropouts.push_back({SensorKind::AbsolutePose, 0.0, s.duration});
  return s;
}

enum class SweepParam { RadiusR, RadiusL, Bias };

inline SweepParam sweep_param_from_string(std::string_view s) {
  if (s == "radius_r") return SweepParam::RadiusR;
  if (s == "radius_l") return SweepParam::RadiusL;
  if (s == "bias") return SweepParam::Bias;
  throw ConfigError("unknown sweep parameter '" + std::string(s) +
                    "' (expected radius_l, radius_r or bias)");
}

/// Dead-reckoning variant of `s` in which the filter model is wrong by
/// `error` in one parameter and right in the others. Radius errors are
/// relative (0.01 means the model radius is 1 % too large); bias errors are
/// absolute [rad/s]. The truth keeps the scenario's true parameters.
inline Scenario sensitivity_scenario(const Scenario& base, SweepParam p, double error) {
  Scenario s = dead_reckoning_variant(base);
  s.nominal_params = {s.true_params.radius_r, s.true_params.radius_l, s.true_params.bias};
  switch (p) {
    case SweepParam::RadiusR: s.nominal_params.radius_r *= 1.0 + error; break;
    case SweepParam::RadiusL: s.nominal_params.radius_l *= 1.0 + error; break;
    case SweepParam::Bias: s.nominal_params.bias += error; break;
  }
  s.validate();
  return s;
}

namespace presets {

/// Mixed arcs and straights at about 0.5 m/s; 350 s total with both absolute
/// sources lost from t = 220 s. True radii are +1.5 % / -1 % off nominal and
/// the gyro carries a 0.01 rad/s bias.
inline Scenario dropout_350s(std::uint64_t seed = 1) {
  Scenario s;
  s.name = "dropout_350s";
  s.duration = 350.0;
  s.sample_time = 1.0 / 60.0;
  s.seed = seed;
  s.transition_time = 1.0;
  s.true_params = {0.1015, 0.099, 0.01, 0.5};
  s.nominal_params = {0.1, 0.1, 0.0};
  s.antenna = {0.3, std::numbers::pi / 2.0};
  s.sensor(SensorKind::Encoder) = {100.0, 0.02, 0.0, 0.0};
  s.sensor(SensorKind::ImuYawRate) = {100.0, 0.005, 0.0, 0.0};
  s.sensor(SensorKind::GnssPosition) = {10.0, 0.03, 0.0, 0.0};
  s.sensor(SensorKind::AbsolutePose) = {20.0, 0.05, 0.01, 0.0};
  s.dropouts = {{SensorKind::GnssPosition, 220.0, 350.0}, {SensorKind::AbsolutePose, 220.0, 350.0}};

  // Measurement covariances match the emulated sensor noise.
  NoiseConfig& n = s.filter.noise;
  n.r_imu(0, 0) = 0.005 * 0.005;
  n.r_enc = Eigen::Vector2d(0.02 * 0.02, 0.02 * 0.02).asDiagonal();
  n.r_gnss = Eigen::Vector2d(0.03 * 0.03, 0.03 * 0.03).asDiagonal();
  n.r_pose = Eigen::Vector3d(0.05 * 0.05, 0.05 * 0.05, 0.01 * 0.01).asDiagonal();

  // 70 s block: straight, left arc, straight, right arc, S-bend.
  const std::vector<ProfileSegment> block = {
      {12.0, 0.55, 0.0},   {10.0, 0.5, 0.15},  {15.0, 0.55, 0.0},
      {10.0, 0.5, -0.2},   {8.0, 0.5, 0.25},   {8.0, 0.5, -0.25},
      {7.0, 0.55, 0.0},
  };
  for (int i = 0; i < 5; ++i) s.profile.insert(s.profile.end(), block.begin(), block.end());
  return s;
}

/// Same route without any dropout and with a larger radius mismatch; used to
/// compare pose-derived and velocity-derived distance and heading.
inline Scenario coherence_350s(std::uint64_t seed = 1) {
  Scenario s = dropout_350s(seed);
  s.name = "coherence_350s";
  s.dropouts.clear();
  s.true_params.radius_r = 0.102;
  s.true_params.radius_l = 0.101;
  return s;
}

/// Straight line at 1 m/s for 100 s with ideal sensors.
inline Scenario straight_line(double duration = 100.0) {
  Scenario s;
  s.name = "straight_line";
  s.duration = duration;
  s.true_params = {0.1, 0.1, 0.0, 0.5};
  s.nominal_params = {0.1, 0.1, 0.0};
  s.profile = {{duration, 1.0, 0.0}};
  return s;
}

}  // namespace presets

}  // namespace ddfusion
