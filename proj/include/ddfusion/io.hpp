#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ddfusion/errors.hpp"
#include "ddfusion/frame_alignment.hpp"
#include "ddfusion/fusion_filter.hpp"
#include "ddfusion/sim_harness.hpp"

namespace ddfusion::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Strict JSON object access: every key must be consumed, errors name the key.

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a table/object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& get(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing key '" + name(key) + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) throw ConfigError("key '" + name(key) + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError("key '" + name(key) + "' must be finite");
    return d;
  }

  double number_or(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  std::uint64_t unsigned_integer(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError("key '" + name(key) + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string()) throw ConfigError("key '" + name(key) + "' must be a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key) {
    const json& v = get(key);
    if (!v.is_boolean()) throw ConfigError("key '" + name(key) + "' must be true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key, std::size_t expected) {
    const json& v = get(key);
    if (!v.is_array() || v.size() != expected)
      throw ConfigError("key '" + name(key) + "' must be an array of " + std::to_string(expected) +
                        " numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError("key '" + name(key) + "' must contain numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  ObjectReader object(const std::string& key) { return ObjectReader(get(key), name(key)); }

  const json& array(const std::string& key) {
    const json& v = get(key);
    if (!v.is_array()) throw ConfigError("key '" + name(key) + "' must be an array");
    return v;
  }

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + name(it.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "document" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Shared fragments

namespace detail {

inline json diag_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) a.push_back(m(i, i));
  return a;
}

template <int N>
Eigen::Matrix<double, N, N> diag_from(const std::vector<double>& v) {
  Eigen::Matrix<double, N, N> m = Eigen::Matrix<double, N, N>::Zero();
  for (int i = 0; i < N; ++i) m(i, i) = v[static_cast<std::size_t>(i)];
  return m;
}

inline json tuning_json(const FilterTuning& f) {
  return {
      {"q_diag", diag_json(f.noise.q)},
      {"r_imu", f.noise.r_imu(0, 0)},
      {"r_enc_diag", diag_json(f.noise.r_enc)},
      {"r_gnss_diag", diag_json(f.noise.r_gnss)},
      {"r_pose_diag", diag_json(f.noise.r_pose)},
      {"initial_cov_diag", diag_json(f.initial_covariance)},
      {"staleness_factor", f.staleness_factor},
  };
}

inline FilterTuning tuning_from(ObjectReader r) {
  FilterTuning f;
  if (r.has("q_diag")) f.noise.q = diag_from<8>(r.numbers("q_diag", 8));
  if (r.has("r_imu")) f.noise.r_imu(0, 0) = r.number("r_imu");
  if (r.has("r_enc_diag")) f.noise.r_enc = diag_from<2>(r.numbers("r_enc_diag", 2));
  if (r.has("r_gnss_diag")) f.noise.r_gnss = diag_from<2>(r.numbers("r_gnss_diag", 2));
  if (r.has("r_pose_diag")) f.noise.r_pose = diag_from<3>(r.numbers("r_pose_diag", 3));
  if (r.has("initial_cov_diag"))
    f.initial_covariance = diag_from<8>(r.numbers("initial_cov_diag", 8));
  f.staleness_factor = r.number_or("staleness_factor", f.staleness_factor);
  r.finish();
  try {
    f.noise.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + r.name("q_diag") + "' or an r_* entry: " + e.what());
  }
  for (int i = 0; i < kStateSize; ++i)
    if (!(f.initial_covariance(i, i) >= 0.0))
      throw ConfigError("key '" + r.name("initial_cov_diag") + "' entries must be >= 0");
  return f;
}

inline json pose_json(const Pose2& p) { return {{"x", p.x}, {"y", p.y}, {"psi", p.psi}}; }

inline Pose2 pose_from(ObjectReader r) {
  Pose2 p{r.number_or("x", 0.0), r.number_or("y", 0.0), r.number_or("psi", 0.0)};
  r.finish();
  return p;
}

inline json transform_json(const RigidTransform2D& tf) {
  return {{"theta", tf.theta}, {"tx", tf.tx}, {"ty", tf.ty}};
}

inline RigidTransform2D transform_from(ObjectReader r) {
  RigidTransform2D tf{r.number("theta"), r.number("tx"), r.number("ty")};
  r.finish();
  return tf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scenario file (JSON document mirroring Scenario)

inline json scenario_to_json(const Scenario& s) {
  json profile = json::array();
  for (const auto& seg : s.profile)
    profile.push_back({{"duration", seg.duration}, {"v", seg.v}, {"yaw_rate", seg.yaw_rate}});

  json sensors = json::object();
  for (SensorKind k : kAllSensorKinds) {
    const SensorSpec& spec = s.sensor(k);
    json e = {{"rate", spec.rate}, {"sigma", spec.sigma}, {"phase", spec.phase}};
    if (k == SensorKind::AbsolutePose) e["sigma_psi"] = spec.sigma_psi;
    sensors[std::string(to_string(k))] = e;
  }

  json dropouts = json::array();
  for (const auto& w : s.dropouts)
    dropouts.push_back(
        {{"kind", std::string(to_string(w.kind))}, {"t_start", w.t_start}, {"t_end", w.t_end}});

  return {
      {"name", s.name},
      {"duration", s.duration},
      {"sample_time", s.sample_time},
      {"seed", s.seed},
      {"transition_time", s.transition_time},
      {"initial_pose", detail::pose_json(s.initial_pose)},
      {"profile", profile},
      {"true_params",
       {{"radius_r", s.true_params.radius_r},
        {"radius_l", s.true_params.radius_l},
        {"bias", s.true_params.bias},
        {"track_width", s.true_params.track_width}}},
      {"nominal_params",
       {{"radius_r", s.nominal_params.radius_r},
        {"radius_l", s.nominal_params.radius_l},
        {"bias", s.nominal_params.bias}}},
      {"antenna", {{"d", s.antenna.d}, {"alpha", s.antenna.alpha}}},
      {"sensors", sensors},
      {"dropouts", dropouts},
      {"filter", detail::tuning_json(s.filter)},
  };
}

inline Scenario scenario_from_json(const json& j) {
  ObjectReader r(j, "");
  Scenario s;
  s.name = r.has("name") ? r.string("name") : s.name;
  s.duration = r.number("duration");
  s.sample_time = r.number_or("sample_time", s.sample_time);
  if (r.has("seed")) s.seed = r.unsigned_integer("seed");
  s.transition_time = r.number_or("transition_time", s.transition_time);
  if (r.has("initial_pose")) s.initial_pose = detail::pose_from(r.object("initial_pose"));

  s.profile.clear();
  if (r.has("profile")) {
    const json& arr = r.array("profile");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader seg(arr[i], "profile[" + std::to_string(i) + "]");
      s.profile.push_back({seg.number("duration"), seg.number_or("v", 0.0),
                           seg.number_or("yaw_rate", 0.0)});
      seg.finish();
    }
  }

  {
    ObjectReader tp = r.object("true_params");
    s.true_params.radius_r = tp.number("radius_r");
    s.true_params.radius_l = tp.number("radius_l");
    s.true_params.bias = tp.number_or("bias", 0.0);
    s.true_params.track_width = tp.number("track_width");
    tp.finish();
  }
  {
    ObjectReader np = r.object("nominal_params");
    s.nominal_params.radius_r = np.number("radius_r");
    s.nominal_params.radius_l = np.number("radius_l");
    s.nominal_params.bias = np.number_or("bias", 0.0);
    np.finish();
  }
  if (r.has("antenna")) {
    ObjectReader a = r.object("antenna");
    s.antenna = {a.number_or("d", 0.0), a.number_or("alpha", 0.0)};
    a.finish();
  }
  if (r.has("sensors")) {
    ObjectReader sensors = r.object("sensors");
    for (SensorKind k : kAllSensorKinds) {
      const std::string key(to_string(k));
      if (!sensors.has(key)) continue;
      ObjectReader e = sensors.object(key);
      SensorSpec& spec = s.sensor(k);
      spec.rate = e.number_or("rate", spec.rate);
      spec.sigma = e.number_or("sigma", spec.sigma);
      spec.phase = e.number_or("phase", spec.phase);
      if (k == SensorKind::AbsolutePose) spec.sigma_psi = e.number_or("sigma_psi", spec.sigma_psi);
      e.finish();
    }
    sensors.finish();
  }
  s.dropouts.clear();
  if (r.has("dropouts")) {
    const json& arr = r.array("dropouts");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader w(arr[i], "dropouts[" + std::to_string(i) + "]");
      DropoutWindow d;
      try {
        d.kind = sensor_kind_from_string(w.string("kind"));
      } catch (const ConfigError& e) {
        throw ConfigError("key '" + w.name("kind") + "': " + e.what());
      }
      d.t_start = w.number("t_start");
      d.t_end = w.number("t_end");
      w.finish();
      s.dropouts.push_back(d);
    }
  }
  if (r.has("filter")) s.filter = detail::tuning_from(r.object("filter"));
  r.finish();
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  return scenario_from_json(parse_json_text(read_file(path), path));
}

inline std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Filter parameters for replay

/// Everything needed to run the filter on a recorded log.
struct ReplayParams {
  FilterConfig config;
  FilterState initial;
  std::optional<double> duration;  ///< run length [s]; default: last record
  std::vector<std::pair<std::string, RigidTransform2D>> frames;
};

inline ReplayParams replay_params_from_scenario(const Scenario& s, bool estimate_uncertainties) {
  ReplayParams p;
  p.config = s.filter_config(estimate_uncertainties);
  p.initial = s.initial_filter_state();
  p.duration = s.duration;
  return p;
}

inline json replay_params_to_json(const ReplayParams& p) {
  const StateVector& x = p.initial.x;
  json periods = json::object();
  for (SensorKind k : kAllSensorKinds)
    periods[std::string(to_string(k))] =
        p.config.policy.nominal_period[static_cast<std::size_t>(sensor_index(k))];
  json frames = json::object();
  for (const auto& [label, tf] : p.frames) frames[label] = detail::transform_json(tf);

  FilterTuning t;
  t.noise = p.config.noise;
  t.initial_covariance = p.initial.P;
  t.staleness_factor = p.config.policy.staleness_factor;

  json j = {
      {"sample_time", p.config.model.sample_time},
      {"track_width", p.config.model.track_width},
      {"antenna", {{"d", p.config.antenna.d}, {"alpha", p.config.antenna.alpha}}},
      {"estimate_uncertainties", p.config.estimate_parameters},
      {"initial_state",
       {{"x", x.x},
        {"y", x.y},
        {"psi", x.psi},
        {"omega_r", x.omega_r},
        {"omega_l", x.omega_l},
        {"radius_r", x.radius_r},
        {"radius_l", x.radius_l},
        {"bias", x.bias}}},
      {"nominal_periods", periods},
      {"filter", detail::tuning_json(t)},
      {"frames", frames},
  };
  if (p.duration) j["duration"] = *p.duration;
  return j;
}

inline ReplayParams replay_params_from_json(const json& j) {
  ObjectReader r(j, "");
  ReplayParams p;
  p.config.model.sample_time = r.number_or("sample_time", p.config.model.sample_time);
  p.config.model.track_width = r.number("track_width");
  if (r.has("duration")) p.duration = r.number("duration");
  if (r.has("antenna")) {
    ObjectReader a = r.object("antenna");
    p.config.antenna = {a.number_or("d", 0.0), a.number_or("alpha", 0.0)};
    a.finish();
  }
  if (r.has("estimate_uncertainties"))
    p.config.estimate_parameters = r.boolean("estimate_uncertainties");
  {
    ObjectReader s = r.object("initial_state");
    StateVector& x = p.initial.x;
    x.x = s.number_or("x", 0.0);
    x.y = s.number_or("y", 0.0);
    x.psi = s.number_or("psi", 0.0);
    x.omega_r = s.number_or("omega_r", 0.0);
    x.omega_l = s.number_or("omega_l", 0.0);
    x.radius_r = s.number("radius_r");
    x.radius_l = s.number("radius_l");
    x.bias = s.number_or("bias", 0.0);
    s.finish();
    if (!x.is_valid()) throw ConfigError("initial_state radii must be > 0");
  }
  if (r.has("nominal_periods")) {
    ObjectReader np = r.object("nominal_periods");
    for (SensorKind k : kAllSensorKinds) {
      const std::string key(to_string(k));
      if (np.has(key))
        p.config.policy.nominal_period[static_cast<std::size_t>(sensor_index(k))] = np.number(key);
    }
    np.finish();
  }
  FilterTuning t;
  if (r.has("filter")) t = detail::tuning_from(r.object("filter"));
  p.config.noise = t.noise;
  p.initial.P = t.initial_covariance;
  p.config.policy.staleness_factor = t.staleness_factor;
  if (r.has("frames")) {
    const json& f = r.get("frames");
    if (!f.is_object()) throw ConfigError("key 'frames' must be a table/object");
    for (auto it = f.begin(); it != f.end(); ++it)
      p.frames.emplace_back(it.key(), detail::transform_from(ObjectReader(*it, "frames." + it.key())));
  }
  r.finish();
  p.config.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Sensor log: one JSON object per line

inline std::string log_record_line(const Measurement& m) {
  json values = json::array();
  for (int i = 0; i < m.values.size(); ++i) values.push_back(m.values[i]);
  json j = {{"t", m.t}, {"kind", std::string(to_string(m.kind))}, {"values", values}};
  if (m.frame) j["frame"] = *m.frame;
  return j.dump();
}

inline std::string serialize_log(const std::vector<Measurement>& records) {
  std::string out;
  for (const auto& m : records) out += log_record_line(m) + "\n";
  return out;
}

/// Parses a sensor log. Records may interleave kinds arbitrarily but must be
/// time-ordered within a kind. Errors carry the 1-based line number.
inline std::vector<Measurement> parse_log(std::istream& in) {
  std::vector<Measurement> out;
  std::array<std::optional<double>, 4> last_t{};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = "log line " + std::to_string(lineno);
    try {
      const json j = parse_json_text(line, at);
      ObjectReader r(j, "");
      Measurement m;
      m.t = r.number("t");
      m.kind = sensor_kind_from_string(r.string("kind"));
      const std::vector<double> v =
          r.numbers("values", static_cast<std::size_t>(block_size(m.kind)));
      m.values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      if (r.has("frame")) m.frame = r.string("frame");
      r.finish();
      m.validate();
      auto& last = last_t[static_cast<std::size_t>(sensor_index(m.kind))];
      if (last && m.t < *last)
        throw ConfigError("record out of order within kind '" + std::string(to_string(m.kind)) +
                          "'");
      last = m.t;
      out.push_back(std::move(m));
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      throw ConfigError(what.rfind(at, 0) == 0 ? what : at + ": " + what);
    }
  }
  return out;
}

/// Global time order with ties broken by canonical kind order; stable
/// within a kind.
inline void sort_records(std::vector<Measurement>& records) {
  std::stable_sort(records.begin(), records.end(), [](const Measurement& a, const Measurement& b) {
    if (a.t != b.t) return a.t < b.t;
    return sensor_index(a.kind) < sensor_index(b.kind);
  });
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_row(std::initializer_list<double> values) {
  std::string s;
  bool first = true;
  for (double v : values) {
    if (!first) s += ',';
    s += format_double(v);
    first = false;
  }
  return s + "\n";
}

inline std::string estimate_csv(const std::vector<EstimateRow>& rows) {
  std::string out =
      "t,X,Y,psi,omega_r,omega_l,radius_r,radius_l,bias,p11,p22,p33,p44,p55,p66,p77,p88\n";
  for (const auto& r : rows) {
    const StateVector& x = r.x;
    const Vector8& p = r.p_diag;
    out += csv_row({r.t, x.x, x.y, x.psi, x.omega_r, x.omega_l, x.radius_r, x.radius_l, x.bias,
                    p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]});
  }
  return out;
}

inline std::string truth_csv(const GroundTruth& g) {
  std::string out = "t,X,Y,psi,omega_r,omega_l\n";
  for (const auto& s : g.samples) out += csv_row({s.t, s.x, s.y, s.psi, s.omega_r, s.omega_l});
  return out;
}

inline std::string metrics_csv(const RunMetrics& m) {
  std::string out = "t,pos_err,yaw_err,s_pose,s_vel,cum_yaw_vel\n";
  for (std::size_t k = 0; k < m.t.size(); ++k)
    out += csv_row({m.t[k], m.pos_err[k], m.yaw_err[k], m.s_pose[k], m.s_vel[k], m.cum_yaw_vel[k]});
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

inline double parse_csv_number(const std::string& cell, std::size_t lineno) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw ConfigError("line " + std::to_string(lineno) + ": '" + cell + "' is not a number");
  return v;
}

/// Reads a planar path from any CSV with a header naming columns t, X and Y
/// (extra columns are ignored, so estimate.csv and truth.csv qualify).
inline TimedPath parse_path_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("path CSV is empty");
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("path CSV header lacks column '" + name + "'");
  };
  const std::size_t ct = col("t"), cx = col("X"), cy = col("Y");

  TimedPath path;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ConfigError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " columns");
    path.samples.push_back({parse_csv_number(cells[ct], lineno), parse_csv_number(cells[cx], lineno),
                            parse_csv_number(cells[cy], lineno)});
  }
  path.validate();
  return path;
}

inline std::string path_csv(const TimedPath& p) {
  std::string out = "t,X,Y\n";
  for (const auto& s : p.samples) out += csv_row({s.t, s.x, s.y});
  return out;
}

}  // namespace ddfusion::io
