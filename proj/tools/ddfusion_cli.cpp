#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ddfusion/ddfusion.hpp"

namespace fs = std::filesystem;
using namespace ddfusion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

/// Splits "a:b" or "a:b:c" into numbers; `what` names the flag in errors.
std::vector<double> parse_colon_list(const std::string& text, std::size_t expected,
                                     const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) {
    double v = 0.0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || res.ec != std::errc() || res.ptr != part.data() + part.size() ||
        !std::isfinite(v))
      throw ConfigError(what + ": '" + part + "' is not a number");
    out.push_back(v);
  }
  if (out.size() != expected || (!text.empty() && text.back() == ':'))
    throw ConfigError(what + " must have the form " + (expected == 2 ? "lo:hi" : "lo:hi:n"));
  return out;
}

std::string summary_text(const RunMetrics& m, const CoherenceSeries& c) {
  std::ostringstream os;
  os << "final_pos_err=" << io::format_double(m.final_pos_err()) << "\n"
     << "final_yaw_err=" << io::format_double(m.final_yaw_err()) << "\n"
     << "median_pos_err=" << io::format_double(m.median_pos_err()) << "\n"
     << "distance_divergence=" << io::format_double(c.distance.empty() ? 0.0 : c.distance.back())
     << "\n"
     << "yaw_divergence=" << io::format_double(c.yaw.empty() ? 0.0 : c.yaw.back()) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string scenario;
  std::string estimate = "on";
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

int cmd_run(const RunArgs& a) {
  Scenario s = io::load_scenario(a.scenario);
  if (a.seed) s.seed = *a.seed;
  const bool estimate = a.estimate == "on";

  const RunOutput r = run_scenario(s, estimate);
  const CoherenceSeries c = coherence_metrics(r.metrics);

  ensure_dir(a.out);
  io::write_file(join(a.out, "estimate.csv"), io::estimate_csv(r.estimate));
  io::write_file(join(a.out, "truth.csv"), io::truth_csv(r.truth));
  io::write_file(join(a.out, "metrics.csv"), io::metrics_csv(r.metrics));
  io::write_file(join(a.out, "sensors.jsonl"), io::serialize_log(r.records));
  io::write_file(join(a.out, "params.json"),
                 io::replay_params_to_json(io::replay_params_from_scenario(s, estimate)).dump(2) +
                     "\n");
  const std::string summary = summary_text(r.metrics, c);
  io::write_file(join(a.out, "summary.txt"), summary);
  std::cout << summary;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SensitivityArgs {
  std::string scenario;
  std::string param;
  std::string range;
  std::string out = ".";
};

int cmd_sensitivity(const SensitivityArgs& a) {
  const SweepParam param = sweep_param_from_string(a.param);
  const auto r = parse_colon_list(a.range, 3, "--range");
  const double n_real = r[2];
  if (!(n_real >= 1.0 && n_real == std::floor(n_real) && n_real <= 10000.0))
    throw ConfigError("--range: n must be an integer in [1, 10000]");
  const auto n = static_cast<std::size_t>(n_real);
  if (n == 1 && r[0] != r[1]) throw ConfigError("--range: n = 1 requires lo == hi");
  if (r[1] < r[0]) throw ConfigError("--range: hi must be >= lo");

  const Scenario base = io::load_scenario(a.scenario);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i)
    values[i] = n == 1 ? r[0]
                       : r[0] + (r[1] - r[0]) * static_cast<double>(i) / static_cast<double>(n - 1);

  // Scenarios are validated up front so a bad grid point fails before any work.
  std::vector<Scenario> scenarios;
  for (double v : values) scenarios.push_back(sensitivity_scenario(base, param, v));

  std::vector<std::future<RunOutput>> jobs;
  for (const auto& s : scenarios)
    jobs.push_back(std::async(std::launch::async, [&s] { return run_scenario(s, false); }));

  ensure_dir(a.out);
  std::string summary = "index,value,final_pos_err,final_yaw_err\n";
  for (std::size_t i = 0; i < n; ++i) {
    const RunOutput out = jobs[i].get();
    char name[32];
    std::snprintf(name, sizeof(name), "point_%03zu.csv", i);
    io::write_file(join(a.out, name), io::estimate_csv(out.estimate));
    summary += std::to_string(i) + "," + io::format_double(values[i]) + "," +
               io::format_double(out.metrics.final_pos_err()) + "," +
               io::format_double(out.metrics.final_yaw_err()) + "\n";
  }
  io::write_file(join(a.out, "summary.csv"), summary);
  std::cout << summary;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  std::string path_a;
  std::string path_b;
  std::string window;
  std::string out;
};

TimedPath load_path(const std::string& file) {
  std::istringstream in(io::read_file(file));
  try {
    return io::parse_path_csv(in);
  } catch (const ConfigError& e) {
    throw ConfigError(file + ": " + e.what());
  }
}

int cmd_align(const AlignArgs& a) {
  TimedPath pa = load_path(a.path_a);
  TimedPath pb = load_path(a.path_b);
  if (!a.window.empty()) {
    const auto w = parse_colon_list(a.window, 2, "--window");
    if (w[1] < w[0]) throw ConfigError("--window: t1 must be >= t0");
    pa = pa.window(w[0], w[1]);
    pb = pb.window(w[0], w[1]);
  }
  const auto pairs = associate(pa, pb);
  const RigidTransform2D tf = horn_align(pairs);
  const double mse = alignment_mse(tf, pairs);

  std::ostringstream os;
  os << "theta=" << io::format_double(tf.theta) << "\n"
     << "tx=" << io::format_double(tf.tx) << "\n"
     << "ty=" << io::format_double(tf.ty) << "\n"
     << "mse=" << io::format_double(mse) << "\n"
     << "pairs=" << pairs.size() << "\n";
  std::cout << os.str();

  if (!a.out.empty()) {
    ensure_dir(a.out);
    io::write_file(join(a.out, "alignment.txt"), os.str());
    TimedPath mapped = load_path(a.path_b);
    for (auto& p : mapped.samples) {
      const Eigen::Vector2d q = apply_transform(tf, Eigen::Vector2d(p.x, p.y));
      p.x = q.x();
      p.y = q.y();
    }
    io::write_file(join(a.out, "path_b_aligned.csv"), io::path_csv(mapped));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReplayArgs {
  std::string log;
  std::string params;
  std::string out = ".";
};

int cmd_replay(const ReplayArgs& a) {
  const io::ReplayParams p =
      io::replay_params_from_json(io::parse_json_text(io::read_file(a.params), a.params));
  std::vector<Measurement> records;
  {
    std::istringstream in(io::read_file(a.log));
    records = io::parse_log(in);
  }
  io::sort_records(records);

  const double ts = p.config.model.sample_time;
  std::size_t steps = 0;
  if (p.duration) {
    steps = static_cast<std::size_t>(std::llround(*p.duration / ts));
  } else if (!records.empty()) {
    double t_last = 0.0;
    for (const auto& m : records) t_last = std::max(t_last, m.t);
    steps = static_cast<std::size_t>(std::ceil(t_last / ts - 1e-9));
  }

  const auto est = run_filter(records, p.config, p.initial, steps, p.frames);
  ensure_dir(a.out);
  io::write_file(join(a.out, "estimate.csv"), io::estimate_csv(est));
  std::cout << "steps=" << steps << "\nrecords=" << records.size() << "\n";
  return kExitOk;
}

int cmd_preset(const std::string& name, const std::string& out) {
  Scenario s;
  if (name == "dropout_350s") s = presets::dropout_350s();
  else if (name == "coherence_350s") s = presets::coherence_350s();
  else if (name == "straight_line") s = presets::straight_line();
  else throw ConfigError("unknown preset '" + name + "'");
  const std::string text = io::serialize_scenario(s);
  if (out.empty()) std::cout << text;
  else io::write_file(out, text);
  return kExitOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AlignmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differential-drive EKF localization: simulate, sweep, align, replay"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and run the filter");
  run_cmd->add_option("scenario", run.scenario, "Scenario JSON file")->required();
  run_cmd->add_option("--estimate-uncertainties", run.estimate, "Estimate radii and bias")
      ->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
  run_cmd->add_option("--out", run.out, "Output directory");

  SensitivityArgs sens;
  auto* sens_cmd =
      app.add_subcommand("sensitivity", "Dead-reckoning error versus a model parameter error");
  sens_cmd->add_option("scenario", sens.scenario, "Scenario JSON file")->required();
  sens_cmd->add_option("--param", sens.param, "radius_l, radius_r or bias")->required();
  sens_cmd->add_option("--range", sens.range, "Error grid lo:hi:n")->required();
  sens_cmd->add_option("--out", sens.out, "Output directory");

  AlignArgs align;
  auto* align_cmd = app.add_subcommand("align", "Rigid 2-D alignment of two trajectories");
  align_cmd->add_option("path_a", align.path_a, "Reference path CSV (t,X,Y)")->required();
  align_cmd->add_option("path_b", align.path_b, "Path CSV to map onto path_a")->required();
  align_cmd->add_option("--window", align.window, "Time window t0:t1");
  align_cmd->add_option("--out", align.out, "Output directory for the aligned path");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Run the filter on a recorded sensor log");
  replay_cmd->add_option("log", replay.log, "Sensor log (JSON lines)")->required();
  replay_cmd->add_option("params", replay.params, "Filter parameter JSON file")->required();
  replay_cmd->add_option("--out", replay.out, "Output directory");

  std::string preset_name, preset_out;
  auto* preset_cmd = app.add_subcommand("preset", "Write a built-in scenario as JSON");
  preset_cmd->add_option("name", preset_name, "dropout_350s, coherence_350s or straight_line")
      ->required();
  preset_cmd->add_option("--out", preset_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run_cmd) return guarded([&] { return cmd_run(run); });
  if (*sens_cmd) return guarded([&] { return cmd_sensitivity(sens); });
  if (*align_cmd) return guarded([&] { return cmd_align(align); });
  if (*preset_cmd) return guarded([&] { return cmd_preset(preset_name, preset_out); });
  return guarded([&] { return cmd_replay(replay); });
}
