#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>

#include "rotor/config.hpp"
#include "rotor/errors.hpp"
#include "rotor/io.hpp"
#include "rotor/lorentzian.hpp"
#include "rotor/parallel.hpp"

namespace rotor::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const LimitCycleReport& r) {
  return {{"label", r.label()},
          {"p", r.p},
          {"q", r.q},
          {"f_r", r.f_r},
          {"f_r_over_f_d", r.drive_frequency > 0.0 ? r.f_r / r.drive_frequency : 0.0},
          {"phase_lag", opt(r.phase_lag)},
          {"residual", r.residual},
          {"trapped", r.trapped},
          {"transient_periods", r.transient_periods}};
}

json coefficients_json(const Coefficients& c, const DriveConfig& d) {
  const auto s = dimensionless(c, d);
  return {{"damping", c.damping},
          {"torque", c.torque},
          {"potential", c.potential},
          {"inertia", c.inertia},
          {"scaled", {{"damping", s.damping}, {"torque", s.torque}, {"potential", s.potential}}}};
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

// Starting state in SI units, on the analytic cycle when asked and lockable.
RotorState initial_state(const RunConfig& cfg, const Coefficients& c) {
  if (!cfg.initial.on_cycle) return {cfg.initial.alpha, cfg.initial.omega, 0.0};
  const auto s = analytic_cycle_start(dimensionless(c, cfg.drive));
  return {s.alpha, s.omega * cfg.drive.frequency, 0.0};
}

struct Steady {
  LimitCycleReport report;
  Trajectory traj;
};

// Classify from the configured start, then record `periods` more from where the
// classification window ended.
Steady run_steady(const RunConfig& cfg, long periods) {
  const Coefficients c = compute_coefficients(cfg.rod, cfg.gas, cfg.laser, cfg.factors);
  const DriveConfig& d = cfg.drive;
  const double f = d.frequency;
  const RotorState start = initial_state(cfg, c);
  RotorState end;
  Steady s;
  s.report = classify_scaled(dimensionless(c, d), d.duty, {start.alpha, start.omega / f, 0.0},
                             cfg.classify_settings(), &end);
  s.report.f_r *= f;
  s.report.drive_frequency = f;
  s.traj = simulate({end.alpha, end.omega * f, end.time / f}, c, d, cfg.integrator, periods);
  return s;
}

int cmd_simulate(const RunConfig& cfg, const json& echo, std::ostream& out) {
  const Coefficients c = compute_coefficients(cfg.rod, cfg.gas, cfg.laser, cfg.factors);
  const Steady s = run_steady(cfg, cfg.simulate.periods);
  const auto& traj = s.traj;

  write_trajectory(out_path(cfg, "trajectory.bin"), traj, echo);
  {
    CsvWriter csv(out_path(cfg, "stroboscopic.csv"), echo, {"period", "time", "alpha", "omega", "alpha_mod_pi"});
    const auto spp = static_cast<std::size_t>(traj.samples_per_period);
    for (std::size_t i = 0; i < traj.states.size(); i += spp) {
      const auto& st = traj.states[i];
      csv << static_cast<long long>(i / spp) << st.time << st.alpha << st.omega << wrap_half_turn(st.alpha);
      csv.end_row();
    }
  }

  json result = {{"report", report_json(s.report)},
                 {"coefficients", coefficients_json(c, cfg.drive)},
                 {"analytic_phase_lag", nullptr},
                 {"threshold_frequency", nullptr},
                 {"recorded_periods", traj.periods},
                 {"recorded_mean_frequency", mean_rotation_frequency(traj, traj.periods)}};
  if (cfg.drive.duty == 0.5) result["analytic_phase_lag"] = opt(phase_lag_analytic(c, cfg.drive));
  if (c.damping > 0.0) result["threshold_frequency"] = threshold_frequency(c);

  if (cfg.simulate.write_trace) {
    NoiseSpec noise = cfg.noise;
    const auto trace = synthesize_detector(traj, cfg.simulate.detector_angle, noise);
    write_trace(out_path(cfg, "trace.bin"), trace, echo);
    result["trace"] = {{"samples", trace.samples.size()}, {"sample_rate", trace.sample_rate}, {"carrier", trace.carrier}};
  }
  write_json(out_path(cfg, "report.json"), echo, result);

  out << "simulate: " << s.report.label() << "  f_r = " << std::setprecision(12) << s.report.f_r << " Hz";
  if (s.report.phase_lag) out << "  phi = " << std::setprecision(6) << *s.report.phase_lag << " rad";
  out << "\n";
  return kOk;
}

int cmd_map(const RunConfig& cfg, const json& echo, std::ostream& out) {
  RegionMapSpec spec;
  spec.damping = cfg.map.damping;
  spec.torque = cfg.map.torque;
  spec.nv_ratio = cfg.map.nv_ratio;
  spec.duty = cfg.drive.duty;
  spec.settings = cfg.classify_settings();
  spec.settings.integrator = cfg.map.integrator;
  spec.settings.analysis_periods = cfg.map.analysis_periods;
  spec.jobs = cfg.jobs;
  const RegionMap m = map_region(spec);

  const auto member_counts = [](const std::vector<LimitCycleReport>& outcomes) {
    std::map<std::string, int> n;
    for (const auto& r : outcomes) ++n[r.label()];
    return n;
  };
  const auto majority = [](const std::map<std::string, int>& n) {
    return std::max_element(n.begin(), n.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  };

  long false_locks = 0;
  {
    CsvWriter cells(out_path(cfg, "map_cells.csv"), echo,
                    {"damping", "torque", "lockable", "analytic_phase", "majority", "n_lock_1_2", "n_lock_1_4",
                     "n_threshold", "n_unresolved", "mean_fr_ratio"});
    CsvWriter members(out_path(cfg, "map_members.csv"), echo,
                      {"damping", "torque", "member", "label", "fr_ratio", "residual", "trapped"});
    for (const auto& cell : m.cells) {
      auto n = member_counts(cell.outcomes);
      double mean = 0.0;
      for (const auto& r : cell.outcomes) mean += r.f_r;
      mean /= static_cast<double>(cell.outcomes.size());
      if (!cell.analytic_phase && n["lock_1_2"] > 0) ++false_locks;
      cells << cell.damping << cell.torque << (cell.analytic_phase ? 1 : 0)
            << (cell.analytic_phase ? format_double(*cell.analytic_phase) : std::string()) << majority(n)
            << n["lock_1_2"] << n["lock_1_4"] << n["threshold"] << n["unresolved"] << mean;
      cells.end_row();
      for (std::size_t k = 0; k < cell.outcomes.size(); ++k) {
        const auto& r = cell.outcomes[k];
        members << cell.damping << cell.torque << k << r.label() << r.f_r << r.residual << (r.trapped ? 1 : 0);
        members.end_row();
      }
    }
  }
  json coincidence = json::array();
  {
    CsvWriter csv(out_path(cfg, "map_coincidence.csv"), echo, {"ratio", "damping", "torque", "member", "label"});
    for (const auto& pt : m.coincidence) {
      json labels = json::array();
      for (std::size_t k = 0; k < pt.outcomes.size(); ++k) {
        csv << pt.ratio << pt.damping << pt.torque << k << pt.outcomes[k].label();
        csv.end_row();
        labels.push_back(pt.outcomes[k].label());
      }
      coincidence.push_back({{"ratio", pt.ratio},
                             {"damping", pt.damping},
                             {"torque", pt.torque},
                             {"analytic_phase", opt(pt.analytic_phase)},
                             {"labels", labels}});
    }
  }
  std::map<std::string, long> totals;
  for (const auto& cell : m.cells)
    for (const auto& r : cell.outcomes) ++totals[r.label()];
  write_json(out_path(cfg, "map.json"), echo,
             {{"cells", m.cells.size()},
              {"ensemble", spec.ensemble.size()},
              {"member_totals", totals},
              {"lock_1_2_outside_lockable", false_locks},
              {"coincidence", coincidence}});

  out << "map: " << m.damping_axis.size() << "x" << m.torque_axis.size() << " cells, " << false_locks
      << " with lock_1_2 outside the lockable region\n";
  return kOk;
}

ParameterPath make_path(const RunConfig& cfg) {
  ParameterPath p;
  p.space = cfg.path.space;
  p.waypoints = cfg.path.waypoints;
  p.points_per_segment = cfg.path.points_per_segment;
  p.ramp_periods = cfg.path.ramp_periods;
  p.dwell_periods = cfg.path.dwell_periods;
  p.nv_ratio = cfg.path.nv_ratio;
  p.duty = cfg.drive.duty;
  p.rod = cfg.rod;
  p.gas = cfg.gas;
  p.laser = cfg.laser;
  p.factors = cfg.factors;
  return p;
}

int cmd_path(const RunConfig& cfg, const json& echo, std::ostream& out) {
  const ParameterPath path = make_path(cfg);
  const RotorState start =
      cfg.path.start_on_cycle ? analytic_cycle_start(path.scaled_at(path.waypoints.front())) : RotorState{};
  const auto samples = sweep_path(path, start, cfg.classify_settings());

  json sequence = json::array();
  {
    CsvWriter csv(out_path(cfg, "path.csv"), echo,
                  {"index", "segment", "x", "y", "damping", "torque", "threshold_ratio", "fr_ratio", "f_r", "label",
                   "phase_lag"});
    for (const auto& s : samples) {
      const double f = path.frequency_at(s.point);
      csv << s.index << s.segment << s.point.x << s.point.y << s.scaled.damping << s.scaled.torque
          << s.threshold_ratio << s.report.f_r / f << s.report.f_r << s.report.label()
          << (s.report.phase_lag ? format_double(*s.report.phase_lag) : std::string());
      csv.end_row();
      if (sequence.empty() || sequence.back().at("label") != s.report.label())
        sequence.push_back({{"label", s.report.label()}, {"first", s.index}, {"count", 0}});
      sequence.back()["count"] = sequence.back()["count"].get<int>() + 1;
    }
  }
  write_json(out_path(cfg, "path.json"), echo, {{"points", samples.size()}, {"sequence", sequence}});

  out << "path:";
  for (const auto& run : sequence) out << " " << run.at("label").get<std::string>() << "x" << run.at("count");
  out << "\n";
  return kOk;
}

int cmd_analyze(const RunConfig& cfg, const json& echo, std::ostream& out, std::ostream& err) {
  SignalTrace trace;
  if (!cfg.analyze.trace.empty()) {
    try {
      trace = read_trace(cfg.analyze.trace);
    } catch (const std::runtime_error& e) {
      throw ConfigError("analyze.trace", e.what());
    }
  } else {
    const Steady s = run_steady(cfg, cfg.analyze.periods);
    trace = synthesize_detector(s.traj, cfg.simulate.detector_angle, cfg.noise);
  }
  const auto seg_len = trace.samples.size() / static_cast<std::size_t>(cfg.analyze.segments);
  if (seg_len < 16)
    throw ConfigError("analyze.segments",
                      "trace of " + std::to_string(trace.samples.size()) + " samples is shorter than one segment");
  const Spectrum spec = psd(trace, cfg.analyze.window, static_cast<std::size_t>(cfg.analyze.segments));

  {
    CsvWriter csv(out_path(cfg, "spectrum.csv"), echo, {"frequency", "psd"});
    for (std::size_t k = 0; k < spec.frequency.size(); ++k) {
      csv << spec.frequency[k] << spec.density[k];
      csv.end_row();
    }
  }

  // Carrier: the nominal tone if the trace knows it, the largest bin otherwise.
  double carrier = trace.carrier;
  if (!(carrier > 0.0) || carrier >= spec.frequency.back()) {
    const auto k = std::max_element(spec.density.begin() + 1, spec.density.end()) - spec.density.begin();
    carrier = spec.frequency[static_cast<std::size_t>(k)];
  }
  const double half = cfg.analyze.fit_half_window > 0.0 ? cfg.analyze.fit_half_window : 20.0 * spec.resolution_bandwidth;
  json fit_json = {{"carrier_guess", carrier}, {"half_window", half}, {"resolution_bandwidth", spec.resolution_bandwidth}};
  try {
    const LorentzianFit fit = fit_lorentzian(spec, carrier, half);
    fit_json.update({{"status", "ok"},
                     {"center", fit.center},
                     {"center_sigma", fit.center_sigma},
                     {"fwhm", fit.fwhm},
                     {"fwhm_sigma", fit.fwhm_sigma},
                     {"amplitude", fit.amplitude},
                     {"amplitude_sigma", fit.amplitude_sigma},
                     {"offset", fit.offset},
                     {"offset_sigma", fit.offset_sigma},
                     {"rms_residual", fit.rms_residual},
                     {"iterations", fit.iterations},
                     {"upper_bound", fit.upper_bound}});
    out << "analyze: peak " << std::setprecision(12) << fit.center << " Hz, FWHM " << std::setprecision(4) << fit.fwhm
        << " Hz" << (fit.upper_bound ? " (resolution limited, upper bound)" : "") << "\n";
  } catch (const FitError& e) {
    fit_json.update({{"status", "failed"}, {"message", e.what()}, {"rms_residual", e.residual()}});
    err << "analyze: no Lorentzian fit: " << e.what() << "\n";
  }

  json pn_json = {{"carrier", carrier}};
  try {
    const PhaseNoiseCurve pn = phase_noise(spec, carrier);
    CsvWriter csv(out_path(cfg, "phase_noise.csv"), echo, {"offset", "dbc_per_hz"});
    for (std::size_t k = 0; k < pn.offset.size(); ++k) {
      csv << pn.offset[k] << pn.dbc[k];
      csv.end_row();
    }
    pn_json["carrier"] = pn.carrier;
    pn_json["points"] = pn.offset.size();
  } catch (const std::domain_error& e) {
    pn_json["message"] = e.what();
    err << "analyze: no phase-noise curve: " << e.what() << "\n";
  }
  write_json(out_path(cfg, "analysis.json"), echo,
             {{"samples", trace.samples.size()},
              {"sample_rate", trace.sample_rate},
              {"window", window_name(spec.window)},
              {"segments", spec.segments},
              {"segment_length", spec.segment_length},
              {"enbw_bins", spec.enbw_bins},
              {"fit", fit_json},
              {"phase_noise", pn_json}});
  return kOk;
}

int cmd_sense(const RunConfig& cfg, const json& echo, std::ostream& out) {
  const OperatingPoint op = cfg.operating_point();
  if (cfg.sense.mode == SenseMode::torque) {
    const Coefficients c = op.coefficients();
    const double dphi = cfg.sense.delta_phase > 0.0 ? cfg.sense.delta_phase : power_noise_phase(op, cfg.sense.power_noise);
    const auto r = torque_sensitivity(c, op.drive, dphi, cfg.sense.bandwidth);
    write_json(out_path(cfg, "sense_torque.json"), echo,
               {{"phase", r.phase},
                {"delta_phase", r.delta_phase},
                {"delta_phase_source", cfg.sense.delta_phase > 0.0 ? "config" : "power_noise"},
                {"delta_torque", r.delta_torque},
                {"delta_external_torque", r.delta_external_torque},
                {"bandwidth", r.bandwidth},
                {"coefficients", coefficients_json(c, op.drive)}});
    out << "sense torque: phi = " << std::setprecision(6) << r.phase << " rad, dN = " << r.delta_torque
        << " N m, dN_ext = " << r.delta_external_torque << " N m\n";
    return kOk;
  }

  const auto& pressures = cfg.sense.pressures;
  if (pressures.empty()) throw ConfigError("sense.pressures_pa", "needs at least one pressure");
  std::vector<PhaseMeasurement> meas(pressures.size());
  // each pressure is independent; noise seeds are fixed per index
  parallel_for(pressures.size(), cfg.jobs, [&](std::size_t i) {
    NoiseSpec noise = cfg.noise;
    noise.seed = cfg.seed + i;
    meas[i] = measure_phase(op.at_pressure(pressures[i]), cfg.sense.chain, noise);
  });

  std::vector<CalibrationPoint> points;
  json rows = json::array();
  double worst = 0.0;
  {
    CsvWriter csv(out_path(cfg, "sense_pressure.csv"), echo,
                  {"pressure", "phase_chain", "phase_rms", "phase_simulated", "phase_analytic", "pressure_recovered",
                   "relative_error"});
    for (std::size_t i = 0; i < pressures.size(); ++i) {
      const auto& m = meas[i];
      const double recovered = pressure_from_phase(m.phase, op);
      const double rel = recovered / pressures[i] - 1.0;
      worst = std::max(worst, std::abs(rel));
      const auto analytic = phase_from_pressure(op.at_pressure(pressures[i]));
      csv << pressures[i] << m.phase << m.phase_rms << m.simulated_phase
          << (analytic ? format_double(*analytic) : std::string()) << recovered << rel;
      csv.end_row();
      points.push_back({pressures[i], m.phase, m.phase_rms > 0.0 ? std::optional<double>(m.phase_rms) : std::nullopt});
      rows.push_back({{"pressure", pressures[i]},
                      {"phase", m.phase},
                      {"phase_rms", m.phase_rms},
                      {"pressure_recovered", recovered},
                      {"relative_error", rel}});
    }
  }
  json result = {{"points", rows}, {"max_relative_error", worst}};

  std::vector<double> sorted = pressures;
  std::sort(sorted.begin(), sorted.end());
  const double p_mid = sorted[sorted.size() / 2];
  if (points.size() >= 3 && sorted.front() < sorted.back()) {
    const auto cal = calibrate_pressure(points);
    result["calibration"] = {{"slope", cal.slope},
                             {"intercept", cal.intercept},
                             {"max_residual", cal.max_residual},
                             {"phase_span", cal.phase_span},
                             {"nonlinear", cal.nonlinear},
                             {"analytic_slope", phase_pressure_slope(op.at_pressure(p_mid))}};
    if (cfg.sense.power_noise > 0.0)
      result["resolution_quasi_static"] =
          pressure_resolution(cal, power_noise_phase(op.at_pressure(p_mid), cfg.sense.power_noise), p_mid);
  }
  if (cfg.sense.chain_resolution && cfg.sense.power_noise > 0.0) {
    NoiseSpec noise = cfg.noise;
    const auto r = chain_pressure_resolution(op.at_pressure(p_mid), cfg.sense.chain, noise, cfg.sense.power_noise);
    result["resolution_chain"] = {{"pressure", r.pressure},
                                  {"relative_power_noise", r.relative_power_noise},
                                  {"phase_low", r.low.phase},
                                  {"phase_high", r.high.phase},
                                  {"pressure_low", r.pressure_low},
                                  {"pressure_high", r.pressure_high},
                                  {"relative", r.relative}};
    out << "sense pressure: dp/p through the chain = " << std::setprecision(4) << 100.0 * r.relative << " %\n";
  }
  write_json(out_path(cfg, "sense_pressure.json"), echo, result);
  out << "sense pressure: " << pressures.size() << " points, worst recovery error " << std::setprecision(4)
      << 100.0 * worst << " %\n";
  return kOk;
}

// key.path=value with value parsed as JSON when possible.
void apply_set(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key.path=value, got " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set", "empty key in " + key);
    if (!node->is_object()) throw ConfigError(key, "parent is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate and analyze an optically driven nanorotor", "rotorctl"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::string> out_dir;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config, or any rotorctl output file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "noise seed");
  app.add_option("--jobs", jobs, "worker threads (0: all cores)");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--set", sets, "override a config value, e.g. --set gas.pressure_pa=350");
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the merged config and exit");

  auto* sim = app.add_subcommand("simulate", "integrate, classify and record a trajectory");
  std::optional<long> periods;
  sim->add_option("--periods", periods, "recorded drive periods");

  auto* map = app.add_subcommand("map", "classify a grid in (damping, torque)");
  std::optional<int> grid;
  map->add_option("--grid", grid, "cells per axis");

  auto* path = app.add_subcommand("path", "sweep parameters along a path");
  std::string path_file;
  path->add_option("--path", path_file, "JSON with a path section")->check(CLI::ExistingFile);

  auto* analyze = app.add_subcommand("analyze", "spectrum, Lorentzian fit and phase noise of a trace");
  std::optional<std::string> trace_file;
  analyze->add_option("--trace", trace_file, "ROTRSIG1 trace written by simulate");

  auto* sense = app.add_subcommand("sense", "pressure calibration or torque sensitivity");
  std::optional<std::string> mode;
  sense->add_option("--mode", mode, "pressure or torque");
  for (auto* sub : {sim, map, path, analyze, sense}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  try {
    json j = config_path.empty() ? json::object() : load_config_json(config_path);
    if (!j.is_object()) throw ConfigError("--config", "expected a JSON object");
    if (seed) j["seed"] = *seed;
    if (jobs) j["jobs"] = *jobs;
    if (out_dir) j["out_dir"] = *out_dir;
    if (periods) j["simulate"]["periods"] = *periods;
    if (grid) {
      j["map"]["damping"]["count"] = *grid;
      j["map"]["torque"]["count"] = *grid;
    }
    if (!path_file.empty()) {
      json p = load_config_json(path_file);
      if (p.contains("path")) p = p.at("path");
      j["path"] = p;
    }
    if (trace_file) j["analyze"]["trace"] = *trace_file;
    if (mode) j["sense"]["mode"] = *mode;
    for (const auto& s : sets) apply_set(j, s);

    const RunConfig cfg = config_from_json(j);
    if (print_config) {
      out << config_to_json(cfg).dump(2) << "\n";
      return kOk;
    }
    const json echo = provenance_json(cfg);
    fs::create_directories(cfg.out_dir);

    if (sim->parsed()) return cmd_simulate(cfg, echo, out);
    if (map->parsed()) return cmd_map(cfg, echo, out);
    if (path->parsed()) return cmd_path(cfg, echo, out);
    if (analyze->parsed()) return cmd_analyze(cfg, echo, out, err);
    return cmd_sense(cfg, echo, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const SimulationError& e) {
    err << "simulation failed: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace rotor::cli
