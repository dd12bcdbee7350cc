#pragma once

// Run configuration shared by every rotorctl subcommand. Loaded from JSON with
// unknown keys rejected; errors name the dotted path of the offending key.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotor/limit_cycle.hpp"
#include "rotor/physics.hpp"
#include "rotor/sensing.hpp"
#include "rotor/signal.hpp"

namespace rotor {

struct InitialCondition {
  bool on_cycle = true;  // start on the analytic 1:2 cycle when lockable, at rest otherwise
  double alpha = 0.0;    // rad, used when on_cycle is false
  double omega = 0.0;    // rad/s
};

struct SimulateOptions {
  long periods = 5000;           // recorded after classification
  double detector_angle = 0.25;  // rad
  bool write_trace = true;
};

struct MapOptions {
  GridAxis damping{0.002, 0.04, 20};
  GridAxis torque{0.002, 0.12, 20};
  double nv_ratio = 0.18607752019379456;
  // the map is run with its own, cheaper settings
  IntegratorSettings integrator{16, 1000, 1};
  long analysis_periods = 800;
};

struct PathOptions {
  PathSpace space = PathSpace::dimensionless;
  // (γ̃, ñ) corners of the hysteresis loop; dwell points avoid the thin 1:3 and 1:6 tongues
  std::vector<PathPoint> waypoints{{0.0075, 0.015}, {0.0131, 0.015}, {0.02984, 0.075}, {0.01085, 0.075}};
  int points_per_segment = 9;
  long ramp_periods = 200;
  std::vector<long> dwell_periods{2000};
  double nv_ratio = 0.18607752019379456;
  bool start_on_cycle = true;
};

struct AnalyzeOptions {
  std::string trace;            // ROTRSIG1 file; empty: synthesize from the config
  long periods = 20000;         // synthesized record length
  Window window = Window::hann;
  long segments = 1;
  double fit_half_window = 0.0;  // Hz; 0: 20 resolution bandwidths
};

enum class SenseMode { pressure, torque };

struct SenseOptions {
  SenseMode mode = SenseMode::pressure;
  std::vector<double> pressures{360.0, 380.0, 400.0, 420.0, 440.0};  // Pa, ±10 % keeps the line fit linear
  ChainSettings chain;
  double power_noise = 0.003;   // relative RMS laser power fluctuation
  bool chain_resolution = true;  // measure δp/p through the chain at P(1 ± ε)
  double delta_phase = 0.0;      // torque mode; 0: the power-noise-limited δφ
  double bandwidth = 1.0;        // Hz
};

struct RunConfig {
  Nanorod rod;
  GasEnvironment gas;
  LaserField laser;
  DriveConfig drive;
  GeometricFactors factors;
  IntegratorSettings integrator;
  ClassifySettings classify;  // its integrator member mirrors `integrator`
  NoiseSpec noise;
  InitialCondition initial;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::string out_dir = "out";

  SimulateOptions simulate;
  MapOptions map;
  PathOptions path;
  AnalyzeOptions analyze;
  SenseOptions sense;

  void validate() const;
  OperatingPoint operating_point() const;
  ClassifySettings classify_settings() const;
};

/// Throws ConfigError with the key path on any unknown key, wrong type or invalid value.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Reads a config from a JSON file, a CSV output's `# config:` header line, a
/// JSON output's "config" member or a binary output's header.
RunConfig load_config(const std::string& path);
/// The raw JSON behind load_config, before parsing.
nlohmann::json load_config_json(const std::string& path);

/// The config as echoed into output files: everything that can change a
/// result. out_dir and jobs are left out so reruns elsewhere compare equal.
nlohmann::json provenance_json(const RunConfig& cfg);

std::string sense_mode_name(SenseMode m);

}  // namespace rotor
