#include "rotor/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include "rotor/errors.hpp"
#include "rotor/io.hpp"

namespace rotor {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be reported as typos.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label(), "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <class Int>
  void integer(const char* key, Int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
      if (std::is_unsigned_v<Int> && v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)
        throw ConfigError(key_path(key), "must be >= 0");
      out = v->get<Int>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void section(Section& parent, const char* key, Fn&& fn) {
  if (const json* v = parent.take(key)) {
    Section s(*v, parent.key_path(key));
    fn(s);
    s.finish();
  }
}

void read_axis(Section& parent, const char* key, GridAxis& axis) {
  section(parent, key, [&](Section& s) {
    s.number("min", axis.min);
    s.number("max", axis.max);
    s.integer("count", axis.count);
  });
}

void read_integrator(Section& s, IntegratorSettings& in) {
  s.integer("steps_per_half_period", in.steps_per_half_period);
  s.integer("transient_periods", in.transient_periods);
  s.integer("output_stride", in.output_stride);
}

json integrator_json(const IntegratorSettings& in) {
  return {{"steps_per_half_period", in.steps_per_half_period},
          {"transient_periods", in.transient_periods},
          {"output_stride", in.output_stride}};
}

std::vector<double> number_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

// Re-raise plain validation failures from the modules as config errors. Their
// messages already start with the field name.
template <class Fn>
void checked(const std::string& field, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    if (e.field().rfind(field, 0) == 0) throw;
    throw ConfigError(field + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

std::string sense_mode_name(SenseMode m) { return m == SenseMode::pressure ? "pressure" : "torque"; }

ClassifySettings RunConfig::classify_settings() const {
  ClassifySettings s = classify;
  s.integrator = integrator;
  return s;
}

OperatingPoint RunConfig::operating_point() const {
  OperatingPoint op;
  op.rod = rod;
  op.gas = gas;
  op.laser = laser;
  op.drive = drive;
  op.factors = factors;
  return op;
}

void RunConfig::validate() const {
  checked("rod", [&] { rod.validate(); });
  checked("gas", [&] { gas.validate(); });
  checked("laser", [&] { laser.validate(); });
  checked("drive", [&] { drive.validate(); });
  checked("geometry", [&] { factors.validate(); });
  checked("integrator", [&] { integrator.validate(); });
  checked("classify", [&] { classify_settings().validate(); });
  checked("noise", [&] { noise.validate(); });
  if (!std::isfinite(initial.alpha) || !std::isfinite(initial.omega))
    throw ConfigError("initial", "alpha and omega must be finite");
  if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");

  if (simulate.periods < 1) throw ConfigError("simulate.periods", "must be >= 1");
  if (!std::isfinite(simulate.detector_angle)) throw ConfigError("simulate.detector_angle", "must be finite");

  map.damping.validate("map.damping");
  map.torque.validate("map.torque");
  if (!(map.nv_ratio > 0.0) || !std::isfinite(map.nv_ratio)) throw ConfigError("map.nv_ratio", "must be > 0");
  checked("map.integrator", [&] { map.integrator.validate(); });
  if (map.analysis_periods < 1) throw ConfigError("map.analysis_periods", "must be >= 1");

  {
    ParameterPath p;
    p.space = path.space;
    p.waypoints = path.waypoints;
    p.points_per_segment = path.points_per_segment;
    p.ramp_periods = path.ramp_periods;
    p.dwell_periods = path.dwell_periods;
    p.nv_ratio = path.nv_ratio;
    p.duty = drive.duty;
    p.rod = rod;
    p.gas = gas;
    p.laser = laser;
    p.factors = factors;
    p.validate();
  }

  if (analyze.periods < 1) throw ConfigError("analyze.periods", "must be >= 1");
  if (analyze.segments < 1) throw ConfigError("analyze.segments", "must be >= 1");
  if (!(analyze.fit_half_window >= 0.0)) throw ConfigError("analyze.fit_half_window", "must be >= 0");

  for (std::size_t i = 0; i < sense.pressures.size(); ++i)
    if (!(sense.pressures[i] >= 0.0) || !std::isfinite(sense.pressures[i]))
      throw ConfigError("sense.pressures[" + std::to_string(i) + "]", "must be >= 0");
  checked("sense.chain", [&] { sense.chain.validate(); });
  if (!(sense.power_noise >= 0.0)) throw ConfigError("sense.power_noise", "must be >= 0");
  if (!(sense.delta_phase >= 0.0)) throw ConfigError("sense.delta_phase", "must be >= 0");
  if (!(sense.bandwidth > 0.0)) throw ConfigError("sense.bandwidth", "must be > 0");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");

  section(root, "rod", [&](Section& s) {
    s.number("length", c.rod.length);
    s.number("diameter", c.rod.diameter);
    s.number("mass", c.rod.mass);
    s.number("chi_parallel", c.rod.chi_parallel);
    s.number("chi_perp", c.rod.chi_perp);
  });
  section(root, "gas", [&](Section& s) {
    if (s.has("pressure_pa") && s.has("pressure_mbar"))
      throw ConfigError("gas.pressure_mbar", "give pressure_pa or pressure_mbar, not both");
    s.number("pressure_pa", c.gas.pressure);
    if (s.has("pressure_mbar")) {
      double mbar = 0.0;
      s.number("pressure_mbar", mbar);
      c.gas.pressure = mbar * constants::kPascalPerMbar;
    }
    s.number("temperature", c.gas.temperature);
    s.number("particle_mass", c.gas.particle_mass);
  });
  section(root, "laser", [&](Section& s) {
    s.number("power", c.laser.power);
    s.number("wavelength", c.laser.wavelength);
    s.number("waist", c.laser.waist);
  });
  section(root, "drive", [&](Section& s) {
    s.number("frequency", c.drive.frequency);
    s.number("duty", c.drive.duty);
  });
  section(root, "geometry", [&](Section& s) {
    s.number("eta1", c.factors.eta1);
    s.number("eta2", c.factors.eta2);
  });
  section(root, "integrator", [&](Section& s) { read_integrator(s, c.integrator); });
  section(root, "classify", [&](Section& s) {
    s.integer("analysis_periods", c.classify.analysis_periods);
    s.integer("residual_samples", c.classify.residual_samples);
    s.integer("q_max", c.classify.q_max);
    s.integer("max_doublings", c.classify.max_doublings);
    s.number("lock_tolerance", c.classify.lock_tolerance);
    s.number("threshold_tolerance", c.classify.threshold_tolerance);
    s.number("near_lock_window", c.classify.near_lock_window);
    s.number("min_relaxation_times", c.classify.min_relaxation_times);
  });
  section(root, "noise", [&](Section& s) {
    s.number("offset", c.noise.offset);
    s.number("amplitude", c.noise.amplitude);
    s.number("power_noise_rms", c.noise.power_noise_rms);
    s.boolean("power_noise_pink", c.noise.power_noise_pink);
    s.number("additive_rms", c.noise.additive_rms);
  });
  section(root, "initial", [&](Section& s) {
    s.boolean("on_cycle", c.initial.on_cycle);
    s.number("alpha", c.initial.alpha);
    s.number("omega", c.initial.omega);
  });
  root.integer("seed", c.seed);
  root.integer("jobs", c.jobs);
  root.string("out_dir", c.out_dir);

  section(root, "simulate", [&](Section& s) {
    s.integer("periods", c.simulate.periods);
    s.number("detector_angle", c.simulate.detector_angle);
    s.boolean("write_trace", c.simulate.write_trace);
  });
  section(root, "map", [&](Section& s) {
    read_axis(s, "damping", c.map.damping);
    read_axis(s, "torque", c.map.torque);
    s.number("nv_ratio", c.map.nv_ratio);
    section(s, "integrator", [&](Section& t) { read_integrator(t, c.map.integrator); });
    s.integer("analysis_periods", c.map.analysis_periods);
  });
  section(root, "path", [&](Section& s) {
    std::string space = "dimensionless";
    s.string("space", space);
    if (space == "dimensionless") c.path.space = PathSpace::dimensionless;
    else if (space == "physical") c.path.space = PathSpace::physical;
    else throw ConfigError("path.space", "expected \"dimensionless\" or \"physical\"");
    if (const json* w = s.take("waypoints")) {
      if (!w->is_array()) throw ConfigError("path.waypoints", "expected an array of [x, y] pairs");
      c.path.waypoints.clear();
      for (std::size_t i = 0; i < w->size(); ++i) {
        const auto xy = number_list((*w)[i], "path.waypoints[" + std::to_string(i) + "]");
        if (xy.size() != 2) throw ConfigError("path.waypoints[" + std::to_string(i) + "]", "expected [x, y]");
        c.path.waypoints.push_back({xy[0], xy[1]});
      }
    }
    s.integer("points_per_segment", c.path.points_per_segment);
    s.integer("ramp_periods", c.path.ramp_periods);
    if (const json* d = s.take("dwell_periods")) {
      c.path.dwell_periods.clear();
      const json list = d->is_array() ? *d : json::array({*d});
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (!list[i].is_number_integer())
          throw ConfigError("path.dwell_periods[" + std::to_string(i) + "]", "expected an integer");
        c.path.dwell_periods.push_back(list[i].get<long>());
      }
    }
    s.number("nv_ratio", c.path.nv_ratio);
    s.boolean("start_on_cycle", c.path.start_on_cycle);
  });
  section(root, "analyze", [&](Section& s) {
    s.string("trace", c.analyze.trace);
    s.integer("periods", c.analyze.periods);
    std::string w = window_name(c.analyze.window);
    s.string("window", w);
    c.analyze.window = parse_window(w);
    s.integer("segments", c.analyze.segments);
    s.number("fit_half_window", c.analyze.fit_half_window);
  });
  section(root, "sense", [&](Section& s) {
    std::string mode = sense_mode_name(c.sense.mode);
    s.string("mode", mode);
    if (mode == "pressure") c.sense.mode = SenseMode::pressure;
    else if (mode == "torque") c.sense.mode = SenseMode::torque;
    else throw ConfigError("sense.mode", "expected \"pressure\" or \"torque\"");
    if (s.has("pressures_pa") && s.has("pressures_mbar"))
      throw ConfigError("sense.pressures_mbar", "give pressures_pa or pressures_mbar, not both");
    if (const json* v = s.take("pressures_pa")) c.sense.pressures = number_list(*v, "sense.pressures_pa");
    if (const json* v = s.take("pressures_mbar")) {
      c.sense.pressures = number_list(*v, "sense.pressures_mbar");
      for (double& p : c.sense.pressures) p *= constants::kPascalPerMbar;
    }
    section(s, "chain", [&](Section& t) {
      auto& ch = c.sense.chain;
      t.number("intermediate_frequency", ch.intermediate_frequency);
      t.number("output_rate", ch.output_rate);
      t.number("time_constant", ch.time_constant);
      t.number("record_seconds", ch.record_seconds);
      t.number("detector_angle", ch.detector_angle);
      t.integer("steps_per_half_period", ch.steps_per_half_period);
      t.integer("samples_per_period", ch.samples_per_period);
      t.integer("transient_periods", ch.lock_check.integrator.transient_periods);
      t.integer("analysis_periods", ch.lock_check.analysis_periods);
    });
    s.number("power_noise", c.sense.power_noise);
    s.boolean("chain_resolution", c.sense.chain_resolution);
    s.number("delta_phase", c.sense.delta_phase);
    s.number("bandwidth", c.sense.bandwidth);
  });
  root.finish();

  c.noise.seed = c.seed;
  c.classify.integrator = c.integrator;
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json pressures = json::array();
  for (double p : c.sense.pressures) pressures.push_back(p);
  json waypoints = json::array();
  for (const auto& w : c.path.waypoints) waypoints.push_back({w.x, w.y});
  const auto& ch = c.sense.chain;
  return {
      {"rod",
       {{"length", c.rod.length},
        {"diameter", c.rod.diameter},
        {"mass", c.rod.mass},
        {"chi_parallel", c.rod.chi_parallel},
        {"chi_perp", c.rod.chi_perp}}},
      {"gas",
       {{"pressure_pa", c.gas.pressure}, {"temperature", c.gas.temperature}, {"particle_mass", c.gas.particle_mass}}},
      {"laser", {{"power", c.laser.power}, {"wavelength", c.laser.wavelength}, {"waist", c.laser.waist}}},
      {"drive", {{"frequency", c.drive.frequency}, {"duty", c.drive.duty}}},
      {"geometry", {{"eta1", c.factors.eta1}, {"eta2", c.factors.eta2}}},
      {"integrator", integrator_json(c.integrator)},
      {"classify",
       {{"analysis_periods", c.classify.analysis_periods},
        {"residual_samples", c.classify.residual_samples},
        {"q_max", c.classify.q_max},
        {"max_doublings", c.classify.max_doublings},
        {"lock_tolerance", c.classify.lock_tolerance},
        {"threshold_tolerance", c.classify.threshold_tolerance},
        {"near_lock_window", c.classify.near_lock_window},
        {"min_relaxation_times", c.classify.min_relaxation_times}}},
      {"noise",
       {{"offset", c.noise.offset},
        {"amplitude", c.noise.amplitude},
        {"power_noise_rms", c.noise.power_noise_rms},
        {"power_noise_pink", c.noise.power_noise_pink},
        {"additive_rms", c.noise.additive_rms}}},
      {"initial", {{"on_cycle", c.initial.on_cycle}, {"alpha", c.initial.alpha}, {"omega", c.initial.omega}}},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"out_dir", c.out_dir},
      {"simulate",
       {{"periods", c.simulate.periods},
        {"detector_angle", c.simulate.detector_angle},
        {"write_trace", c.simulate.write_trace}}},
      {"map",
       {{"damping", {{"min", c.map.damping.min}, {"max", c.map.damping.max}, {"count", c.map.damping.count}}},
        {"torque", {{"min", c.map.torque.min}, {"max", c.map.torque.max}, {"count", c.map.torque.count}}},
        {"nv_ratio", c.map.nv_ratio},
        {"integrator", integrator_json(c.map.integrator)},
        {"analysis_periods", c.map.analysis_periods}}},
      {"path",
       {{"space", c.path.space == PathSpace::dimensionless ? "dimensionless" : "physical"},
        {"waypoints", waypoints},
        {"points_per_segment", c.path.points_per_segment},
        {"ramp_periods", c.path.ramp_periods},
        {"dwell_periods", c.path.dwell_periods},
        {"nv_ratio", c.path.nv_ratio},
        {"start_on_cycle", c.path.start_on_cycle}}},
      {"analyze",
       {{"trace", c.analyze.trace},
        {"periods", c.analyze.periods},
        {"window", window_name(c.analyze.window)},
        {"segments", c.analyze.segments},
        {"fit_half_window", c.analyze.fit_half_window}}},
      {"sense",
       {{"mode", sense_mode_name(c.sense.mode)},
        {"pressures_pa", pressures},
        {"chain",
         {{"intermediate_frequency", ch.intermediate_frequency},
          {"output_rate", ch.output_rate},
          {"time_constant", ch.time_constant},
          {"record_seconds", ch.record_seconds},
          {"detector_angle", ch.detector_angle},
          {"steps_per_half_period", ch.steps_per_half_period},
          {"samples_per_period", ch.samples_per_period},
          {"transient_periods", ch.lock_check.integrator.transient_periods},
          {"analysis_periods", ch.lock_check.analysis_periods}}},
        {"power_noise", c.sense.power_noise},
        {"chain_resolution", c.sense.chain_resolution},
        {"delta_phase", c.sense.delta_phase},
        {"bandwidth", c.sense.bandwidth}}},
  };
}

json provenance_json(const RunConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("out_dir");
  j.erase("jobs");
  return j;
}

RunConfig load_config(const std::string& path) { return config_from_json(load_config_json(path)); }

json load_config_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  std::string head(8, '\0');
  in.read(head.data(), 8);
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (is_binary_output(head)) {
    try {
      return read_binary_header(path).at("config");
    } catch (const std::exception& e) {
      throw ConfigError("--config", e.what());
    }
  }

  in.clear();
  in.seekg(0);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    const std::string tag = kConfigHeaderTag;
    if (text.compare(0, tag.size(), tag) == 0) {
      j = json::parse(text.substr(tag.size(), text.find('\n') - tag.size()));
    } else {
      j = json::parse(text);
      if (j.is_object() && j.contains("config") && j.contains("result")) j = j.at("config");
    }
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("not valid JSON: ") + e.what());
  }
  return j;
}

}  // namespace rotor
