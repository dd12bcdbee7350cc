#include "rotor/limit_cycle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rotor/errors.hpp"
#include "rotor/parallel.hpp"

namespace rotor {

using constants::kPi;

std::string LimitCycleReport::label() const {
  switch (kind) {
    case CycleKind::threshold:
      return "threshold";
    case CycleKind::unresolved:
      return "unresolved";
    case CycleKind::lock:
      return "lock_" + std::to_string(p) + "_" + std::to_string(q);
  }
  return "unresolved";
}

void ClassifySettings::validate() const {
  integrator.validate();
  if (integrator.transient_periods < 0) throw ConfigError("transient_periods", "must be >= 0");
  if (residual_samples < 2) throw ConfigError("residual_samples", "must be >= 2");
  if (q_max < 1) throw ConfigError("q_max", "must be >= 1");
  if (analysis_periods < static_cast<long>(q_max) * residual_samples)
    throw ConfigError("analysis_periods", "must cover residual_samples stroboscopic samples at q_max");
  if (max_doublings < 0) throw ConfigError("max_doublings", "must be >= 0");
  if (!(lock_tolerance > 0.0)) throw ConfigError("lock_tolerance", "must be > 0");
  if (!(threshold_tolerance > 0.0)) throw ConfigError("threshold_tolerance", "must be > 0");
  if (!(near_lock_window >= 0.0)) throw ConfigError("near_lock_window", "must be >= 0");
  if (!(min_relaxation_times >= 0.0)) throw ConfigError("min_relaxation_times", "must be >= 0");
}

double threshold_frequency(const Coefficients& coeffs) {
  if (!(coeffs.damping > 0.0)) throw std::domain_error("threshold frequency needs damping > 0");
  return coeffs.torque / (4.0 * kPi * coeffs.inertia * coeffs.damping);
}

std::optional<double> phase_lag_analytic(const DimensionlessCoefficients& scaled, double duty) {
  if (duty != 0.5) throw std::domain_error("phase-lag formula assumes duty 1/2");
  if (!(scaled.potential > 0.0)) return std::nullopt;
  const double x = kPi / (2.0 * scaled.potential) * (scaled.torque - 2.0 * kPi * scaled.damping);
  if (!(std::abs(x) <= 1.0)) return std::nullopt;
  return std::acos(x);
}

std::optional<double> phase_lag_analytic(const Coefficients& coeffs, const DriveConfig& drive) {
  drive.validate();
  if (drive.duty != 0.5) throw std::domain_error("phase-lag formula assumes duty 1/2");
  if (!(coeffs.potential > 0.0)) return std::nullopt;
  const double x = kPi / (2.0 * coeffs.potential) *
                   (coeffs.torque - 2.0 * kPi * drive.frequency * coeffs.inertia * coeffs.damping);
  if (!(std::abs(x) <= 1.0)) return std::nullopt;
  return std::acos(x);
}

double phase_lag_measured(const Trajectory& traj, const DriveConfig& drive, double slope_tolerance) {
  if (traj.periods < 1 || traj.samples_per_period < 1 || traj.states.size() < 2)
    throw std::invalid_argument("phase_lag_measured needs at least one whole period");
  const std::size_t n = static_cast<std::size_t>(traj.periods) * traj.samples_per_period;
  if (traj.states.size() < n + 1) throw std::invalid_argument("trajectory shorter than its period count");
  const auto& first = traj.states[traj.states.size() - 1 - n];
  const auto& last = traj.states.back();
  const double rate = kPi * drive.frequency;
  // Endpoints are a whole number of periods apart, so the periodic wobble of a
  // locked state drops out of this slope.
  const double slope = (last.alpha - first.alpha) / (last.time - first.time);
  if (std::abs(slope - rate) > slope_tolerance * rate)
    throw std::domain_error("trajectory is not 1:2 locked over the window");

  const std::size_t begin = traj.states.size() - 1 - n;
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + n; ++i) sum += traj.states[i].alpha - rate * traj.states[i].time;
  const double alpha0 = sum / static_cast<double>(n);
  const double phi = std::remainder(kPi - 2.0 * alpha0, 2.0 * kPi);
  return std::abs(phi);
}

namespace {

double half_turn_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, kPi - d);
}

struct WindowAnalysis {
  LimitCycleReport report;
  bool converged = false;  // stroboscopic fixed point found
  bool near_lock = false;
};

WindowAnalysis analyse_window(const Trajectory& traj, const DimensionlessCoefficients& scaled,
                              const ClassifySettings& settings) {
  WindowAnalysis out;
  auto& r = out.report;
  r.drive_frequency = 1.0;
  const double f_r = mean_rotation_frequency(traj, traj.periods);
  r.f_r = f_r;

  const auto spp = static_cast<std::size_t>(traj.samples_per_period);
  double best = INFINITY;
  int lock_q = 0;
  for (int q = 1; q <= settings.q_max; ++q) {
    const auto pts = stroboscopic_map(traj, q);
    const std::size_t m = static_cast<std::size_t>(settings.residual_samples);
    double res = 0.0;
    for (std::size_t j = pts.size() - m; j < pts.size(); ++j) {
      res = std::max(res, half_turn_distance(pts[j].angle, pts[j - 1].angle));
      res = std::max(res, std::abs(pts[j].omega - pts[j - 1].omega));
    }
    if (res < best) best = res;
    if (res < settings.lock_tolerance) {
      lock_q = q;
      best = res;
      break;
    }
  }
  r.residual = best;

  if (lock_q > 0) {
    out.converged = true;
    const auto& end = traj.states.back();
    const auto& back = traj.states[traj.states.size() - 1 - static_cast<std::size_t>(lock_q) * spp];
    const long half_turns = std::lround((end.alpha - back.alpha) / kPi);
    if (half_turns == 0) {
      // Trapped. With no torque this is the f_r = 0 end of the threshold law.
      r.f_r = 0.0;
      r.trapped = true;
      r.kind = scaled.torque == 0.0 ? CycleKind::threshold : CycleKind::unresolved;
      return out;
    }
    const long num = half_turns;
    const long den = 2L * lock_q;
    const long g = std::gcd(std::labs(num), den);
    const int p = static_cast<int>(num / g);
    const int q = static_cast<int>(den / g);
    if (std::abs(f_r * q - p) < settings.lock_tolerance) {
      r.kind = CycleKind::lock;
      r.p = p;
      r.q = q;
      if (p == 1 && q == 2) {
        try {
          r.phase_lag = phase_lag_measured(traj, DriveConfig{1.0, traj.drive.duty});
        } catch (const std::domain_error&) {
        }
      }
      return out;
    }
  }

  if (scaled.damping > 0.0) {
    const double f_th = scaled.torque / (4.0 * kPi * scaled.damping);
    if (std::abs(f_r - f_th) < settings.threshold_tolerance * std::abs(f_r)) r.kind = CycleKind::threshold;
  }

  // Rotation sitting next to a lock ratio without a converged fixed point may be
  // a slow capture.
  for (int q = 1; q <= settings.q_max && !out.near_lock; ++q) {
    const double m = std::round(f_r * 2.0 * q);
    if (m >= 1.0 && std::abs(f_r - m / (2.0 * q)) < settings.near_lock_window) out.near_lock = true;
  }
  return out;
}

}  // namespace

LimitCycleReport classify_scaled(const DimensionlessCoefficients& scaled, double duty,
                                 const RotorState& initial, const ClassifySettings& settings,
                                 RotorState* final_state, double external_torque) {
  settings.validate();
  const Coefficients coeffs = unit_coefficients(scaled);
  const DriveConfig drive{1.0, duty};
  const Propagator prop(coeffs, drive, settings.integrator, external_torque);
  // A constant torque counts twice against N in the period-averaged balance.
  DimensionlessCoefficients balance = scaled;
  balance.torque += 2.0 * external_torque;

  long discarded = settings.integrator.transient_periods;
  if (scaled.damping > 0.0)
    discarded = std::max(discarded, static_cast<long>(std::ceil(settings.min_relaxation_times / scaled.damping)));
  RotorState s = prop.run(initial, discarded);
  for (int attempt = 0;; ++attempt) {
    const Trajectory traj = simulate(s, coeffs, drive, settings.integrator, settings.analysis_periods,
                                     external_torque);
    WindowAnalysis w = analyse_window(traj, balance, settings);
    w.report.transient_periods = discarded;
    const bool retry =
        !w.converged && (w.report.kind == CycleKind::unresolved || w.near_lock);
    if (!retry || attempt >= settings.max_doublings) {
      if (final_state) *final_state = traj.states.back();
      return w.report;
    }
    const long extra = std::max(discarded, settings.analysis_periods);
    s = prop.run(traj.states.back(), extra);
    discarded += settings.analysis_periods + extra;
  }
}

LimitCycleReport classify(const Coefficients& coeffs, const DriveConfig& drive, const RotorState& initial,
                          const ClassifySettings& settings) {
  drive.validate();
  const double f = drive.frequency;
  const DimensionlessCoefficients scaled = dimensionless(coeffs, drive);
  const RotorState start{initial.alpha, initial.omega / f, initial.time * f};
  LimitCycleReport r = classify_scaled(scaled, drive.duty, start, settings);
  r.f_r *= f;
  r.drive_frequency = f;
  return r;
}

// ---------------------------------------------------------------------------

void GridAxis::validate(const char* name) const {
  if (count < 1) throw ConfigError(std::string(name) + ".count", "grid needs at least one cell");
  if (!std::isfinite(min) || !std::isfinite(max) || min < 0.0)
    throw ConfigError(std::string(name), "bounds must be finite and >= 0");
  if (count > 1 && !(max > min)) throw ConfigError(std::string(name), "max must exceed min");
}

std::vector<double> GridAxis::values() const {
  std::vector<double> v(static_cast<std::size_t>(count));
  if (count == 1) {
    v[0] = min;
    return v;
  }
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = min + (max - min) * i / (count - 1);
  return v;
}

std::vector<RotorState> default_ensemble() {
  std::vector<RotorState> out;
  for (double alpha : {0.0, kPi / 4.0})
    for (double turns : {0.0, 0.25, 0.5, 1.0}) out.push_back(RotorState{alpha, 2.0 * kPi * turns, 0.0});
  return out;
}

void RegionMapSpec::validate() const {
  damping.validate("damping");
  torque.validate("torque");
  if (!(nv_ratio > 0.0) || !std::isfinite(nv_ratio)) throw ConfigError("nv_ratio", "must be > 0");
  if (!(duty > 0.0 && duty < 1.0)) throw ConfigError("duty", "must lie in (0, 1)");
  if (ensemble.empty()) throw ConfigError("ensemble", "needs at least one initial state");
  settings.validate();
}

namespace {

LimitCycleReport classify_or_unresolved(const DimensionlessCoefficients& scaled, double duty,
                                        const RotorState& initial, const ClassifySettings& settings) {
  try {
    return classify_scaled(scaled, duty, initial, settings);
  } catch (const SimulationError&) {
    LimitCycleReport r;
    r.drive_frequency = 1.0;
    r.residual = INFINITY;
    return r;
  }
}

std::optional<double> analytic_or_none(const DimensionlessCoefficients& scaled, double duty) {
  if (duty != 0.5) return std::nullopt;
  return phase_lag_analytic(scaled, duty);
}

}  // namespace

RegionMap map_region(const RegionMapSpec& spec) {
  spec.validate();
  RegionMap map;
  map.spec = spec;
  map.damping_axis = spec.damping.values();
  map.torque_axis = spec.torque.values();
  const std::size_t nd = map.damping_axis.size();
  const std::size_t nt = map.torque_axis.size();
  const std::size_t ne = spec.ensemble.size();

  map.cells.resize(nd * nt);
  for (std::size_t it = 0; it < nt; ++it) {
    for (std::size_t id = 0; id < nd; ++id) {
      auto& c = map.cells[it * nd + id];
      c.damping = map.damping_axis[id];
      c.torque = map.torque_axis[it];
      c.outcomes.resize(ne);
    }
  }
  const double lo = spec.torque.min;
  const double hi = spec.torque.count > 1 ? spec.torque.max : spec.torque.min;
  for (double ratio : {0.5, 0.25}) {
    for (double g : map.damping_axis) {
      const double n = coincidence_torque(g, ratio);
      if (n < lo || n > hi || n <= 0.0) continue;
      CoincidencePoint pt;
      pt.ratio = ratio;
      pt.damping = g;
      pt.torque = n;
      pt.outcomes.resize(ne);
      map.coincidence.push_back(pt);
    }
  }

  auto scaled_of = [&](double g, double n) { return DimensionlessCoefficients{g, n, n / spec.nv_ratio}; };
  for (auto& c : map.cells) c.analytic_phase = analytic_or_none(scaled_of(c.damping, c.torque), spec.duty);
  for (auto& c : map.coincidence) c.analytic_phase = analytic_or_none(scaled_of(c.damping, c.torque), spec.duty);

  const std::size_t n_cell_jobs = map.cells.size() * ne;
  const std::size_t n_jobs = n_cell_jobs + map.coincidence.size() * ne;
  parallel_for(n_jobs, spec.jobs, [&](std::size_t k) {
    const std::size_t member = k % ne;
    if (k < n_cell_jobs) {
      auto& c = map.cells[k / ne];
      c.outcomes[member] =
          classify_or_unresolved(scaled_of(c.damping, c.torque), spec.duty, spec.ensemble[member], spec.settings);
    } else {
      auto& c = map.coincidence[(k - n_cell_jobs) / ne];
      c.outcomes[member] =
          classify_or_unresolved(scaled_of(c.damping, c.torque), spec.duty, spec.ensemble[member], spec.settings);
    }
  });
  return map;
}

// ---------------------------------------------------------------------------

void ParameterPath::validate() const {
  if (waypoints.empty()) throw ConfigError("path.waypoints", "needs at least one waypoint");
  if (points_per_segment < 1) throw ConfigError("path.points_per_segment", "must be >= 1");
  if (ramp_periods < 0) throw ConfigError("path.ramp_periods", "must be >= 0");
  if (dwell_periods.empty() || (dwell_periods.size() != 1 && dwell_periods.size() != segments()))
    throw ConfigError("path.dwell_periods", "give one value or one per segment");
  for (long d : dwell_periods)
    if (d < 1) throw ConfigError("path.dwell_periods", "dwell must be >= 1 period");
  if (!(duty > 0.0 && duty < 1.0)) throw ConfigError("path.duty", "must lie in (0, 1)");
  for (const auto& w : waypoints) {
    if (!std::isfinite(w.x) || !std::isfinite(w.y) || w.x < 0.0 || w.y < 0.0)
      throw ConfigError("path.waypoints", "coordinates must be finite and >= 0");
    if (space == PathSpace::physical && !(w.y > 0.0))
      throw ConfigError("path.waypoints", "drive frequency must be > 0");
  }
  if (space == PathSpace::dimensionless && !(nv_ratio > 0.0)) throw ConfigError("path.nv_ratio", "must be > 0");
  if (space == PathSpace::physical) {
    rod.validate();
    laser.validate();
    factors.validate();
  }
}

long ParameterPath::dwell_for_segment(std::size_t segment) const {
  return dwell_periods.size() == 1 ? dwell_periods.front() : dwell_periods.at(segment);
}

DimensionlessCoefficients ParameterPath::scaled_at(const PathPoint& point) const {
  if (space == PathSpace::dimensionless) return {point.x, point.y, point.y / nv_ratio};
  GasEnvironment g = gas;
  g.pressure = point.x;
  const Coefficients c = compute_coefficients(rod, g, laser, factors);
  return dimensionless(c, DriveConfig{point.y, duty});
}

double ParameterPath::frequency_at(const PathPoint& point) const {
  return space == PathSpace::physical ? point.y : 1.0;
}

std::vector<std::pair<std::size_t, PathPoint>> dwell_points(const ParameterPath& path) {
  std::vector<std::pair<std::size_t, PathPoint>> out;
  out.emplace_back(0, path.waypoints.front());
  const std::size_t segs = path.segments();
  for (std::size_t s = 0; s < segs; ++s) {
    const PathPoint a = path.waypoints[std::min(s, path.waypoints.size() - 1)];
    const PathPoint b = path.waypoints[std::min(s + 1, path.waypoints.size() - 1)];
    for (int k = 1; k <= path.points_per_segment; ++k) {
      const double u = static_cast<double>(k) / path.points_per_segment;
      out.emplace_back(s, PathPoint{a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u});
    }
  }
  return out;
}

RotorState analytic_cycle_start(const DimensionlessCoefficients& scaled) {
  const auto phi = phase_lag_analytic(scaled, 0.5);
  if (!phi) return RotorState{};
  return RotorState{(kPi - *phi) / 2.0, kPi, 0.0};
}

std::vector<PathSample> sweep_path(const ParameterPath& path, const RotorState& initial,
                                   const ClassifySettings& settings) {
  path.validate();
  settings.validate();
  const auto points = dwell_points(path);
  const DriveConfig unit_drive{1.0, path.duty};

  std::vector<PathSample> out;
  RotorState s = initial;
  PathPoint cur = points.front().second;
  double f_prev = path.frequency_at(cur);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& [segment, target] = points[i];
    if (i > 0) {
      for (long j = 1; j <= path.ramp_periods; ++j) {
        const double u = static_cast<double>(j) / path.ramp_periods;
        const PathPoint pt{cur.x + (target.x - cur.x) * u, cur.y + (target.y - cur.y) * u};
        const double f = path.frequency_at(pt);
        s.omega *= f_prev / f;  // ω in rad per period follows the period length
        f_prev = f;
        s = Propagator(unit_coefficients(path.scaled_at(pt)), unit_drive, settings.integrator).run(s, 1);
      }
    }
    cur = target;
    const double f = path.frequency_at(cur);
    s.omega *= f_prev / f;
    f_prev = f;

    PathSample sample;
    sample.index = i;
    sample.segment = segment;
    sample.point = cur;
    sample.scaled = path.scaled_at(cur);
    sample.threshold_ratio =
        sample.scaled.damping > 0.0 ? sample.scaled.torque / (4.0 * kPi * sample.scaled.damping) : 0.0;
    ClassifySettings cs = settings;
    cs.integrator.transient_periods = static_cast<int>(path.dwell_for_segment(segment));
    sample.report = classify_scaled(sample.scaled, path.duty, s, cs, &s);
    sample.report.f_r *= f;
    sample.report.drive_frequency = f;
    out.push_back(sample);
  }
  return out;
}

}  // namespace rotor
