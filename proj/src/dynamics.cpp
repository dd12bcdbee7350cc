#include "rotor/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace rotor {

void IntegratorSettings::validate() const {
  if (steps_per_half_period < kMinStepsPerHalfPeriod)
    throw std::invalid_argument("integrator.steps_per_half_period must be >= 16");
  if (transient_periods < 0) throw std::invalid_argument("integrator.transient_periods must be >= 0");
  if (output_stride < 1) throw std::invalid_argument("integrator.output_stride must be >= 1");
}

int IntegratorSettings::steps_circular(double duty) const {
  return std::max(1, static_cast<int>(std::lround(2.0 * steps_per_half_period * duty)));
}

int IntegratorSettings::steps_linear(double duty) const {
  return std::max(1, static_cast<int>(std::lround(2.0 * steps_per_half_period * (1.0 - duty))));
}

int drive_waveform(double t, const DriveConfig& drive) {
  const double period = drive.period();
  double phase = std::fmod(t, period);
  if (phase < 0.0) phase += period;
  return phase < drive.duty * period ? 1 : 0;
}

RotorState step_segment(const RotorState& state, const Coefficients& coeffs,
                        Polarization polarization, double dt, int substeps,
                        double external_torque) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const bool circular = polarization == Polarization::circular;
  const double drive_acc = (circular ? coeffs.torque : 0.0) / coeffs.inertia +
                           external_torque / coeffs.inertia;
  const double pot = circular ? 0.0 : coeffs.potential / coeffs.inertia;
  const double h = dt / substeps;
  double a = state.alpha;
  double w = state.omega;
  for (int i = 0; i < substeps; ++i) detail::rk4_step(a, w, h, coeffs.damping, drive_acc, pot);
  return RotorState{a, w, state.time + dt};
}

RotorState step_segment(const RotorState& state, const Coefficients& coeffs,
                        const DriveConfig& drive, double dt, int substeps) {
  drive.validate();
  const double period = drive.period();
  const double switch_offset = drive.duty * period;
  double phase = std::fmod(state.time, period);
  if (phase < 0.0) phase += period;
  const bool circular = phase < switch_offset;
  const double boundary = circular ? switch_offset : period;
  // Relative slack so that an interval ending exactly on the switch is accepted.
  if (phase + dt > boundary * (1.0 + 1e-12)) {
    throw std::invalid_argument("step_segment interval crosses a polarization switch");
  }
  return step_segment(state, coeffs, circular ? Polarization::circular : Polarization::linear, dt,
                      substeps);
}

Propagator::Propagator(const Coefficients& coeffs, const DriveConfig& drive,
                       const IntegratorSettings& settings, double external_torque)
    : coeffs_(coeffs), drive_(drive) {
  coeffs.validate();
  drive.validate();
  settings.validate();
  if (!std::isfinite(external_torque)) throw std::invalid_argument("external torque must be finite");
  damping_ = coeffs.damping;
  torque_accel_ = coeffs.torque / coeffs.inertia;
  potential_accel_ = coeffs.potential / coeffs.inertia;
  bias_accel_ = external_torque / coeffs.inertia;
  n_circ_ = settings.steps_circular(drive.duty);
  n_lin_ = settings.steps_linear(drive.duty);
}

Trajectory simulate(const RotorState& initial, const Coefficients& coeffs, const DriveConfig& drive,
                    const IntegratorSettings& settings, long n_periods, double external_torque) {
  if (n_periods < 1) throw std::invalid_argument("n_periods must be >= 1");
  if (!std::isfinite(initial.alpha) || !std::isfinite(initial.omega) || !std::isfinite(initial.time))
    throw std::invalid_argument("initial state must be finite");
  Propagator prop(coeffs, drive, settings, external_torque);
  const int per_period = prop.steps_per_period();
  const int stride = settings.output_stride;
  if (per_period % stride != 0) {
    throw std::invalid_argument("integrator.output_stride must divide the steps per drive period (" +
                                std::to_string(per_period) + ")");
  }
  Trajectory traj;
  traj.periods = n_periods;
  traj.samples_per_period = per_period / stride;
  traj.coeffs = coeffs;
  traj.drive = drive;
  traj.settings = settings;
  traj.external_torque = external_torque;
  traj.states.reserve(static_cast<std::size_t>(n_periods) * traj.samples_per_period + 1);
  prop.run(initial, n_periods, [&](const RotorState& s, std::int64_t step) {
    if (step % stride == 0) traj.states.push_back(s);
  });
  return traj;
}

double mean_rotation_frequency(const Trajectory& traj, long window_periods) {
  if (window_periods < 1) throw std::invalid_argument("window must be >= 1 period");
  if (window_periods > traj.periods)
    throw std::invalid_argument("window longer than the trajectory");
  const std::size_t last = traj.states.size() - 1;
  const std::size_t back = static_cast<std::size_t>(window_periods) * traj.samples_per_period;
  const RotorState& end = traj.states[last];
  const RotorState& begin = traj.states[last - back];
  const double window = static_cast<double>(window_periods) * traj.drive.period();
  return (end.alpha - begin.alpha) / (2.0 * constants::kPi * window);
}

std::vector<StroboscopicSample> stroboscopic_map(const Trajectory& traj, int m) {
  if (m < 1) throw std::invalid_argument("stroboscopic spacing m must be >= 1");
  std::vector<StroboscopicSample> out;
  const std::size_t step = static_cast<std::size_t>(m) * traj.samples_per_period;
  for (std::size_t i = 0; i < traj.states.size(); i += step) {
    out.push_back({wrap_half_turn(traj.states[i].alpha), traj.states[i].omega});
  }
  return out;
}

}  // namespace rotor
