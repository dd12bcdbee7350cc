#include "rotor/sensing.hpp"

#include <cmath>
#include <stdexcept>

#include "rotor/errors.hpp"

namespace rotor {

using constants::kPi;

void OperatingPoint::validate() const {
  rod.validate();
  gas.validate();
  laser.validate();
  drive.validate();
  factors.validate();
}

double OperatingPoint::damping_per_pascal() const {
  GasEnvironment unit = gas;
  unit.pressure = 1.0;
  return damping_rate(rod, unit);
}

std::optional<double> phase_from_pressure(const OperatingPoint& op) {
  op.validate();
  return phase_lag_analytic(op.coefficients(), op.drive);
}

double pressure_from_phase(double phi, const OperatingPoint& op) {
  op.validate();
  if (!(phi > 0.0 && phi < kPi)) throw std::domain_error("phase must lie in (0, π)");
  const Coefficients c = op.coefficients();
  const double gamma =
      (c.torque - 2.0 * c.potential / kPi * std::cos(phi)) / (2.0 * kPi * op.drive.frequency * c.inertia);
  const double p = gamma / op.damping_per_pascal();
  if (!(p >= 0.0)) throw std::domain_error("phase implies a negative pressure (outside the model)");
  return p;
}

double phase_pressure_slope(const OperatingPoint& op) {
  const auto phi = phase_from_pressure(op);
  if (!phi) throw std::domain_error("operating point is not lockable");
  const Coefficients c = op.coefficients();
  return op.damping_per_pascal() * kPi * kPi * op.drive.frequency * c.inertia / (c.potential * std::sin(*phi));
}

PressureCalibration calibrate_pressure(const std::vector<CalibrationPoint>& points) {
  if (points.size() < 3) throw std::invalid_argument("calibration needs at least 3 points");
  bool weighted = true;
  for (const auto& p : points) {
    if (!p.locked) throw std::invalid_argument("calibration point at " + std::to_string(p.pressure) + " Pa is not locked");
    if (!std::isfinite(p.pressure) || !std::isfinite(p.phase)) throw std::invalid_argument("non-finite calibration point");
    if (!p.sigma || !(*p.sigma > 0.0)) weighted = false;
  }
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    const double w = weighted ? 1.0 / (*p.sigma * *p.sigma) : 1.0;
    sw += w;
    sx += w * p.pressure;
    sy += w * p.phase;
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  for (const auto& p : points) {
    const double w = weighted ? 1.0 / (*p.sigma * *p.sigma) : 1.0;
    sxx += w * (p.pressure - mx) * (p.pressure - mx);
    sxy += w * (p.pressure - mx) * (p.phase - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("calibration pressures are all identical");

  PressureCalibration cal;
  cal.slope = sxy / sxx;
  cal.intercept = my - cal.slope * mx;
  if (!(cal.slope != 0.0) || !std::isfinite(cal.slope)) throw std::invalid_argument("calibration slope is zero");
  double lo = INFINITY, hi = -INFINITY;
  cal.pressure_min = INFINITY;
  cal.pressure_max = -INFINITY;
  for (const auto& p : points) {
    const double r = p.phase - (cal.intercept + cal.slope * p.pressure);
    cal.residuals.push_back(r);
    cal.max_residual = std::max(cal.max_residual, std::abs(r));
    lo = std::min(lo, p.phase);
    hi = std::max(hi, p.phase);
    cal.pressure_min = std::min(cal.pressure_min, p.pressure);
    cal.pressure_max = std::max(cal.pressure_max, p.pressure);
  }
  cal.phase_span = hi - lo;
  cal.nonlinear = cal.max_residual >= 0.01 * cal.phase_span;
  return cal;
}

double pressure_resolution(const PressureCalibration& cal, double phase_noise_rms, double pressure) {
  if (!(pressure > 0.0)) throw std::invalid_argument("pressure must be > 0");
  return phase_noise_rms / (std::abs(cal.slope) * pressure);
}

double power_noise_phase(const OperatingPoint& op, double relative_power_noise) {
  const auto phi = phase_from_pressure(op);
  if (!phi) throw std::domain_error("operating point is not lockable");
  const Coefficients c = op.coefficients();
  const double balance = 2.0 * kPi * op.drive.frequency * c.inertia * c.damping;
  return 0.5 * kPi * balance / c.potential * relative_power_noise / std::sin(*phi);
}

void ChainSettings::validate() const {
  if (!(intermediate_frequency > 0.0)) throw ConfigError("chain.intermediate_frequency", "must be > 0");
  if (!(output_rate > 2.0 * intermediate_frequency))
    throw ConfigError("chain.output_rate", "must exceed twice the intermediate frequency");
  if (!(time_constant >= 2.0 / intermediate_frequency))
    throw ConfigError("chain.time_constant", "must span at least two reference cycles");
  if (!(record_seconds > 0.0)) throw ConfigError("chain.record_seconds", "must be > 0");
  if (!std::isfinite(detector_angle)) throw ConfigError("chain.detector_angle", "must be finite");
  if (samples_per_period < 3) throw ConfigError("chain.samples_per_period", "must be >= 3");
  if (steps_per_half_period < IntegratorSettings::kMinStepsPerHalfPeriod)
    throw ConfigError("chain.steps_per_half_period", "below the integrator minimum");
  if ((2 * steps_per_half_period) % samples_per_period != 0)
    throw ConfigError("chain.samples_per_period", "must divide the integrator steps per period");
  lock_check.validate();
}

long ChainSettings::record_periods(double drive_frequency) const {
  return std::lround(std::ceil(record_seconds * drive_frequency));
}

PhaseMeasurement measure_phase(const OperatingPoint& op, const ChainSettings& chain, const NoiseSpec& noise) {
  op.validate();
  chain.validate();
  noise.validate();
  const Coefficients c = op.coefficients();
  const DriveConfig& d = op.drive;
  const double f = d.frequency;

  ClassifySettings check = chain.lock_check;
  check.integrator.steps_per_half_period = chain.steps_per_half_period;
  check.integrator.output_stride = 2 * chain.steps_per_half_period / chain.samples_per_period;
  const DimensionlessCoefficients scaled = dimensionless(c, d);
  RotorState end;
  PhaseMeasurement m;
  m.report = classify_scaled(scaled, d.duty, analytic_cycle_start(scaled), check, &end);
  m.report.f_r *= f;
  m.report.drive_frequency = f;
  if (!m.report.is_lock(1, 2))
    throw std::domain_error("operating point does not lock 1:2 (" + m.report.label() + ")");

  const RotorState start{end.alpha, end.omega * f, end.time / f};
  const Trajectory traj = simulate(start, c, d, check.integrator, chain.record_periods(f));
  m.simulated_phase = phase_lag_measured(traj, d);

  const SignalTrace det = synthesize_detector(traj, chain.detector_angle, noise);
  const SignalTrace mixed = mix_down(det, f - chain.intermediate_frequency, chain.output_rate);
  const LockinOutput lock = lockin_demodulate(mixed, chain.intermediate_frequency, chain.time_constant);

  const double settle = start.time + 5.0 * chain.time_constant +
                        static_cast<double>(lock.boxcar_samples) / chain.output_rate;
  double sx = 0.0, sy = 0.0;
  std::vector<double> used;
  for (std::size_t i = 0; i < lock.time.size(); ++i) {
    if (lock.time[i] < settle) continue;
    sx += std::cos(lock.phase[i]);
    sy += std::sin(lock.phase[i]);
    used.push_back(lock.phase[i]);
  }
  if (used.empty()) throw std::invalid_argument("record too short for the lock-in to settle");
  const double theta = std::atan2(sy, sx);
  double ss = 0.0;
  for (double p : used) {
    const double dp = std::remainder(p - theta, 2.0 * kPi);
    ss += dp * dp;
  }
  m.averaged_samples = used.size();
  m.phase_rms = std::sqrt(ss / static_cast<double>(used.size()));
  // tone phase θ = 2α₀ − 2α_det and φ = π − 2α₀
  m.phase = std::abs(std::remainder(kPi - theta - 2.0 * chain.detector_angle, 2.0 * kPi));
  return m;
}

ChainResolution chain_pressure_resolution(const OperatingPoint& op, const ChainSettings& chain,
                                          const NoiseSpec& noise, double relative_power_noise) {
  if (!(relative_power_noise > 0.0 && relative_power_noise < 1.0))
    throw std::invalid_argument("relative power noise must lie in (0, 1)");
  ChainResolution r;
  r.pressure = op.gas.pressure;
  r.relative_power_noise = relative_power_noise;
  OperatingPoint low = op, high = op;
  low.laser.power *= 1.0 - relative_power_noise;
  high.laser.power *= 1.0 + relative_power_noise;
  r.low = measure_phase(low, chain, noise);
  r.high = measure_phase(high, chain, noise);
  r.pressure_low = pressure_from_phase(r.low.phase, op);
  r.pressure_high = pressure_from_phase(r.high.phase, op);
  r.relative = std::abs(r.pressure_high - r.pressure_low) / (2.0 * op.gas.pressure);
  return r;
}

ExternalTorqueResult external_torque_dynamics(const Coefficients& coeffs, const DriveConfig& drive,
                                              double external_torque, const RotorState& initial,
                                              const ClassifySettings& settings) {
  drive.validate();
  const double f = drive.frequency;
  const DimensionlessCoefficients scaled = dimensionless(coeffs, drive);
  const RotorState start{initial.alpha, initial.omega / f, initial.time * f};
  ExternalTorqueResult out;
  out.report = classify_scaled(scaled, drive.duty, start, settings, nullptr,
                               external_torque / (coeffs.inertia * f * f));
  out.report.f_r *= f;
  out.report.drive_frequency = f;
  Coefficients shifted = coeffs;
  shifted.torque += 2.0 * external_torque;
  out.predicted_phase = phase_lag_analytic(shifted, drive);
  return out;
}

TorqueSensitivityReport torque_sensitivity(const Coefficients& coeffs, const DriveConfig& drive,
                                           double delta_phase, double bandwidth) {
  if (!(delta_phase >= 0.0)) throw std::invalid_argument("δφ must be >= 0");
  const auto phi = phase_lag_analytic(coeffs, drive);
  if (!phi) throw std::domain_error("operating point is not lockable");
  const double s = std::sin(*phi);
  if (!(s > 1e-9)) throw std::domain_error("phase at the edge of the lockable range (sensitivity diverges)");
  TorqueSensitivityReport r;
  r.phase = *phi;
  r.delta_phase = delta_phase;
  r.delta_torque = 2.0 * coeffs.potential / kPi * s * delta_phase;
  r.delta_external_torque = 0.5 * r.delta_torque;
  r.bandwidth = bandwidth;
  r.coeffs = coeffs;
  r.drive = drive;
  return r;
}

}  // namespace rotor
