#pragma once

// The locked rotor as a pressure and torque sensor: the phase-lag formula read backwards.

#include <optional>
#include <vector>

#include "rotor/limit_cycle.hpp"
#include "rotor/physics.hpp"
#include "rotor/signal.hpp"

namespace rotor {

/// Everything that fixes the phase-lag formula except possibly the pressure.
struct OperatingPoint {
  Nanorod rod;
  GasEnvironment gas;
  LaserField laser;
  DriveConfig drive;
  GeometricFactors factors;

  void validate() const;
  Coefficients coefficients() const { return compute_coefficients(rod, gas, laser, factors); }
  OperatingPoint at_pressure(double pascal) const {
    OperatingPoint op = *this;
    op.gas.pressure = pascal;
    return op;
  }
  /// dΓ/dp_g (Γ is linear in pressure).
  double damping_per_pascal() const;
};

/// the phase-lag formula at the operating point's pressure; none when not lockable.
std::optional<double> phase_from_pressure(const OperatingPoint& op);

/// Γ = [N − (2V/π)cos φ]/(2πf_d I), then p_g = Γ/(dΓ/dp_g). The operating
/// point's own pressure is ignored. Throws std::domain_error for φ outside (0, π)
/// or a negative result.
double pressure_from_phase(double phi, const OperatingPoint& op);

/// dφ/dp_g = (dΓ/dp_g)·π²f_d I/(V sin φ) at the operating point's pressure.
double phase_pressure_slope(const OperatingPoint& op);

struct CalibrationPoint {
  double pressure = 0.0;  // Pa
  double phase = 0.0;     // rad
  std::optional<double> sigma;
  bool locked = true;
};

struct PressureCalibration {
  double slope = 0.0;      // rad/Pa
  double intercept = 0.0;  // rad
  std::vector<double> residuals;
  double max_residual = 0.0;
  double phase_span = 0.0;
  double pressure_min = 0.0;
  double pressure_max = 0.0;
  bool nonlinear = false;  // max |residual| >= 1% of the phase span

  double pressure(double phi) const { return (phi - intercept) / slope; }
};

/// Straight-line least squares of φ against p_g (weighted when every point has σ).
PressureCalibration calibrate_pressure(const std::vector<CalibrationPoint>& points);

/// δp/p = δφ/(|slope|·p) at `pressure`.
double pressure_resolution(const PressureCalibration& cal, double phase_noise_rms, double pressure);

/// Quasi-static phase fluctuation from relative laser power noise ε: N and V
/// both scale with P, so δφ = (π/2)(2πf_d IΓ/V)·ε/sin φ.
double power_noise_phase(const OperatingPoint& op, double relative_power_noise);

/// Detector → mix-down → lock-in, as in the experiment.
struct ChainSettings {
  double intermediate_frequency = 190.0;  // Hz, f_d − f_LO
  double output_rate = 2000.0;            // S/s after mix-down
  double time_constant = 0.05;            // s
  double record_seconds = 0.5;
  double detector_angle = 0.25;           // rad
  int steps_per_half_period = 64;
  int samples_per_period = 16;
  ClassifySettings lock_check;  // run first to confirm the lock; its integrator is overridden

  void validate() const;
  long record_periods(double drive_frequency) const;
};

struct PhaseMeasurement {
  double phase = 0.0;        // φ recovered from the lock-in output, rad
  double phase_rms = 0.0;    // scatter of the lock-in phase over the averaging window
  double simulated_phase = 0.0;  // φ from the trajectory itself
  std::size_t averaged_samples = 0;
  LimitCycleReport report;
};

/// Starts on the analytic cycle, confirms the lock, records `record_seconds`
/// and runs the chain. The lock-in phase is averaged after 5τ plus one boxcar.
/// Throws std::domain_error when the rotor does not lock 1:2.
PhaseMeasurement measure_phase(const OperatingPoint& op, const ChainSettings& chain, const NoiseSpec& noise);

struct ChainResolution {
  double pressure = 0.0;
  double relative_power_noise = 0.0;
  PhaseMeasurement low, high;  // laser power P(1 − ε) and P(1 + ε)
  double pressure_low = 0.0;   // the phase-lag formula inversions at the nominal power
  double pressure_high = 0.0;
  double relative = 0.0;       // |p₊ − p₋| / 2p
};

/// Pressure error from a quasi-static ±ε laser power excursion, measured
/// through the chain. The noise spec's seed is used for both runs.
ChainResolution chain_pressure_resolution(const OperatingPoint& op, const ChainSettings& chain,
                                          const NoiseSpec& noise, double relative_power_noise);

struct ExternalTorqueResult {
  LimitCycleReport report;
  std::optional<double> predicted_phase;  // the phase-lag formula with N → N + 2N_ext
};

/// Classify with a constant torque N_ext added at all times. A constant torque
/// acts over the whole period while N acts for half of it, hence the 2N_ext.
ExternalTorqueResult external_torque_dynamics(const Coefficients& coeffs, const DriveConfig& drive,
                                              double external_torque, const RotorState& initial,
                                              const ClassifySettings& settings = {});

struct TorqueSensitivityReport {
  double phase = 0.0;        // φ at the operating point
  double delta_phase = 0.0;  // δφ
  double delta_torque = 0.0;           // δN = (2V/π) sin φ δφ
  double delta_external_torque = 0.0;  // δN_ext = δN/2
  double bandwidth = 0.0;              // Hz
  Coefficients coeffs;
  DriveConfig drive;
};

/// Throws std::domain_error when the point is not lockable or φ sits at 0 or π.
TorqueSensitivityReport torque_sensitivity(const Coefficients& coeffs, const DriveConfig& drive,
                                           double delta_phase, double bandwidth);

}  // namespace rotor
