#pragma once

// Classification of the asymptotic motion, phase lag, region maps and
// adiabatic parameter paths.
//
// All classification runs in scaled units (time in drive periods), so two SI
// parameter sets with the same (γ̃, ñ, ṽ, duty) give the same report.

#include <optional>
#include <string>
#include <vector>

#include "rotor/dynamics.hpp"
#include "rotor/physics.hpp"

namespace rotor {

enum class CycleKind { threshold, lock, unresolved };

struct LimitCycleReport {
  CycleKind kind = CycleKind::unresolved;
  int p = 0;  // rotations per q drive periods (locks only)
  int q = 0;
  double f_r = 0.0;                 // Hz
  double drive_frequency = 0.0;     // Hz
  std::optional<double> phase_lag;  // 1:2 locks only
  double residual = 0.0;            // stroboscopic residual at the best q
  bool trapped = false;             // converged to a libration (no net rotation)
  long transient_periods = 0;       // periods discarded before the analysis window

  bool is_lock(int pp, int qq) const { return kind == CycleKind::lock && p == pp && q == qq; }
  /// "threshold", "unresolved", "lock_1_2", "lock_3_8", ...
  std::string label() const;
};

struct ClassifySettings {
  IntegratorSettings integrator;  // transient_periods is the initial discard
  long analysis_periods = 1000;
  int residual_samples = 100;
  int q_max = 8;
  int max_doublings = 4;
  double lock_tolerance = 1e-6;
  double threshold_tolerance = 0.05;
  double near_lock_window = 1e-4;  // |f_r/f_d - m/2q| that triggers a longer transient
  // The initial discard is at least this many 1/γ̃ relaxation times. Near the
  // threshold a fixed discard is too short at low damping.
  double min_relaxation_times = 10.0;

  void validate() const;
};

/// Simulates past the transient and classifies the motion.
LimitCycleReport classify(const Coefficients& coeffs, const DriveConfig& drive,
                          const RotorState& initial, const ClassifySettings& settings = {});

/// Same, in scaled units (f_d = 1). Also returns the state at the end of the
/// analysis window so a caller can carry on integrating. `external_torque` is
/// N_ext/(I f_d²), applied at all times.
LimitCycleReport classify_scaled(const DimensionlessCoefficients& scaled, double duty,
                                 const RotorState& initial, const ClassifySettings& settings,
                                 RotorState* final_state = nullptr, double external_torque = 0.0);

/// N/(4πIΓ). Throws std::domain_error for Γ <= 0.
double threshold_frequency(const Coefficients& coeffs);

/// arccos[(π/2V)(N − 2πf_d IΓ)] when the argument lies in [−1, 1].
/// The period average behind it assumes equal halves: duty != 1/2 throws std::domain_error.
std::optional<double> phase_lag_analytic(const Coefficients& coeffs, const DriveConfig& drive);
std::optional<double> phase_lag_analytic(const DimensionlessCoefficients& scaled, double duty = 0.5);

/// Fits α(t) = α₀ + πf_d t over the whole trajectory and returns π − 2α₀ folded into
/// [0, π]. Throws std::domain_error if the fitted slope is not πf_d within
/// `slope_tolerance` (relative).
double phase_lag_measured(const Trajectory& traj, const DriveConfig& drive,
                          double slope_tolerance = 1e-6);

// ---------------------------------------------------------------------------
// Region map

struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  int count = 0;

  void validate(const char* name) const;
  std::vector<double> values() const;
};

/// Initial states in scaled units (α, ω in rad per drive period).
std::vector<RotorState> default_ensemble();

struct RegionMapSpec {
  GridAxis damping;  // γ̃ = Γ/f_d
  GridAxis torque;   // ñ = N/(I f_d²)
  double nv_ratio = 0.18607752019379456;
  double duty = 0.5;
  std::vector<RotorState> ensemble = default_ensemble();
  ClassifySettings settings;
  unsigned jobs = 0;  // 0: hardware concurrency

  void validate() const;
};

struct RegionCell {
  double damping = 0.0;
  double torque = 0.0;
  std::optional<double> analytic_phase;
  std::vector<LimitCycleReport> outcomes;  // one per ensemble member
};

/// A point on a line where the threshold frequency equals ratio·f_d.
struct CoincidencePoint {
  double ratio = 0.0;  // 1/2 or 1/4
  double damping = 0.0;
  double torque = 0.0;
  std::optional<double> analytic_phase;
  std::vector<LimitCycleReport> outcomes;
};

struct RegionMap {
  RegionMapSpec spec;
  std::vector<double> damping_axis;
  std::vector<double> torque_axis;
  std::vector<RegionCell> cells;  // torque-major: cells[i_torque * n_damping + i_damping]
  std::vector<CoincidencePoint> coincidence;

  const RegionCell& at(std::size_t i_damping, std::size_t i_torque) const {
    return cells[i_torque * damping_axis.size() + i_damping];
  }
};

/// ñ on the line where N/(4πIΓ) = ratio·f_d.
inline double coincidence_torque(double damping, double ratio) {
  return 4.0 * constants::kPi * damping * ratio;
}

RegionMap map_region(const RegionMapSpec& spec);

// ---------------------------------------------------------------------------
// Parameter paths

enum class PathSpace { dimensionless, physical };

struct PathPoint {
  double x = 0.0;  // γ̃, or gas pressure in Pa
  double y = 0.0;  // ñ, or drive frequency in Hz
};

struct ParameterPath {
  PathSpace space = PathSpace::dimensionless;
  std::vector<PathPoint> waypoints;
  int points_per_segment = 9;       // dwell points per segment, the segment end included
  long ramp_periods = 200;          // periods spent moving between dwell points
  std::vector<long> dwell_periods{2000};  // one value, or one per segment
  double duty = 0.5;

  // dimensionless paths: ṽ = ñ / nv_ratio
  double nv_ratio = 0.18607752019379456;
  // physical paths: everything except the pressure and drive frequency
  Nanorod rod;
  GasEnvironment gas;
  LaserField laser;
  GeometricFactors factors;

  void validate() const;
  std::size_t segments() const { return waypoints.size() < 2 ? 1 : waypoints.size() - 1; }
  long dwell_for_segment(std::size_t segment) const;
  /// Scaled coefficients at a point of this path.
  DimensionlessCoefficients scaled_at(const PathPoint& point) const;
  /// Drive frequency at a point (1 for dimensionless paths).
  double frequency_at(const PathPoint& point) const;
};

struct PathSample {
  std::size_t index = 0;
  std::size_t segment = 0;  // segment the dwell point ends; 0 for the first point
  PathPoint point;
  DimensionlessCoefficients scaled;
  double threshold_ratio = 0.0;  // N/(4πIΓ f_d), or 0 when Γ = 0
  LimitCycleReport report;
};

/// Dwell points visited by sweep_path, in order.
std::vector<std::pair<std::size_t, PathPoint>> dwell_points(const ParameterPath& path);

/// Integrates continuously along the path. `initial` is in scaled units at the
/// first waypoint. Parameters change once per drive period.
std::vector<PathSample> sweep_path(const ParameterPath& path, const RotorState& initial,
                                   const ClassifySettings& settings = {});

/// Scaled state on the analytic 1:2 cycle, or at rest when the point is not lockable.
RotorState analytic_cycle_start(const DimensionlessCoefficients& scaled);

}  // namespace rotor
