#pragma once

// Piecewise-smooth integration of the square-wave driven rotor.
//
// Within each constant-polarization interval the equation of motion is smooth
// and is advanced with classical fixed-step RK4. Intervals are split exactly at
// the polarization switches so no step ever straddles a discontinuity.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rotor/physics.hpp"

namespace rotor {

enum class Polarization { circular, linear };

struct RotorState {
  double alpha = 0.0;  // rad, unwrapped
  double omega = 0.0;  // rad/s
  double time = 0.0;   // s
};

struct IntegratorSettings {
  int steps_per_half_period = 200;
  int transient_periods = 2000;
  int output_stride = 50;

  static constexpr int kMinStepsPerHalfPeriod = 16;

  void validate() const;
  int steps_circular(double duty) const;
  int steps_linear(double duty) const;
  int steps_per_period(double duty) const { return steps_circular(duty) + steps_linear(duty); }
};

struct Trajectory {
  std::vector<RotorState> states;  // includes the initial state
  long periods = 0;
  int samples_per_period = 0;      // recorded states per drive period
  Coefficients coeffs;
  DriveConfig drive;
  IntegratorSettings settings;
  double external_torque = 0.0;

  double start_time() const { return states.front().time; }
  double end_time() const { return states.back().time; }
};

/// Raised when the state stops being finite. Carries the last finite state.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, RotorState last_finite)
      : std::runtime_error(what), last_finite_(last_finite) {}
  const RotorState& last_finite() const noexcept { return last_finite_; }

 private:
  RotorState last_finite_;
};

/// h(t): 1 while circularly polarized, 0 while linearly polarized.
int drive_waveform(double t, const DriveConfig& drive);

/// Advance `substeps` RK4 steps of size dt/substeps with fixed polarization.
/// `external_torque` adds a constant N_ext to the right-hand side at all times.
RotorState step_segment(const RotorState& state, const Coefficients& coeffs,
                        Polarization polarization, double dt, int substeps,
                        double external_torque = 0.0);

/// Same, but derives the polarization from the drive and rejects an interval
/// that crosses a polarization switch.
RotorState step_segment(const RotorState& state, const Coefficients& coeffs,
                        const DriveConfig& drive, double dt, int substeps);

/// Streams the equation of motion period by period. Construction is cheap, so
/// callers that change parameters between periods build a new one each time.
class Propagator {
 public:
  Propagator(const Coefficients& coeffs, const DriveConfig& drive,
             const IntegratorSettings& settings, double external_torque = 0.0);

  /// Integrate n_periods starting at `initial`. `observer(state, step)` is called
  /// for the initial state (step 0) and after every substep; `step` counts
  /// substeps from the start. Returns the final state.
  template <class Observer>
  RotorState run(const RotorState& initial, long n_periods, Observer&& observer) const;

  RotorState run(const RotorState& initial, long n_periods) const {
    return run(initial, n_periods, [](const RotorState&, std::int64_t) {});
  }

  const Coefficients& coeffs() const { return coeffs_; }
  const DriveConfig& drive() const { return drive_; }
  int steps_per_period() const { return n_circ_ + n_lin_; }

 private:
  template <bool Circular, class Observer>
  void advance(RotorState& s, double t_begin, double length, int n, std::int64_t& step,
               Observer& observer) const;

  Coefficients coeffs_;
  DriveConfig drive_;
  double damping_;
  double torque_accel_;
  double potential_accel_;
  double bias_accel_;
  int n_circ_;
  int n_lin_;
};

/// Integrate exactly n_periods drive periods and record every output_stride-th substep.
Trajectory simulate(const RotorState& initial, const Coefficients& coeffs, const DriveConfig& drive,
                    const IntegratorSettings& settings, long n_periods,
                    double external_torque = 0.0);

/// (α(t_end) - α(t_end - W)) / (2πW) with W = window_periods drive periods.
double mean_rotation_frequency(const Trajectory& traj, long window_periods);

struct StroboscopicSample {
  double angle;  // α mod π, in [0, π)
  double omega;  // rad/s
};

/// Samples taken every m drive periods, starting at the first recorded state.
std::vector<StroboscopicSample> stroboscopic_map(const Trajectory& traj, int m);

/// Wrap into [0, π).
inline double wrap_half_turn(double angle) {
  constexpr double pi = constants::kPi;
  double r = std::fmod(angle, pi);
  if (r < 0.0) r += pi;
  if (r >= pi) r -= pi;
  return r;
}

// ---------------------------------------------------------------------------

namespace detail {

/// One classical RK4 step of  α'' = -g α' + drive_acc - pot sin 2α.
inline void rk4_step(double& a, double& w, double h, double g, double drive_acc, double pot) {
  auto accel = [&](double aa, double ww) { return -g * ww + drive_acc - pot * std::sin(2.0 * aa); };
  const double half = 0.5 * h;
  const double k1a = w;
  const double k1w = accel(a, w);
  const double k2a = w + half * k1w;
  const double k2w = accel(a + half * k1a, k2a);
  const double k3a = w + half * k2w;
  const double k3w = accel(a + half * k2a, k3a);
  const double k4a = w + h * k3w;
  const double k4w = accel(a + h * k3a, k4a);
  a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
  w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
}

}  // namespace detail

template <bool Circular, class Observer>
void Propagator::advance(RotorState& s, double t_begin, double length, int n, std::int64_t& step,
                         Observer& observer) const {
  const double h = length / n;
  const double drive_acc = (Circular ? torque_accel_ : 0.0) + bias_accel_;
  const double pot = Circular ? 0.0 : potential_accel_;
  double a = s.alpha;
  double w = s.omega;
  for (int i = 1; i <= n; ++i) {
    const double a_prev = a;
    const double w_prev = w;
    detail::rk4_step(a, w, h, damping_, drive_acc, pot);
    if (!std::isfinite(a) || !std::isfinite(w)) {
      throw SimulationError("rotor state became non-finite",
                            RotorState{a_prev, w_prev, t_begin + (i - 1) * h});
    }
    ++step;
    s = RotorState{a, w, i == n ? t_begin + length : t_begin + i * h};
    observer(s, step);
  }
}

template <class Observer>
RotorState Propagator::run(const RotorState& initial, long n_periods, Observer&& observer) const {
  if (n_periods < 0) throw std::invalid_argument("n_periods must be >= 0");
  const double period = drive_.period();
  const double switch_offset = drive_.duty * period;

  // Locate the start within its drive period. Starts within a relative 1e-9 of a
  // period boundary snap to it so that aligned runs split identically.
  const double cycles = initial.time / period;
  double k0 = std::floor(cycles);
  double offset = initial.time - k0 * period;
  if (std::abs(cycles - std::round(cycles)) < 1e-9) {
    k0 = std::round(cycles);
    offset = 0.0;
  }

  RotorState s = initial;
  std::int64_t step = 0;
  observer(s, step);
  const double nominal_circ = switch_offset;
  const double nominal_lin = period - switch_offset;

  for (long p = 0; p <= n_periods; ++p) {
    const double base = (k0 + static_cast<double>(p)) * period;
    // Portion of this period to integrate: [lo, hi) in offset coordinates.
    const double lo = (p == 0) ? offset : 0.0;
    const double hi = (p == n_periods) ? offset : period;
    if (hi <= lo) continue;
    if (lo < switch_offset) {
      const double end = std::min(hi, switch_offset);
      const double len = end - lo;
      const int n = (lo == 0.0 && end == switch_offset)
                        ? n_circ_
                        : std::max(1, static_cast<int>(std::ceil(n_circ_ * len / nominal_circ - 1e-9)));
      advance<true>(s, base + lo, len, n, step, observer);
    }
    if (hi > switch_offset) {
      const double start = std::max(lo, switch_offset);
      const double len = hi - start;
      const int n = (start == switch_offset && hi == period)
                        ? n_lin_
                        : std::max(1, static_cast<int>(std::ceil(n_lin_ * len / nominal_lin - 1e-9)));
      advance<false>(s, base + start, len, n, step, observer);
    }
  }
  return s;
}

}  // namespace rotor
