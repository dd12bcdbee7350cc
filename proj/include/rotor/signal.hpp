#pragma once

// Detector model and the measurement chain: mix-down, Welch PSD, phase noise
// and a dual-phase lock-in.

#include <cstdint>
#include <string>
#include <vector>

#include "rotor/dynamics.hpp"

namespace rotor {

struct SignalTrace {
  std::vector<double> samples;
  double sample_rate = 0.0;   // Hz
  double carrier = 0.0;       // nominal tone frequency, Hz
  double start_time = 0.0;    // time of samples[0], s
  double filter_delay = 0.0;  // causal-equivalent delay of the last filter applied, s

  void validate() const;
  double time(std::size_t i) const { return start_time + static_cast<double>(i) / sample_rate; }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct NoiseSpec {
  double offset = 0.0;             // s₀
  double amplitude = 1.0;          // A
  double power_noise_rms = 0.003;  // relative, multiplies the scattered part
  bool power_noise_pink = false;   // 1/f instead of white
  double additive_rms = 0.0;
  std::uint64_t seed = 0;

  static NoiseSpec noiseless() {
    NoiseSpec n;
    n.power_noise_rms = 0.0;
    return n;
  }
  void validate() const;
};

/// s = s₀ + A·cos²(α − α_det)·(1 + ε) + η, one sample per recorded state (the
/// closing state of a whole-period trajectory is dropped). The
/// carrier is set to 2f_r measured over the whole trajectory.
SignalTrace synthesize_detector(const Trajectory& traj, double detector_angle, const NoiseSpec& noise);

/// Multiplies by 2cos(2πf_LO t), low-pass filters and resamples to output_rate.
/// The windowed-sinc kernel is centred on each output instant, so output time
/// stamps carry no delay; `filter_delay` reports what a causal filter would add.
/// Rejects a difference tone at or above output_rate/2.
SignalTrace mix_down(const SignalTrace& trace, double f_lo, double output_rate);

enum class Window { rectangular, hann };

Window parse_window(const std::string& name);
std::string window_name(Window w);

struct Spectrum {
  std::vector<double> frequency;  // Hz
  std::vector<double> density;    // one-sided, units²/Hz
  double resolution_bandwidth = 0.0;
  std::size_t segment_length = 0;
  std::size_t segments = 0;
  Window window = Window::hann;
  double enbw_bins = 1.0;  // equivalent noise bandwidth of the window, in bins

  double bin_width() const { return resolution_bandwidth; }
  std::size_t nearest_bin(double f) const;
};

/// Welch average over non-overlapping segments after removing the trace mean.
Spectrum psd(const SignalTrace& trace, Window window, std::size_t segments);

struct PhaseNoiseCurve {
  double carrier = 0.0;        // centre of the carrier bin, Hz
  std::vector<double> offset;  // Hz, starting at 0
  std::vector<double> dbc;     // dBc/Hz
};

/// 10·log10(PSD(f_c + δ)/PSD(f_c)) over the upper sideband.
PhaseNoiseCurve phase_noise(const Spectrum& spec, double carrier);

struct LockinOutput {
  std::vector<double> time;       // s
  std::vector<double> magnitude;  // RMS
  std::vector<double> phase;      // rad, four-quadrant
  double bandwidth = 0.0;         // 1/(2π τ)
  double output_rate = 0.0;
  std::size_t boxcar_samples = 0;
};

/// Dual-phase demodulation against cos(2πf t) with t the trace's absolute time.
/// Low-pass: first-order IIR with time constant τ, then a boxcar spanning a
/// whole number of reference cycles to null the 2f term.
LockinOutput lockin_demodulate(const SignalTrace& trace, double reference, double time_constant);

}  // namespace rotor
