#include "rotor/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <random>
#include <stdexcept>

#include "rotor/errors.hpp"

namespace rotor {

using constants::kPi;

void SignalTrace::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw std::invalid_argument("sample rate must be > 0");
  if (!(carrier >= 0.0)) throw std::invalid_argument("carrier must be >= 0");
  if (!(sample_rate > 2.0 * carrier)) throw std::invalid_argument("sample rate must exceed twice the carrier");
  for (double v : samples)
    if (!std::isfinite(v)) throw std::invalid_argument("trace contains non-finite samples");
}

void NoiseSpec::validate() const {
  if (!std::isfinite(offset) || !std::isfinite(amplitude)) throw ConfigError("noise", "offset and amplitude must be finite");
  if (!(power_noise_rms >= 0.0)) throw ConfigError("noise.power_noise_rms", "must be >= 0");
  if (!(additive_rms >= 0.0)) throw ConfigError("noise.additive_rms", "must be >= 0");
}

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

// Unit-RMS 1/f sequence: shape white noise in the frequency domain.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t nc = n / 2 + 1;
  fftw_complex* spec = fftw_alloc_complex(nc);
  double* out = fftw_alloc_real(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, out, FFTW_ESTIMATE);
  }
  spec[0][0] = spec[0][1] = 0.0;
  for (std::size_t k = 1; k < nc; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k));
    spec[k][0] = normal(rng) * scale;
    spec[k][1] = normal(rng) * scale;
  }
  if (n % 2 == 0) spec[nc - 1][1] = 0.0;
  fftw_execute(plan);
  std::vector<double> v(out, out + n);
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(out);
  double ms = 0.0;
  for (double x : v) ms += x * x;
  ms /= static_cast<double>(n);
  const double norm = ms > 0.0 ? 1.0 / std::sqrt(ms) : 0.0;
  for (double& x : v) x *= norm;
  return v;
}

}  // namespace

SignalTrace synthesize_detector(const Trajectory& traj, double detector_angle, const NoiseSpec& noise) {
  noise.validate();
  if (traj.states.empty() || traj.samples_per_period < 1) throw std::invalid_argument("empty trajectory");
  SignalTrace out;
  out.sample_rate = traj.samples_per_period * traj.drive.frequency;
  out.start_time = traj.states.front().time;
  if (traj.periods >= 1) out.carrier = 2.0 * std::abs(mean_rotation_frequency(traj, traj.periods));
  if (!(out.sample_rate > 2.0 * out.carrier)) throw std::invalid_argument("trajectory too coarse for its 2f_r tone");

  // Whole periods only: the closing state repeats the phase of the first.
  std::size_t n = traj.states.size();
  const auto whole = static_cast<std::size_t>(traj.periods) * static_cast<std::size_t>(traj.samples_per_period);
  if (traj.periods >= 1 && n == whole + 1) n = whole;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(n, 0.0);
  if (noise.power_noise_rms > 0.0) {
    if (noise.power_noise_pink) {
      eps = pink_noise(n, rng);
    } else {
      for (double& e : eps) e = normal(rng);
    }
    for (double& e : eps) e *= noise.power_noise_rms;
  }
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(traj.states[i].alpha - detector_angle);
    out.samples[i] = noise.offset + noise.amplitude * c * c * (1.0 + eps[i]);
  }
  if (noise.additive_rms > 0.0)
    for (double& s : out.samples) s += noise.additive_rms * normal(rng);
  return out;
}

SignalTrace mix_down(const SignalTrace& trace, double f_lo, double output_rate) {
  trace.validate();
  const double fs = trace.sample_rate;
  if (!(output_rate > 0.0) || !(output_rate < fs)) throw std::invalid_argument("output rate must lie in (0, input rate)");
  if (!(f_lo >= 0.0) || !(f_lo < fs / 2.0)) throw std::invalid_argument("LO frequency must lie below the input Nyquist");
  const double difference = std::abs(trace.carrier - f_lo);
  if (difference >= output_rate / 2.0)
    throw std::invalid_argument("difference tone at or above the output Nyquist frequency (aliasing)");

  // Blackman windowed sinc, half span of 8 output samples, cutoff 0.4·output_rate.
  const double cutoff = 0.4 * output_rate;
  const long half_taps = std::lround(8.0 * fs / output_rate);
  const double half_span = static_cast<double>(half_taps) / fs;
  const std::size_t n = trace.samples.size();
  if (n < static_cast<std::size_t>(2 * half_taps + 1)) throw std::invalid_argument("trace shorter than the filter kernel");

  // Time relative to the trace start keeps the LO phase accurate for long
  // records; the phase at the start is added separately.
  const double phase0 = std::fmod(2.0 * kPi * f_lo * trace.start_time, 2.0 * kPi);
  std::vector<double> mixed(n);
  for (std::size_t i = 0; i < n; ++i) {
    mixed[i] = trace.samples[i] * 2.0 * std::cos(2.0 * kPi * f_lo * (static_cast<double>(i) / fs) + phase0);
  }

  auto kernel = [&](double tau) {
    const double x = 2.0 * cutoff * tau;
    const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    const double u = (tau + half_span) / (2.0 * half_span);  // 0..1 across the span
    const double w = 0.42 - 0.5 * std::cos(2.0 * kPi * u) + 0.08 * std::cos(4.0 * kPi * u);
    return sinc * w;
  };

  SignalTrace out;
  out.sample_rate = output_rate;
  out.carrier = difference;
  out.start_time = trace.start_time + half_span;
  out.filter_delay = half_span;

  const double ratio = fs / output_rate;
  const bool aligned = std::abs(ratio - std::round(ratio)) < 1e-9 * ratio;
  std::vector<double> fixed;
  double fixed_norm = 0.0;
  if (aligned) {
    fixed.resize(static_cast<std::size_t>(2 * half_taps + 1));
    for (long j = -half_taps; j <= half_taps; ++j) {
      fixed[static_cast<std::size_t>(j + half_taps)] = kernel(static_cast<double>(j) / fs);
      fixed_norm += fixed[static_cast<std::size_t>(j + half_taps)];
    }
  }
  for (std::size_t k = 0;; ++k) {
    const double centre = static_cast<double>(half_taps) + static_cast<double>(k) * ratio;  // in input samples
    const long lo = static_cast<long>(std::ceil(centre - half_taps - 1e-9));
    const long hi = static_cast<long>(std::floor(centre + half_taps + 1e-9));
    if (hi >= static_cast<long>(n)) break;
    double acc = 0.0;
    double norm = 0.0;
    if (aligned) {
      const long c = std::lround(centre);
      for (long j = -half_taps; j <= half_taps; ++j)
        acc += mixed[static_cast<std::size_t>(c + j)] * fixed[static_cast<std::size_t>(j + half_taps)];
      norm = fixed_norm;
    } else {
      for (long i = std::max(0L, lo); i <= hi; ++i) {
        const double h = kernel((static_cast<double>(i) - centre) / fs);
        acc += mixed[static_cast<std::size_t>(i)] * h;
        norm += h;
      }
    }
    out.samples.push_back(acc / norm);
  }
  if (out.samples.empty()) throw std::invalid_argument("trace too short for one output sample");
  return out;
}

Window parse_window(const std::string& name) {
  if (name == "hann") return Window::hann;
  if (name == "rectangular") return Window::rectangular;
  throw ConfigError("window", "expected 'hann' or 'rectangular', got '" + name + "'");
}

std::string window_name(Window w) { return w == Window::hann ? "hann" : "rectangular"; }

std::size_t Spectrum::nearest_bin(double f) const {
  if (frequency.empty()) throw std::invalid_argument("empty spectrum");
  const double k = std::round(f / resolution_bandwidth);
  if (k <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), frequency.size() - 1);
}

Spectrum psd(const SignalTrace& trace, Window window, std::size_t segments) {
  trace.validate();
  if (segments < 1) throw std::invalid_argument("need at least one segment");
  const std::size_t n = trace.samples.size();
  if (n < 2 * segments) throw std::invalid_argument("trace shorter than two samples per segment");
  const std::size_t len = n / segments;

  double mean = 0.0;
  for (std::size_t i = 0; i < len * segments; ++i) mean += trace.samples[i];
  mean /= static_cast<double>(len * segments);

  std::vector<double> w(len, 1.0);
  if (window == Window::hann)
    for (std::size_t j = 0; j < len; ++j) w[j] = 0.5 - 0.5 * std::cos(2.0 * kPi * j / static_cast<double>(len));
  double u = 0.0;
  double sum_w = 0.0;
  for (double x : w) {
    u += x * x;
    sum_w += x;
  }

  const std::size_t nbins = len / 2 + 1;
  std::vector<double> acc(nbins, 0.0);
  RealFft fft(len);
  for (std::size_t s = 0; s < segments; ++s) {
    const double* seg = trace.samples.data() + s * len;
    double* in = fft.input();
    for (std::size_t j = 0; j < len; ++j) in[j] = (seg[j] - mean) * w[j];
    fft.execute();
    for (std::size_t k = 0; k < nbins; ++k) acc[k] += fft.power(k);
  }

  const double fs = trace.sample_rate;
  Spectrum spec;
  spec.segment_length = len;
  spec.segments = segments;
  spec.window = window;
  spec.resolution_bandwidth = fs / static_cast<double>(len);
  spec.enbw_bins = static_cast<double>(len) * u / (sum_w * sum_w);
  spec.frequency.resize(nbins);
  spec.density.resize(nbins);
  const double scale = 1.0 / (fs * u * static_cast<double>(segments));
  for (std::size_t k = 0; k < nbins; ++k) {
    const bool unpaired = k == 0 || (len % 2 == 0 && k == len / 2);
    spec.frequency[k] = static_cast<double>(k) * spec.resolution_bandwidth;
    spec.density[k] = acc[k] * scale * (unpaired ? 1.0 : 2.0);
  }
  return spec;
}

PhaseNoiseCurve phase_noise(const Spectrum& spec, double carrier) {
  if (spec.frequency.empty()) throw std::invalid_argument("empty spectrum");
  if (carrier < 0.0 || carrier > spec.frequency.back() + 0.5 * spec.resolution_bandwidth)
    throw std::invalid_argument("carrier outside the spectrum");
  const std::size_t kc = spec.nearest_bin(carrier);
  const double pc = spec.density[kc];
  if (!(pc > 0.0)) throw std::domain_error("carrier bin holds no power");
  PhaseNoiseCurve curve;
  curve.carrier = spec.frequency[kc];
  for (std::size_t k = kc; k < spec.frequency.size(); ++k) {
    curve.offset.push_back(spec.frequency[k] - spec.frequency[kc]);
    curve.dbc.push_back(10.0 * std::log10(spec.density[k] / pc));
  }
  return curve;
}

namespace {

std::size_t boxcar_length(double fs, double f, double tau) {
  const double per_cycle = fs / f;
  const double limit = std::max(fs * tau, per_cycle);
  for (long c = 1; c * per_cycle <= limit; ++c) {
    const double m = c * per_cycle;
    if (std::abs(m - std::round(m)) < 1e-9 * m) return static_cast<std::size_t>(std::llround(m));
  }
  const long c = std::max(1L, static_cast<long>(std::floor(limit / per_cycle)));
  return static_cast<std::size_t>(std::max(1LL, std::llround(c * per_cycle)));
}

}  // namespace

LockinOutput lockin_demodulate(const SignalTrace& trace, double reference, double time_constant) {
  trace.validate();
  const double fs = trace.sample_rate;
  if (!(reference > 0.0) || !(reference < fs / 2.0)) throw std::invalid_argument("reference must lie in (0, fs/2)");
  if (!(time_constant >= 2.0 / reference)) throw std::invalid_argument("time constant must be >= 2/reference");

  const std::size_t n = trace.samples.size();
  const std::size_t m = boxcar_length(fs, reference, time_constant);
  if (n < m + 1) throw std::invalid_argument("trace shorter than the lock-in averaging window");

  std::vector<double> x(n), y(n);
  const double phase0 = std::fmod(2.0 * kPi * reference * trace.start_time, 2.0 * kPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = 2.0 * kPi * reference * (static_cast<double>(i) / fs) + phase0;
    x[i] = trace.samples[i] * std::cos(th);
    y[i] = -trace.samples[i] * std::sin(th);
  }

  // Start the IIR from the first whole-cycle average instead of zero.
  double fx = 0.0;
  double fy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    fx += x[i];
    fy += y[i];
  }
  fx /= static_cast<double>(m);
  fy /= static_cast<double>(m);
  const double a = 1.0 - std::exp(-1.0 / (fs * time_constant));
  std::vector<double> cx(n + 1, 0.0), cy(n + 1, 0.0);  // prefix sums of the IIR output
  for (std::size_t i = 0; i < n; ++i) {
    fx += a * (x[i] - fx);
    fy += a * (y[i] - fy);
    cx[i + 1] = cx[i] + fx;
    cy[i + 1] = cy[i] + fy;
  }

  LockinOutput out;
  out.bandwidth = 1.0 / (2.0 * kPi * time_constant);
  out.boxcar_samples = m;
  const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fs * time_constant / 10.0)));
  out.output_rate = fs / static_cast<double>(stride);
  for (std::size_t j = m; j <= n; j += stride) {
    const double zx = (cx[j] - cx[j - m]) / static_cast<double>(m);
    const double zy = (cy[j] - cy[j - m]) / static_cast<double>(m);
    out.time.push_back(trace.time(j - 1));
    out.magnitude.push_back(std::sqrt(2.0) * std::hypot(zx, zy));
    out.phase.push_back(std::atan2(zy, zx));
  }
  return out;
}

}  // namespace rotor
