// Acceptance run: one PASS/FAIL line per criterion. With arguments, runs only
// the listed criteria (e.g. `acceptance 1 7`).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "rotor/dynamics.hpp"
#include "rotor/errors.hpp"
#include "rotor/limit_cycle.hpp"
#include "rotor/lorentzian.hpp"
#include "rotor/sensing.hpp"
#include "rotor/signal.hpp"

using namespace rotor;
using constants::kPi;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

constexpr double kNv = 0.18607752019379456;

// Uniform rotation α = α₀(t) + πf_d t sampled `spp` times per period.
Trajectory locked_rotation(double f_d, int spp, long periods, const std::function<double(double)>& alpha0) {
  Trajectory traj;
  traj.drive = DriveConfig{f_d, 0.5};
  traj.periods = periods;
  traj.samples_per_period = spp;
  const long n = periods * spp;
  traj.states.reserve(static_cast<std::size_t>(n + 1));
  for (long i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / (spp * f_d);
    traj.states.push_back({alpha0(t) + kPi * f_d * t, kPi * f_d, t});
  }
  return traj;
}

std::vector<std::string> collapse(const std::vector<PathSample>& samples) {
  std::vector<std::string> runs;
  for (const auto& s : samples)
    if (runs.empty() || runs.back() != s.report.label()) runs.push_back(s.report.label());
  return runs;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : " > ") + x;
  return s;
}

ParameterPath preset_path() {
  ParameterPath p;
  p.waypoints = {{0.0075, 0.015}, {0.0131, 0.015}, {0.02984, 0.075}, {0.01085, 0.075}};
  return p;
}

// 1. the phase-lag formula against simulated 1:2 locks over the interior of the lockable region.
Outcome criterion1() {
  double worst = 0.0;
  int unlocked = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double n = 0.02 + 0.02 * i;
      // lockable for γ̃ below (ñ + 2ṽ/π)/2π; stay inside it
      const double g_max = (n + 2.0 * (n / kNv) / kPi) / (2.0 * kPi);
      const double g = g_max * (0.108 + 0.08 * j);
      const DimensionlessCoefficients sc{g, n, n / kNv};
      const auto r = classify_scaled(sc, 0.5, analytic_cycle_start(sc), ClassifySettings{});
      if (!r.is_lock(1, 2) || !r.phase_lag) {
        ++unlocked;
        continue;
      }
      worst = std::max(worst, std::abs(*r.phase_lag - *phase_lag_analytic(sc)));
    }
  }
  return {unlocked == 0 && worst < 0.01 * kPi,
          fmt("max |dphi| = %.4f rad (limit %.4f), %d of 100 points not locked", worst, 0.01 * kPi, unlocked)};
}

// 2. Threshold law along the second leg of the preset path.
Outcome criterion2() {
  const ParameterPath path = preset_path();
  const auto samples = sweep_path(path, analytic_cycle_start(path.scaled_at(path.waypoints[0])));
  double worst = 0.0;
  int points = 0, not_threshold = 0;
  for (const auto& s : samples) {
    if (s.segment != 1) continue;
    ++points;
    if (s.report.kind != CycleKind::threshold) ++not_threshold;
    worst = std::max(worst, std::abs(s.report.f_r / s.threshold_ratio - 1.0));
  }
  return {points > 0 && not_threshold == 0 && worst < 0.02,
          fmt("%d dwell points, max |f_r/f_thr - 1| = %.2e, %d not in threshold rotation", points, worst,
              not_threshold)};
}

// 3. 50x50 region map: no false 1:2 locks; every ensemble member locks on the 1:2 coincidence line.
Outcome criterion3() {
  RegionMapSpec spec;
  spec.damping = {0.002, 0.05, 50};
  spec.torque = {0.003, 0.15, 50};
  spec.settings.integrator.steps_per_half_period = 16;
  spec.settings.integrator.output_stride = 4;
  spec.settings.integrator.transient_periods = 1000;
  spec.settings.analysis_periods = 800;
  const RegionMap m = map_region(spec);
  long false_locks = 0;
  for (const auto& c : m.cells)
    for (const auto& o : c.outcomes)
      if (o.is_lock(1, 2) && !c.analytic_phase) ++false_locks;
  int line_points = 0, all_locked = 0;
  long members = 0, locked = 0;
  std::set<std::size_t> failing_members;
  for (const auto& pt : m.coincidence) {
    if (pt.ratio != 0.5) continue;
    ++line_points;
    bool all = true;
    for (std::size_t k = 0; k < pt.outcomes.size(); ++k) {
      ++members;
      if (pt.outcomes[k].is_lock(1, 2)) {
        ++locked;
      } else {
        all = false;
        failing_members.insert(k);
      }
    }
    if (all) ++all_locked;
  }
  std::string which;
  for (auto k : failing_members) which += (which.empty() ? "" : ",") + std::to_string(k);
  return {false_locks == 0 && line_points > 0 && all_locked == line_points,
          fmt("%ld false 1:2 locks; 1:2 line: %d/%d points with all 8 locked, %ld/%ld runs locked (missing members %s)",
              false_locks, all_locked, line_points, locked, members, which.empty() ? "none" : which.c_str())};
}

// 4. Hysteresis sequence of the preset path, and its stability under a 2x slower ramp.
Outcome criterion4() {
  ParameterPath path = preset_path();
  const RotorState start = analytic_cycle_start(path.scaled_at(path.waypoints[0]));
  const auto base = collapse(sweep_path(path, start));
  path.ramp_periods *= 2;
  const auto slow = collapse(sweep_path(path, start));
  const std::vector<std::string> expected{"lock_1_2", "threshold", "lock_1_4", "threshold", "lock_1_2"};
  return {base == expected && slow == expected, "sequence " + join(base) + "; 2x ramp " + join(slow)};
}

// 5. Noiseless locked linewidth stays at the Fourier resolution for every record length.
Outcome criterion5() {
  OperatingPoint op;
  const Coefficients c = op.coefficients();
  const DriveConfig d = op.drive;
  IntegratorSettings set;
  set.steps_per_half_period = 64;
  set.output_stride = 16;  // 8 samples per period
  ClassifySettings cs;
  cs.integrator = set;
  const DimensionlessCoefficients sc = dimensionless(c, d);
  RotorState end;
  const auto r = classify_scaled(sc, d.duty, analytic_cycle_start(sc), cs, &end);
  if (!r.is_lock(1, 2)) return {false, "nominal point did not lock: " + r.label()};
  const RotorState start{end.alpha, end.omega * d.frequency, end.time / d.frequency};
  double worst = 0.0;
  std::string detail;
  for (long periods : {1000L, 10000L, 100000L}) {
    const auto traj = simulate(start, c, d, set, periods);
    const auto spec = psd(synthesize_detector(traj, 0.25, NoiseSpec::noiseless()), Window::hann, 1);
    try {
      const auto fit = fit_lorentzian(spec, d.frequency, 10.0 * spec.resolution_bandwidth);
      const double ratio = fit.fwhm / spec.resolution_bandwidth;
      worst = std::max(worst, ratio);
      detail += fmt(" %ld: %.3f", periods, ratio);
    } catch (const FitError& e) {
      return {false, fmt("fit failed at %ld periods: %s", periods, e.what())};
    }
  }
  return {worst <= 1.2, "FWHM/RBW per record length" + detail};
}

// 6. Phase-noise definition and the white floor.
Outcome criterion6() {
  const double fs = 2000.0, f = 190.0, a = 1.0, sigma = 0.01;
  SignalTrace tr;
  tr.sample_rate = fs;
  tr.carrier = f;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 200000; ++i) tr.samples.push_back(a * std::cos(2.0 * kPi * f * i / fs) + sigma * normal(rng));
  const auto spec = psd(tr, Window::hann, 100);
  const auto pn = phase_noise(spec, f);
  const double carrier = 0.5 * a * a / (spec.enbw_bins * spec.resolution_bandwidth);
  const double expected = 10.0 * std::log10(sigma * sigma / (fs / 2.0) / carrier);
  double sum = 0.0;
  int count = 0;
  for (std::size_t k = 10; k + 10 < pn.dbc.size(); ++k) {
    sum += std::pow(10.0, pn.dbc[k] / 10.0);
    ++count;
  }
  const double floor = 10.0 * std::log10(sum / count);
  return {pn.dbc.front() == 0.0 && std::abs(floor - expected) < 1.0,
          fmt("S(0) = %g dBc/Hz, floor %.2f vs analytic %.2f dBc/Hz", pn.dbc.front(), floor, expected)};
}

// 7. Synthesize, mix to 190 Hz, sample at 2 kS/s, lock-in.
Outcome criterion7() {
  const double f_d = 1.11e6, tau = 0.2, det = 0.25;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, kPi);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const double alpha0 = uni(rng);
    const auto traj = locked_rotation(f_d, 4, 1665000, [&](double) { return alpha0; });
    const auto out = lockin_demodulate(mix_down(synthesize_detector(traj, det, NoiseSpec::noiseless()), f_d - 190.0, 2000.0),
                                       190.0, tau);
    worst = std::max(worst, std::abs(std::remainder(out.phase.back() - (2.0 * alpha0 - 2.0 * det), 2.0 * kPi)));
  }
  // 0.1 rad step in the tone phase (0.05 rad in the rod angle) at t = 1 s
  const double t_step = 1.0, alpha0 = 0.4;
  const auto traj =
      locked_rotation(f_d, 4, 2775000, [&](double t) { return t < t_step ? alpha0 : alpha0 + 0.05; });
  const auto out =
      lockin_demodulate(mix_down(synthesize_detector(traj, det, NoiseSpec::noiseless()), f_d - 190.0, 2000.0), 190.0, tau);
  const double final_phase = 2.0 * (alpha0 + 0.05) - 2.0 * det;
  double step_err = 0.0;
  for (std::size_t i = 0; i < out.time.size(); ++i)
    if (out.time[i] >= t_step + 5.0 * tau)
      step_err = std::max(step_err, std::abs(std::remainder(out.phase[i] - final_phase, 2.0 * kPi)));
  return {worst < 1e-3 && step_err < 0.01 * 0.1,
          fmt("max phase error %.2e rad (3 phases); after 5 tau the 0.1 rad step is within %.2e rad", worst, step_err)};
}

// 8. Pressure loop through the full chain, and the power-noise-limited resolution.
Outcome criterion8() {
  OperatingPoint op;
  const ChainSettings chain;
  NoiseSpec noise;  // 0.3 % RMS power noise on the detected light
  double worst = 0.0;
  int i = 0;
  for (double p : {360.0, 380.0, 400.0, 420.0, 440.0}) {
    noise.seed = static_cast<std::uint64_t>(i++);
    const auto m = measure_phase(op.at_pressure(p), chain, noise);
    worst = std::max(worst, std::abs(pressure_from_phase(m.phase, op) / p - 1.0));
  }
  noise.seed = 100;
  const auto res = chain_pressure_resolution(op, chain, noise, 0.003);
  const bool within = res.relative >= 0.003 / 3.0 && res.relative <= 0.003 * 3.0;
  return {worst < 0.005 && within,
          fmt("worst recovery error %.3f %% (limit 0.5 %%); dp/p = %.3f %% with 0.3 %% power noise", 100.0 * worst,
              100.0 * res.relative)};
}

// 9. Torque sensitivity at φ = π/2 against a finite difference of the phase-lag formula, and its magnitude.
Outcome criterion9() {
  OperatingPoint op;
  Coefficients c = op.coefficients();
  const DriveConfig d = op.drive;
  const double balance = 2.0 * kPi * d.frequency * c.inertia * c.damping;
  Coefficients mid = c;
  mid.torque = balance;  // φ = π/2
  const double dphi = 1e-3;
  const double h = 1e-6 * c.potential;
  Coefficients up = mid, down = mid;
  up.torque += h;
  down.torque -= h;
  const double dphi_dn = (*phase_lag_analytic(up, d) - *phase_lag_analytic(down, d)) / (2.0 * h);
  const double dn_fd = dphi / std::abs(dphi_dn);
  const double dn_closed = torque_sensitivity(mid, d, dphi, 1.0).delta_torque;
  const double rel = std::abs(dn_closed / dn_fd - 1.0);
  const auto est = torque_sensitivity(c, d, power_noise_phase(op, 0.003), 1.0);
  const bool order = est.delta_torque >= 2.4e-23 && est.delta_torque <= 2.4e-21;
  return {rel < 1e-6 && order, fmt("closed form vs finite difference %.1e; dN = %.3g N m at the nominal point", rel,
                                   est.delta_torque)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Integrator order, energy drift, bit-identical reruns from an echoed config.
Outcome criterion10() {
  // order on a smooth linear-polarization segment
  const Coefficients c{0.4, 0.0, 3.0, 1.0};
  const RotorState s0{1.0, 2.5, 0.0};
  const auto ref = step_segment(s0, c, Polarization::linear, 1.0, 1 << 14);
  auto err = [&](int n) {
    const auto s = step_segment(s0, c, Polarization::linear, 1.0, n);
    return std::hypot(s.alpha - ref.alpha, s.omega - ref.omega);
  };
  double order = 1e9;
  for (int n : {16, 32, 64}) order = std::min(order, std::log2(err(n) / err(2 * n)));

  // energy per period, undamped, at the nominal coefficients and default steps
  OperatingPoint op;
  Coefficients pc = op.coefficients();
  pc.damping = 0.0;
  const DriveConfig d = op.drive;
  const IntegratorSettings set;
  const double dt = 0.5 * d.period();
  auto energy = [&](const RotorState& s) {
    return 0.5 * pc.inertia * s.omega * s.omega - 0.5 * pc.potential * std::cos(2.0 * s.alpha);
  };
  double drift = 0.0;
  for (const RotorState start : {RotorState{0.6, 0.0, 0.0}, RotorState{0.0, kPi * d.frequency, 0.0}}) {
    RotorState s = start;
    for (int p = 0; p < 200; ++p) {
      const double e0 = energy(s);
      s = step_segment(s, pc, Polarization::linear, dt, set.steps_per_half_period);
      s = step_segment(s, pc, Polarization::linear, dt, set.steps_per_half_period);
      drift = std::max(drift, std::abs(energy(s) - e0) / std::abs(e0));
    }
  }

  // rerun simulate from the CSV header of its own output
  namespace fs = std::filesystem;
  const fs::path a = fs::temp_directory_path() / "rotor_acceptance" / "a";
  const fs::path b = fs::temp_directory_path() / "rotor_acceptance" / "b";
  fs::remove_all(a.parent_path());
  std::ostringstream sink;
  bool same = cli::run({"--out-dir", a.string(), "--seed", "3", "simulate", "--periods", "500"}, sink, sink) == 0 &&
              cli::run({"--config", (a / "stroboscopic.csv").string(), "--out-dir", b.string(), "simulate"}, sink,
                       sink) == 0;
  for (const char* f : {"report.json", "stroboscopic.csv", "trajectory.bin", "trace.bin"})
    same = same && fs::exists(a / f) && slurp(a / f) == slurp(b / f);

  return {order >= 3.5 && drift <= 1e-8 && same,
          fmt("order %.2f, energy drift %.1e per period, reruns %s", order, drift, same ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d: %s  %s  [%.0f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
