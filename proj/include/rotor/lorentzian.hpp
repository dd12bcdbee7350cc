#pragma once

#include <vector>

#include "rotor/signal.hpp"

namespace rotor {

/// a·(γ/2)² / ((f − f₀)² + (γ/2)²) + b
double lorentzian(double f, double center, double fwhm, double amplitude, double offset);

struct LorentzianFit {
  double center = 0.0;
  double fwhm = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  double center_sigma = 0.0;
  double fwhm_sigma = 0.0;
  double amplitude_sigma = 0.0;
  double offset_sigma = 0.0;
  double rms_residual = 0.0;
  int iterations = 0;
  double resolution_bandwidth = 0.0;
  bool upper_bound = false;  // fwhm within 2 bins: the peak is not resolved
};

/// Levenberg–Marquardt fit over the points with |f − f_guess| <= half_window.
/// Throws FitError (carrying the final RMS residual) if it does not converge or
/// finds no significant peak.
LorentzianFit fit_lorentzian(const Spectrum& spec, double f_guess, double half_window);

/// Same on arbitrary samples; `resolution_bandwidth` only sets the upper-bound flag.
LorentzianFit fit_lorentzian(const std::vector<double>& f, const std::vector<double>& y,
                             double resolution_bandwidth);

}  // namespace rotor
