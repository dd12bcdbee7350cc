#include "rotor/lorentzian.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rotor/errors.hpp"

namespace rotor {

double lorentzian(double f, double center, double fwhm, double amplitude, double offset) {
  const double h = 0.5 * fwhm;
  const double d = f - center;
  return amplitude * h * h / (d * d + h * h) + offset;
}

namespace {

// Parameters in scaled units: p = (centre, ln(fwhm), amplitude, offset) with
// frequency measured in `fscale` steps from `fref` and values divided by `yscale`.
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

double residuals(const Vec4& p, const std::vector<double>& u, const std::vector<double>& v,
                 Eigen::VectorXd* r, Eigen::MatrixXd* jac) {
  const double h = 0.5 * std::exp(p[1]);
  double cost = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - p[0];
    const double den = d * d + h * h;
    const double shape = h * h / den;
    const double ri = p[2] * shape + p[3] - v[i];
    cost += ri * ri;
    if (r) (*r)[static_cast<Eigen::Index>(i)] = ri;
    if (jac) {
      const auto row = static_cast<Eigen::Index>(i);
      (*jac)(row, 0) = p[2] * h * h * 2.0 * d / (den * den);
      (*jac)(row, 1) = p[2] * 2.0 * h * h * d * d / (den * den);
      (*jac)(row, 2) = shape;
      (*jac)(row, 3) = 1.0;
    }
  }
  return cost;
}

}  // namespace

LorentzianFit fit_lorentzian(const std::vector<double>& f, const std::vector<double>& y,
                             double resolution_bandwidth) {
  if (f.size() != y.size()) throw std::invalid_argument("frequency and value counts differ");
  const std::size_t m = f.size();
  if (m < 5) throw FitError("need at least 5 points for a Lorentzian fit", NAN);

  const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double ymax = y[imax];
  const double ymin = *std::min_element(y.begin(), y.end());
  const double yscale = std::max(std::abs(ymax), std::abs(ymin)) > 0.0 ? std::max(std::abs(ymax), std::abs(ymin)) : 1.0;
  double fscale = (f.back() - f.front()) / static_cast<double>(m - 1);
  if (!(fscale > 0.0)) throw std::invalid_argument("frequencies must increase");
  const double fref = f[imax];

  std::vector<double> u(m), v(m);
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = (f[i] - fref) / fscale;
    v[i] = y[i] / yscale;
  }

  // Start: peak bin, floor at the minimum, width from the points above half height.
  const double half = 0.5 * (ymax + ymin) / yscale;
  std::size_t above = 0;
  for (double x : v)
    if (x > half) ++above;
  Vec4 p;
  p << 0.0, std::log(std::max(1.0, static_cast<double>(above))), (ymax - ymin) / yscale, ymin / yscale;

  Eigen::VectorXd r(m);
  Eigen::MatrixXd jac(m, 4);
  double cost = residuals(p, u, v, &r, &jac);
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  const int max_iter = 500;
  for (; it < max_iter; ++it) {
    const Mat4 a = jac.transpose() * jac;
    const Vec4 g = jac.transpose() * r;
    Mat4 damped = a;
    for (int k = 0; k < 4; ++k) damped(k, k) += lambda * std::max(a(k, k), 1e-300);
    const Vec4 step = damped.ldlt().solve(-g);
    const Vec4 trial = p + step;
    const double trial_cost = residuals(trial, u, v, nullptr, nullptr);
    if (std::isfinite(trial_cost) && trial_cost <= cost) {
      const double drop = cost - trial_cost;
      p = trial;
      cost = residuals(p, u, v, &r, &jac);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (drop <= 1e-14 * cost || cost < 1e-28 || step.norm() < 1e-13 * (1.0 + p.norm())) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) {
        // No downhill step left: stationary point.
        converged = g.norm() < 1e-8 * (1.0 + cost);
        break;
      }
    }
  }
  const double rms = std::sqrt(cost / static_cast<double>(m)) * yscale;
  if (!converged) throw FitError("Lorentzian fit did not converge", rms);

  LorentzianFit fit;
  fit.iterations = it + 1;
  fit.rms_residual = rms;
  fit.resolution_bandwidth = resolution_bandwidth;
  fit.center = fref + p[0] * fscale;
  fit.fwhm = std::exp(p[1]) * fscale;
  fit.amplitude = p[2] * yscale;
  fit.offset = p[3] * yscale;

  const Mat4 a = jac.transpose() * jac;
  const double dof = static_cast<double>(m) - 4.0;
  Mat4 cov = a.inverse() * (cost / dof);
  const auto sd = [&](int k) { return std::sqrt(std::max(cov(k, k), 0.0)); };
  fit.center_sigma = sd(0) * fscale;
  fit.fwhm_sigma = sd(1) * fit.fwhm;
  fit.amplitude_sigma = sd(2) * yscale;
  fit.offset_sigma = sd(3) * yscale;

  if (!(fit.amplitude > 0.0) || !std::isfinite(fit.fwhm) || !std::isfinite(fit.center_sigma))
    throw FitError("no peak found", rms);
  if (fit.center < f.front() || fit.center > f.back()) throw FitError("fitted centre outside the window", rms);
  if (fit.fwhm > f.back() - f.front()) throw FitError("fitted peak wider than the window", rms);
  if (fit.amplitude < 3.0 * fit.amplitude_sigma) throw FitError("peak not significant above the residual scatter", rms);
  fit.upper_bound = resolution_bandwidth > 0.0 && fit.fwhm <= 2.0 * resolution_bandwidth;
  return fit;
}

LorentzianFit fit_lorentzian(const Spectrum& spec, double f_guess, double half_window) {
  if (!(half_window > 0.0)) throw std::invalid_argument("fit window must be > 0");
  std::vector<double> f, y;
  for (std::size_t k = 0; k < spec.frequency.size(); ++k) {
    if (std::abs(spec.frequency[k] - f_guess) <= half_window) {
      f.push_back(spec.frequency[k]);
      y.push_back(spec.density[k]);
    }
  }
  return fit_lorentzian(f, y, spec.resolution_bandwidth);
}

}  // namespace rotor
