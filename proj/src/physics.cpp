#include "rotor/physics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rotor {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void Nanorod::validate() const {
  require(finite_positive(length), "rod.length must be > 0");
  require(finite_positive(diameter), "rod.diameter must be > 0");
  require(finite_positive(mass), "rod.mass must be > 0");
  require(std::isfinite(chi_parallel) && std::isfinite(chi_perp), "rod susceptibilities must be finite");
  require(chi_perp >= 0.0, "rod.chi_perp must be >= 0");
  require(delta_chi() > 0.0, "rod anisotropy chi_parallel - chi_perp must be > 0");
}

void GasEnvironment::validate() const {
  require(std::isfinite(pressure) && pressure >= 0.0, "gas.pressure must be >= 0");
  require(finite_positive(temperature), "gas.temperature must be > 0");
  require(finite_positive(particle_mass), "gas.particle_mass must be > 0");
}

void LaserField::validate() const {
  require(std::isfinite(power) && power >= 0.0, "laser.power must be >= 0");
  require(finite_positive(wavelength), "laser.wavelength must be > 0");
  require(finite_positive(waist), "laser.waist must be > 0");
}

void DriveConfig::validate() const {
  require(finite_positive(frequency), "drive.frequency must be > 0");
  require(std::isfinite(duty) && duty > 0.0 && duty < 1.0, "drive.duty must lie in (0, 1)");
}

void GeometricFactors::validate() const {
  require(finite_positive(eta1), "geometry.eta1 must be > 0");
  require(finite_positive(eta2), "geometry.eta2 must be > 0");
}

void Coefficients::validate() const {
  require(std::isfinite(damping) && damping >= 0.0, "damping must be >= 0");
  require(std::isfinite(torque), "torque must be finite");
  require(std::isfinite(potential) && potential >= 0.0, "potential must be >= 0");
  require(finite_positive(inertia), "inertia must be > 0");
}

double moment_of_inertia(const Nanorod& rod) {
  return rod.mass * rod.length * rod.length / 12.0;
}

// Free-molecular rotational damping for diffuse reflection of gas particles.
double damping_rate(const Nanorod& rod, const GasEnvironment& gas) {
  const double numerator = rod.diameter * rod.length * gas.pressure *
                           std::sqrt(2.0 * constants::kPi * gas.particle_mass) *
                           (6.0 + constants::kPi);
  const double denominator =
      8.0 * rod.mass * std::sqrt(constants::kBoltzmann * gas.temperature);
  return numerator / denominator;
}

double optical_torque(const Nanorod& rod, const LaserField& laser, const GeometricFactors& geom) {
  const double k = laser.wavenumber();
  const double dchi = rod.delta_chi();
  const double d2 = rod.diameter * rod.diameter;
  const double bracket = dchi * geom.eta1 + rod.chi_perp * geom.eta2;
  return laser.power * dchi * rod.length * rod.length * d2 * d2 * k * k * k * bracket /
         (48.0 * constants::kSpeedOfLight * laser.waist * laser.waist);
}

double optical_potential(const Nanorod& rod, const LaserField& laser) {
  return laser.power * rod.diameter * rod.diameter * rod.length * rod.delta_chi() /
         (2.0 * constants::kSpeedOfLight * laser.waist * laser.waist);
}

Coefficients compute_coefficients(const Nanorod& rod, const GasEnvironment& gas,
                                  const LaserField& laser, const GeometricFactors& geom) {
  rod.validate();
  gas.validate();
  laser.validate();
  geom.validate();
  return Coefficients{damping_rate(rod, gas), optical_torque(rod, laser, geom),
                      optical_potential(rod, laser), moment_of_inertia(rod)};
}

DimensionlessCoefficients dimensionless(const Coefficients& coeffs, const DriveConfig& drive) {
  drive.validate();
  const double f = drive.frequency;
  const double scale = coeffs.inertia * f * f;
  return {coeffs.damping / f, coeffs.torque / scale, coeffs.potential / scale};
}

Coefficients dimensional(const DimensionlessCoefficients& scaled, double inertia,
                         const DriveConfig& drive) {
  drive.validate();
  const double f = drive.frequency;
  const double scale = inertia * f * f;
  return {scaled.damping * f, scaled.torque * scale, scaled.potential * scale, inertia};
}

Coefficients unit_coefficients(const DimensionlessCoefficients& scaled) {
  return {scaled.damping, scaled.torque, scaled.potential, 1.0};
}

}  // namespace rotor
