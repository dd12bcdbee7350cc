#pragma once

// Physical description of the levitated rod, its gas environment, the trapping
// laser and the polarization drive, plus the three coefficients of the
// rotational equation of motion derived from them.

namespace rotor {

namespace constants {
inline constexpr double kBoltzmann = 1.380649e-23;     // J/K (CODATA 2018, exact)
inline constexpr double kSpeedOfLight = 299792458.0;   // m/s (exact)
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kPascalPerMbar = 100.0;
}  // namespace constants

struct Nanorod {
  double length = 725e-9;         // m
  double diameter = 130e-9;       // m
  double mass = 2.2e-17;          // kg
  double chi_parallel = 3.48 * 3.48 - 1.0;
  double chi_perp = 0.5 * (3.48 * 3.48 - 1.0);

  double delta_chi() const { return chi_parallel - chi_perp; }
  void validate() const;
};

struct GasEnvironment {
  double pressure = 400.0;         // Pa
  double temperature = 300.0;      // K
  double particle_mass = 4.8e-26;  // kg, mean air molecule

  void validate() const;
};

struct LaserField {
  double power = 1.35;           // W
  double wavelength = 1550e-9;   // m
  double waist = 25e-6;          // m

  double wavenumber() const { return 2.0 * constants::kPi / wavelength; }
  void validate() const;
};

struct DriveConfig {
  double frequency = 1.11e6;  // Hz
  double duty = 0.5;          // fraction of the period spent in circular polarization

  double period() const { return 1.0 / frequency; }
  void validate() const;
};

struct GeometricFactors {
  double eta1 = 0.872;
  double eta2 = 0.113;

  void validate() const;
};

/// Coefficients of  I α'' = -I Γ α' + N h(t) - V sin(2α) [1 - h(t)].
struct Coefficients {
  double damping = 0.0;    // Γ, 1/s
  double torque = 0.0;     // N, N·m
  double potential = 0.0;  // V, J
  double inertia = 1.0;    // I, kg·m²

  void validate() const;
};

/// Coefficients with time measured in drive periods and I scaled out.
struct DimensionlessCoefficients {
  double damping = 0.0;    // Γ / f_d
  double torque = 0.0;     // N / (I f_d²)
  double potential = 0.0;  // V / (I f_d²)
};

double moment_of_inertia(const Nanorod& rod);
double damping_rate(const Nanorod& rod, const GasEnvironment& gas);
double optical_torque(const Nanorod& rod, const LaserField& laser, const GeometricFactors& geom);
double optical_potential(const Nanorod& rod, const LaserField& laser);

Coefficients compute_coefficients(const Nanorod& rod, const GasEnvironment& gas,
                                  const LaserField& laser, const GeometricFactors& geom);

DimensionlessCoefficients dimensionless(const Coefficients& coeffs, const DriveConfig& drive);

/// Inverse of dimensionless() for a given inertia and drive frequency.
Coefficients dimensional(const DimensionlessCoefficients& scaled, double inertia,
                         const DriveConfig& drive);

/// Coefficients whose SI values equal the dimensionless ones (I = 1, f_d = 1 Hz).
Coefficients unit_coefficients(const DimensionlessCoefficients& scaled);

}  // namespace rotor
