#pragma once

namespace magdda {

/// Physical constants, SI units (CODATA 2018).
namespace constants {

inline constexpr double c0 = 299792458.0;            // speed of light [m/s], exact
inline constexpr double e_charge = 1.602176634e-19;  // elementary charge [C], exact
inline constexpr double m_electron = 9.10938370e-31; // electron mass [kg]
inline constexpr double eps0 = 8.85418781e-12;       // vacuum permittivity [F/m]
inline constexpr double mu0 = 1.25663706e-6;         // vacuum permeability [H/m]
inline constexpr double pi = 3.14159265358979323846;

/// Free-space impedance sqrt(mu0/eps0) [Ohm].
inline constexpr double z0 = 376.730314;

} // namespace constants

inline constexpr const char* engine_version = "magdda 1.0.0";

} // namespace magdda
