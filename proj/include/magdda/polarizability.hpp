#pragma once

#include <complex>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"

namespace magdda {

/// Tensor Clausius-Mossotti polarizability of a cubic voxel of volume V:
///   alpha_cm = 3 V eps0 (eps - I)(eps + 2 I)^-1     [C m^2 / V]
inline Eigen::Matrix3cd clausius_mossotti(const Eigen::Matrix3cd& eps, double volume) {
    const Eigen::Matrix3cd I = Eigen::Matrix3cd::Identity();
    const Eigen::Matrix3cd denom = eps + 2.0 * I;
    if (std::abs(denom.determinant()) < 1e-300)
        throw SingularPointError("clausius_mossotti: eps + 2I is singular");
    return 3.0 * volume * constants::eps0 * (eps - I) * denom.inverse();
}

/// Radiative-reaction corrected polarizability,
///   alpha = alpha_cm (I - i k^3/(6 pi eps0) alpha_cm)^-1,
/// which satisfies the single-dipole optical theorem exactly.
inline Eigen::Matrix3cd corrected_polarizability(const Eigen::Matrix3cd& alpha_cm, double k) {
    const std::complex<double> i(0.0, 1.0);
    const Eigen::Matrix3cd I = Eigen::Matrix3cd::Identity();
    const Eigen::Matrix3cd denom =
        I - i * (k * k * k / (6.0 * constants::pi * constants::eps0)) * alpha_cm;
    return alpha_cm * denom.inverse();
}

inline Eigen::Matrix3cd voxel_polarizability(const Eigen::Matrix3cd& eps, double volume,
                                             double k) {
    return corrected_polarizability(clausius_mossotti(eps, volume), k);
}

} // namespace magdda
