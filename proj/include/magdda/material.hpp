#pragma once

#include <complex>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"

namespace magdda {

using complexd = std::complex<double>;

/// Which numerators carry the background screening in the magnetized Drude
/// tensor. `screened` multiplies every plasma-frequency numerator by eps_inf
/// (Drude response of e.g. InSb with its large bound-electron background);
/// `bare` uses the plasma frequency numerators as-is.
enum class DrudeForm { bare, screened };

/// Magnetized free-carrier (Drude) material, static bias field along z.
/// Defaults describe n-type InSb in the low-THz band.
struct DrudeParams {
    double eps_inf = 15.6;          // high-frequency background
    double omega_p = 12.56e12;      // plasma frequency [rad/s]
    double gamma_p = 0.01 * 12.56e12; // collision rate [rad/s]
    double mass_ratio = 0.0142;     // effective mass / electron mass
    DrudeForm form = DrudeForm::screened;
};

/// Cyclotron frequency e*B/m* [rad/s]; sign follows b_z.
inline double cyclotron_frequency(double b_z, double mass_ratio) {
    return constants::e_charge * b_z / (mass_ratio * constants::m_electron);
}

inline double cyclotron_frequency(double b_z, const DrudeParams& pm) {
    return cyclotron_frequency(b_z, pm.mass_ratio);
}

/// Relative permittivity tensor of the magnetized Drude medium for the
/// exp(-i w t) time convention. Bias field along +z gives
///   [ e_xx  e_xy  0 ]
///   [ -e_xy e_xx  0 ]
///   [ 0     0    e_zz ],
/// e_xy purely gyrotropic (odd in b_z), so eps(b)^T = eps(-b) holds exactly.
inline Eigen::Matrix3cd permittivity(double omega, double b_z, const DrudeParams& pm) {
    if (omega <= 0.0)
        throw ConfigError("permittivity: omega must be positive");
    const complexd i(0.0, 1.0);
    const double wc = cyclotron_frequency(b_z, pm);
    const double wp2 = pm.omega_p * pm.omega_p;
    const double num_scale = (pm.form == DrudeForm::screened) ? pm.eps_inf : 1.0;
    // w~^2 = w^2 + i*gamma*w
    const complexd wt2 = omega * omega + i * pm.gamma_p * omega;
    const complexd denom = wt2 * wt2 - wc * wc * omega * omega;

    const complexd ezz = pm.eps_inf - num_scale * wp2 / wt2;
    const complexd exx = pm.eps_inf - num_scale * wp2 * wt2 / denom;
    const complexd exy = -i * num_scale * wp2 * wc * omega / denom;

    Eigen::Matrix3cd eps = Eigen::Matrix3cd::Zero();
    eps(0, 0) = exx;
    eps(1, 1) = exx;
    eps(2, 2) = ezz;
    eps(0, 1) = exy;
    eps(1, 0) = -exy;
    return eps;
}

/// Isotropic, frequency-independent relative permittivity.
struct ConstEps {
    complexd eps{1.0, 0.0};
};

/// A scene material: either dispersive magnetized Drude or a constant epsilon.
struct Material {
    std::string name;
    std::variant<DrudeParams, ConstEps> model;

    Eigen::Matrix3cd permittivity(double omega, double b_z) const {
        if (const auto* d = std::get_if<DrudeParams>(&model))
            return magdda::permittivity(omega, b_z, *d);
        return std::get<ConstEps>(model).eps * Eigen::Matrix3cd::Identity();
    }

    bool dispersive() const { return std::holds_alternative<DrudeParams>(model); }
};

/// Frequency where Re eps_zz(w, b=0) crosses zero, located by bisection on
/// [0.01, 3] * omega_p. Throws SingularPointError if the bracket has no sign
/// change.
inline double plasma_crossover(const DrudeParams& pm) {
    auto re_ezz = [&pm](double w) {
        return permittivity(w, 0.0, pm)(2, 2).real();
    };
    double lo = 0.01 * pm.omega_p, hi = 3.0 * pm.omega_p;
    double flo = re_ezz(lo), fhi = re_ezz(hi);
    if (flo * fhi > 0.0)
        throw SingularPointError("plasma_crossover: no sign change of Re eps_zz in bracket");
    for (int it = 0; it < 200 && (hi - lo) > 1e-12 * pm.omega_p; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = re_ezz(mid);
        if (flo * fm <= 0.0) {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace magdda
