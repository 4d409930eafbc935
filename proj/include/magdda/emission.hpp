#pragma once

#include <cmath>
#include <complex>
#include <variant>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"
#include "magdda/quadrature.hpp"
#include "magdda/solver.hpp"
#include "magdda/source.hpp"

namespace magdda {

struct DecayRates {
    double gamma_r = 1.0;   // radiative rate over free-space rate
    double gamma_nr = 0.0;  // nonradiative (absorbed) rate over free-space rate
    double gamma_tot = 1.0; // gamma_r + gamma_nr
    double eta = 1.0;       // quantum efficiency gamma_r / gamma_tot
    double p_rad = 0.0;     // W
    double p_abs = 0.0;     // W
    double p_free = 0.0;    // W, same dipole in vacuum
};

/// Power radiated by the bare source in vacuum.
inline double free_space_power(const SourceSpec& src, double omega) {
    const double w4 = omega * omega * omega * omega;
    const double c3 = constants::c0 * constants::c0 * constants::c0;
    if (const auto* ed = std::get_if<PointED>(&src))
        return w4 * ed->p.squaredNorm() / (12.0 * constants::pi * constants::eps0 * c3);
    if (const auto* md = std::get_if<PointMD>(&src))
        return constants::mu0 * w4 * md->m.squaredNorm() / (12.0 * constants::pi * c3);
    throw ConfigError("free_space_power: source must be a point dipole");
}

/// Decay rates from the solved dipole distribution: radiated power by
/// far-field quadrature of source plus scattered waves, nonradiative power
/// from ohmic loss in the voxels. When `check_quadrature` is set the
/// radiated power is recomputed on a refined angular rule and a deviation
/// above 1% raises QuadratureError.
inline DecayRates decay_rates(const CdmSystem& system, const FieldSolution& sol,
                              const SourceSpec& src, const SphereQuadrature& quad,
                              bool check_quadrature = true) {
    DecayRates out;
    out.p_free = free_space_power(src, sol.omega);
    out.p_abs = system.absorbed_power(sol);

    const auto amplitude = [&](const Eigen::Vector3d& n) {
        return (source_far_field(src, n, sol.omega) +
                scattered_far_field(sol, system.grid(), n))
            .eval();
    };
    out.p_rad = radiated_power(amplitude, quad);
    if (check_quadrature) {
        const double refined = radiated_power(amplitude, quad.refined());
        const double scale = std::max(std::abs(refined), out.p_free);
        if (std::abs(refined - out.p_rad) > 0.01 * scale)
            throw QuadratureError("decay_rates: angular quadrature not converged, "
                                  "refine the sphere rule");
    }

    out.gamma_r = out.p_rad / out.p_free;
    out.gamma_nr = out.p_abs / out.p_free;
    out.gamma_tot = out.gamma_r + out.gamma_nr;
    out.eta = out.gamma_tot > 0.0 ? out.gamma_r / out.gamma_tot : 0.0;
    return out;
}

/// Total decay rate from the scattered field back at the source position
/// (local density of states route). For a consistent discrete solution this
/// equals gamma_r + gamma_nr from the power route up to quadrature error.
inline double gamma_total_via_green(const FieldSolution& sol, const VoxelGrid& grid,
                                    const SourceSpec& src, double omega) {
    const double k = omega / constants::c0;
    const double k3 = k * k * k;
    if (const auto* ed = std::get_if<PointED>(&src)) {
        const Eigen::Vector3cd es = scattered_E(sol, grid, ed->r0);
        const double p2 = ed->p.squaredNorm();
        if (p2 <= 0.0)
            throw ConfigError("gamma_total_via_green: zero dipole moment");
        return 1.0 + 6.0 * constants::pi * constants::eps0 / (k3 * p2) *
                         std::imag(ed->p.dot(es));
    }
    if (const auto* md = std::get_if<PointMD>(&src)) {
        const Eigen::Vector3cd hs = scattered_H(sol, grid, md->r0);
        const double m2 = md->m.squaredNorm();
        if (m2 <= 0.0)
            throw ConfigError("gamma_total_via_green: zero dipole moment");
        return 1.0 + 6.0 * constants::pi / (k3 * m2) * std::imag(md->m.dot(hs));
    }
    throw ConfigError("gamma_total_via_green: source must be a point dipole");
}

inline double quantum_efficiency(const DecayRates& r) {
    return r.gamma_tot > 0.0 ? r.gamma_r / r.gamma_tot : 0.0;
}

} // namespace magdda
