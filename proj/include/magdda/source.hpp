#pragma once

#include <complex>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"
#include "magdda/green.hpp"

namespace magdda {

/// Plane wave E = amplitude * pol * e^{i k k_dir . r}; a complex unit `pol`
/// covers linear and circular polarization states.
struct PlaneWave {
    Eigen::Vector3d k_dir{0.0, 1.0, 0.0};
    Eigen::Vector3cd pol{1.0, 0.0, 0.0};
    double amplitude = 1.0; // [V/m]
};

/// Point electric dipole, moment p [C m] at position r0.
struct PointED {
    Eigen::Vector3d r0{0.0, 0.0, 0.0};
    Eigen::Vector3cd p{1.0e-30, 0.0, 0.0};
};

/// Point magnetic dipole, moment m [A m^2] at position r0.
struct PointMD {
    Eigen::Vector3d r0{0.0, 0.0, 0.0};
    Eigen::Vector3cd m{1.0e-25, 0.0, 0.0};
};

using SourceSpec = std::variant<PlaneWave, PointED, PointMD>;

inline void validate(const PlaneWave& pw) {
    if (std::abs(pw.k_dir.norm() - 1.0) > 1e-8 || std::abs(pw.pol.norm() - 1.0) > 1e-8)
        throw ConfigError("plane wave: k_dir and pol must be unit vectors");
    if (std::abs(pw.pol.dot(pw.k_dir.cast<std::complex<double>>())) > 1e-8)
        throw ConfigError("plane wave: polarization must be transverse to k_dir");
}

/// Source electric field at a point, free space.
inline Eigen::Vector3cd incident_field(const SourceSpec& src, const Eigen::Vector3d& r,
                                       double omega) {
    const double k = omega / constants::c0;
    const std::complex<double> i(0.0, 1.0);
    return std::visit(
        [&](const auto& s) -> Eigen::Vector3cd {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, PlaneWave>) {
                return (s.amplitude * std::exp(i * k * s.k_dir.dot(r))) * s.pol;
            } else if constexpr (std::is_same_v<T, PointED>) {
                return (k * k / constants::eps0) * (green_tensor(r, s.r0, k) * s.p);
            } else {
                // E of a magnetic dipole: from curl H = -i w eps0 E with H = k^2 G m
                return i * omega * constants::mu0 * curl_green_apply(r, s.r0, k, s.m);
            }
        },
        src);
}

inline std::vector<Eigen::Vector3cd> incident_field(const SourceSpec& src,
                                                    const std::vector<Eigen::Vector3d>& pts,
                                                    double omega) {
    std::vector<Eigen::Vector3cd> out;
    out.reserve(pts.size());
    for (const auto& r : pts)
        out.push_back(incident_field(src, r, omega));
    return out;
}

/// Source magnetic field at a point, free space (needed for magnetic LDOS).
inline Eigen::Vector3cd incident_field_H(const SourceSpec& src, const Eigen::Vector3d& r,
                                         double omega) {
    const double k = omega / constants::c0;
    const std::complex<double> i(0.0, 1.0);
    return std::visit(
        [&](const auto& s) -> Eigen::Vector3cd {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, PlaneWave>) {
                const Eigen::Vector3cd E = incident_field(SourceSpec{s}, r, omega);
                const Eigen::Vector3d kd = s.k_dir;
                return Eigen::Vector3cd(
                    complex_cross(kd.cast<std::complex<double>>(), E) / constants::z0);
            } else if constexpr (std::is_same_v<T, PointED>) {
                // H = -i w grad g x p
                return -i * omega * curl_green_apply(r, s.r0, k, s.p);
            } else {
                // dual of the electric-dipole E field: H = k^2 G m
                return k * k * (green_tensor(r, s.r0, k) * s.m);
            }
        },
        src);
}

/// Far-field amplitude F(n) of a point source about the global origin:
/// E_far = F e^{ikR}/R as R -> infinity along n.
inline Eigen::Vector3cd source_far_field(const SourceSpec& src, const Eigen::Vector3d& n,
                                         double omega) {
    const double k = omega / constants::c0;
    const std::complex<double> i(0.0, 1.0);
    return std::visit(
        [&](const auto& s) -> Eigen::Vector3cd {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, PlaneWave>) {
                throw ConfigError("source_far_field: plane wave has no far-field amplitude");
            } else if constexpr (std::is_same_v<T, PointED>) {
                const std::complex<double> ph = std::exp(-i * k * n.dot(s.r0));
                return (k * k / (4.0 * constants::pi * constants::eps0) * ph) *
                       (transverse_projector(n) * s.p);
            } else {
                const std::complex<double> ph = std::exp(-i * k * n.dot(s.r0));
                return (-omega * constants::mu0 * k / (4.0 * constants::pi) * ph) *
                       complex_cross(n.cast<std::complex<double>>(), s.m);
            }
        },
        src);
}

} // namespace magdda
