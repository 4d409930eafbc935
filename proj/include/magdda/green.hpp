#pragma once

#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "magdda/constants.hpp"

namespace magdda {

/// Free-space electromagnetic propagators, exp(-i w t) time convention.
/// The electric field of a point dipole p at r' is E(r) = (k^2/eps0) G(r,r') p,
/// with G the dyadic Green tensor
///   G = e^{ikR}/(4 pi R) [ (1 + i/(kR) - 1/(kR)^2) I
///                          + (-1 - 3i/(kR) + 3/(kR)^2) RR^/|R|^2 ].

inline Eigen::Matrix3cd green_tensor(const Eigen::Vector3d& r, const Eigen::Vector3d& rp,
                                     double k) {
    const std::complex<double> i(0.0, 1.0);
    const Eigen::Vector3d d = r - rp;
    const double R = d.norm();
    const double kR = k * R;
    const std::complex<double> g = std::exp(i * kR) / (4.0 * constants::pi * R);
    const std::complex<double> a = 1.0 + i / kR - 1.0 / (kR * kR);
    const std::complex<double> b = -1.0 - 3.0 * i / kR + 3.0 / (kR * kR);
    const Eigen::Vector3d n = d / R;
    return g * (a * Eigen::Matrix3cd::Identity() + b * (n * n.transpose()).cast<std::complex<double>>());
}

/// grad_r of the scalar Green function g(R) = e^{ikR}/(4 pi R).
inline Eigen::Vector3cd grad_green_scalar(const Eigen::Vector3d& r, const Eigen::Vector3d& rp,
                                          double k) {
    const std::complex<double> i(0.0, 1.0);
    const Eigen::Vector3d d = r - rp;
    const double R = d.norm();
    const std::complex<double> g = std::exp(i * k * R) / (4.0 * constants::pi * R);
    return (g * (i * k - 1.0 / R) / R) * d.cast<std::complex<double>>();
}

/// Bilinear cross product. Eigen's .cross() conjugates complex operands, which
/// is not the field-theory cross product.
inline Eigen::Vector3cd complex_cross(const Eigen::Vector3cd& a, const Eigen::Vector3cd& b) {
    return {a.y() * b.z() - a.z() * b.y(), a.z() * b.x() - a.x() * b.z(),
            a.x() * b.y() - a.y() * b.x()};
}

/// (curl G)(r,r') applied to a vector v: equals grad g x v, since the
/// grad-grad part of G is curl-free.
inline Eigen::Vector3cd curl_green_apply(const Eigen::Vector3d& r, const Eigen::Vector3d& rp,
                                         double k, const Eigen::Vector3cd& v) {
    return complex_cross(grad_green_scalar(r, rp, k), v);
}

/// Transverse projector I - nn^T for a unit direction n.
inline Eigen::Matrix3d transverse_projector(const Eigen::Vector3d& n) {
    return Eigen::Matrix3d::Identity() - n * n.transpose();
}

} // namespace magdda
