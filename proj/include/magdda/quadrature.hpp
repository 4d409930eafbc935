#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"

namespace magdda {

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    if (n < 1)
        throw ConfigError("gauss_legendre: need n >= 1");
    std::vector<double> x(n), w(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Tricomi initial guess
        double z = std::cos(constants::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15)
                break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
    return {x, w};
}

/// Full-sphere angular quadrature: Gauss-Legendre in cos(theta) crossed with
/// a uniform (trapezoidal) azimuthal grid. Weights sum to 4 pi.
struct SphereQuadrature {
    std::vector<Eigen::Vector3d> dirs;
    std::vector<double> weights;

    int n_polar = 0;
    int n_azimuth = 0;

    static SphereQuadrature product(int n_polar, int n_azimuth) {
        if (n_polar < 1 || n_azimuth < 1)
            throw ConfigError("SphereQuadrature: node counts must be positive");
        SphereQuadrature q;
        q.n_polar = n_polar;
        q.n_azimuth = n_azimuth;
        const auto [x, w] = gauss_legendre(n_polar);
        const double dphi = 2.0 * constants::pi / n_azimuth;
        q.dirs.reserve(static_cast<std::size_t>(n_polar) * n_azimuth);
        q.weights.reserve(q.dirs.capacity());
        for (int i = 0; i < n_polar; ++i) {
            const double ct = x[i];
            const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
            for (int j = 0; j < n_azimuth; ++j) {
                const double phi = dphi * j;
                q.dirs.emplace_back(st * std::cos(phi), st * std::sin(phi), ct);
                q.weights.push_back(w[i] * dphi);
            }
        }
        return q;
    }

    /// Same quadrature with both angular steps halved.
    SphereQuadrature refined() const { return product(2 * n_polar, 2 * n_azimuth); }
};

inline constexpr int default_polar_nodes = 32;
inline constexpr int default_azimuth_nodes = 64;

inline const SphereQuadrature& default_sphere_quadrature() {
    static const SphereQuadrature q =
        SphereQuadrature::product(default_polar_nodes, default_azimuth_nodes);
    return q;
}

} // namespace magdda
