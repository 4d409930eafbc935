#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"

namespace magdda {

struct Sphere {
    double radius = 0.0; // [m]
};

/// Solid cylinder, axis along z, centered at the origin.
struct Cylinder {
    double radius = 0.0; // [m]
    double height = 0.0; // [m]
};

/// Two stacked cylinder segments sharing one axis (z) and radius; the lower
/// segment occupies [-H/2, -H/2 + h_lower], H = h_lower + h_upper.
struct HybridCylinder {
    double radius = 0.0;
    double h_lower = 0.0;
    double h_upper = 0.0;
};

using Shape = std::variant<Sphere, Cylinder, HybridCylinder>;

/// Cubic-lattice voxelization of a shape. The lattice origin coincides with
/// the shape center; a lattice point belongs to the grid when the point lies
/// inside or on the shape boundary.
struct VoxelGrid {
    double spacing = 0.0;                 // lattice constant [m]
    std::vector<Eigen::Vector3d> centers; // voxel centers [m]
    std::vector<Eigen::Vector3i> index;   // integer lattice coordinates
    std::vector<int> material;            // per-voxel material id

    std::size_t size() const { return centers.size(); }
    double voxel_volume() const { return spacing * spacing * spacing; }
};

inline constexpr std::size_t default_voxel_budget = 200000;

namespace detail {

// slack absorbs roundoff so boundary lattice points stay included
inline constexpr double boundary_slack = 1.0 + 1e-12;

inline bool contains(const Sphere& s, const Eigen::Vector3d& r) {
    return r.squaredNorm() <= s.radius * s.radius * boundary_slack;
}

inline bool contains(const Cylinder& c, const Eigen::Vector3d& r) {
    const double rho2 = r.x() * r.x() + r.y() * r.y();
    return rho2 <= c.radius * c.radius * boundary_slack &&
           std::abs(r.z()) <= 0.5 * c.height * boundary_slack;
}

inline bool contains(const HybridCylinder& h, const Eigen::Vector3d& r) {
    const double rho2 = r.x() * r.x() + r.y() * r.y();
    const double H = h.h_lower + h.h_upper;
    return rho2 <= h.radius * h.radius * boundary_slack &&
           std::abs(r.z()) <= 0.5 * H * boundary_slack;
}

// material id for a contained point: 0 except the upper hybrid segment
inline int material_at(const Sphere&, const Eigen::Vector3d&) { return 0; }
inline int material_at(const Cylinder&, const Eigen::Vector3d&) { return 0; }
inline int material_at(const HybridCylinder& h, const Eigen::Vector3d& r) {
    // interface plane; ties go to the lower segment
    const double z_if = -0.5 * (h.h_lower + h.h_upper) + h.h_lower;
    const double tol = 1e-12 * (std::abs(z_if) + h.radius);
    return r.z() <= z_if + tol ? 0 : 1;
}

inline Eigen::Vector3d half_extent(const Sphere& s) {
    return {s.radius, s.radius, s.radius};
}
inline Eigen::Vector3d half_extent(const Cylinder& c) {
    return {c.radius, c.radius, 0.5 * c.height};
}
inline Eigen::Vector3d half_extent(const HybridCylinder& h) {
    return {h.radius, h.radius, 0.5 * (h.h_lower + h.h_upper)};
}

} // namespace detail

inline VoxelGrid voxelize(const Shape& shape, double spacing,
                          std::size_t budget = default_voxel_budget) {
    if (spacing <= 0.0)
        throw ConfigError("voxelize: spacing must be positive");
    VoxelGrid g;
    g.spacing = spacing;
    std::visit(
        [&](const auto& s) {
            const Eigen::Vector3d ext = detail::half_extent(s);
            const int nx = static_cast<int>(std::floor(ext.x() / spacing * detail::boundary_slack));
            const int ny = static_cast<int>(std::floor(ext.y() / spacing * detail::boundary_slack));
            const int nz = static_cast<int>(std::floor(ext.z() / spacing * detail::boundary_slack));
            for (int i = -nx; i <= nx; ++i)
                for (int j = -ny; j <= ny; ++j)
                    for (int k = -nz; k <= nz; ++k) {
                        const Eigen::Vector3d r(i * spacing, j * spacing, k * spacing);
                        if (!detail::contains(s, r))
                            continue;
                        g.centers.push_back(r);
                        g.index.emplace_back(i, j, k);
                        g.material.push_back(detail::material_at(s, r));
                        if (g.size() > budget)
                            throw GridError("voxelize: voxel budget exceeded (" +
                                            std::to_string(budget) + ")");
                    }
        },
        shape);
    if (g.centers.empty())
        throw GridError("voxelize: no lattice point falls inside the shape");
    return g;
}

/// Discretization quality |m| k h: largest refractive-index magnitude among
/// the permittivity eigenvalues times free-space wavenumber times spacing.
/// Rule of thumb: fine below 0.5, unreliable above 1.
inline double validity_metric(const Eigen::Matrix3cd& eps, double omega, double spacing) {
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(eps, /*computeEigenvectors=*/false);
    double m_max = 0.0;
    for (int i = 0; i < 3; ++i)
        m_max = std::max(m_max, std::abs(std::sqrt(es.eigenvalues()(i))));
    return m_max * (omega / constants::c0) * spacing;
}

inline double validity_metric(std::complex<double> eps, double omega, double spacing) {
    return std::abs(std::sqrt(eps)) * (omega / constants::c0) * spacing;
}

/// Spacing that keeps validity_metric at 0.5 for the worst-case index at the
/// top frequency, capped so the smallest shape radius spans >= 4 voxels.
inline double auto_spacing(double max_abs_m, double k_top, double min_radius) {
    if (max_abs_m <= 0.0 || k_top <= 0.0 || min_radius <= 0.0)
        throw ConfigError("auto_spacing: arguments must be positive");
    return std::min(0.5 / (max_abs_m * k_top), min_radius / 4.0);
}

} // namespace magdda
