#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"
#include "magdda/geometry.hpp"
#include "magdda/green.hpp"
#include "magdda/krylov.hpp"
#include "magdda/material.hpp"
#include "magdda/polarizability.hpp"
#include "magdda/quadrature.hpp"
#include "magdda/source.hpp"

namespace magdda {

struct SolverOptions {
    double tolerance = 1e-6;
    int max_iterations = 2000;
    // direct LU whenever the number of unknowns (3 per active voxel) stays at
    // or below this; matrix-free Krylov above it
    int dense_threshold = 3000;
    int gmres_restart = 40;
};

/// Converged per-voxel polarization state for one (omega, source, b_z) triple.
struct FieldSolution {
    double omega = 0.0;
    double b_z = 0.0;
    std::vector<Eigen::Vector3cd> polarization; // dipole moment of each voxel, C m
    std::vector<Eigen::Vector3cd> incident;     // incident E at voxel centers, V/m
    double residual = 0.0;
    int iterations = 0;
};

/// Coupled-dipole system assembled for one grid, material table, frequency and
/// bias field. Construction factorizes (dense path) or tabulates the lattice
/// Green tensors (iterative path); solve() is then cheap per right-hand side.
///
/// The linear system is   alpha_i^-1 P_i - (k^2/eps0) sum_{j!=i} G_ij P_j = E_inc,i
/// so that P_i = alpha_i [E_inc,i + (k^2/eps0) sum_{j!=i} G_ij P_j].
class CdmSystem {
public:
    CdmSystem(const VoxelGrid& grid, const std::vector<Material>& materials, double omega,
              double b_z, SolverOptions options = {})
        : grid_(&grid), omega_(omega), b_z_(b_z), k_(omega / constants::c0), opt_(options) {
        if (omega <= 0.0)
            throw ConfigError("CdmSystem: omega must be positive");
        const std::size_t n = grid.size();
        const double volume = grid.voxel_volume();

        alpha_.resize(n);
        alpha_inv_.resize(n);
        active_.resize(n, false);
        const double alpha_scale = 3.0 * volume * constants::eps0;
        for (std::size_t i = 0; i < n; ++i) {
            const int id = grid.material[i];
            if (id < 0 || static_cast<std::size_t>(id) >= materials.size())
                throw ConfigError("CdmSystem: voxel material id out of range");
            const Eigen::Matrix3cd eps = materials[static_cast<std::size_t>(id)]
                                             .permittivity(omega, b_z);
            alpha_[i] = voxel_polarizability(eps, volume, k_);
            if (alpha_[i].norm() > 1e-14 * alpha_scale) {
                active_[i] = true;
                active_index_.push_back(i);
                alpha_inv_[i] = alpha_[i].inverse();
            } else {
                alpha_[i].setZero();
                alpha_inv_[i].setZero();
            }
        }

        const std::size_t n_act = active_index_.size();
        dense_ = static_cast<int>(3 * n_act) <= opt_.dense_threshold;
        if (n_act == 0)
            return;
        if (dense_)
            assemble_dense();
        else
            build_table();
    }

    const VoxelGrid& grid() const { return *grid_; }
    double omega() const { return omega_; }
    double b_z() const { return b_z_; }
    double wavenumber() const { return k_; }
    bool dense() const { return dense_; }
    std::size_t active_count() const { return active_index_.size(); }
    const Eigen::Matrix3cd& alpha(std::size_t i) const { return alpha_[i]; }

    FieldSolution solve(const SourceSpec& source, const FieldSolution* warm = nullptr) const {
        FieldSolution sol;
        sol.omega = omega_;
        sol.b_z = b_z_;
        sol.incident = incident_field(source, grid_->centers, omega_);
        sol.polarization.assign(grid_->size(), Eigen::Vector3cd::Zero());

        const std::size_t n_act = active_index_.size();
        if (n_act == 0)
            return sol;

        Eigen::VectorXcd b(3 * n_act);
        for (std::size_t a = 0; a < n_act; ++a)
            b.segment<3>(3 * static_cast<Eigen::Index>(a)) = sol.incident[active_index_[a]];

        Eigen::VectorXcd x;
        if (dense_) {
            x = lu_.solve(b);
            sol.iterations = 1;
            sol.residual = b.norm() > 0.0 ? (apply_operator(x) - b).norm() / b.norm() : 0.0;
        } else {
            // right-preconditioned GMRES: solve A diag(alpha) u = b, P = alpha u,
            // so the reported residual is the true residual of the raw system
            Eigen::VectorXcd u = Eigen::VectorXcd::Zero(3 * n_act);
            if (warm != nullptr && warm->polarization.size() == grid_->size()) {
                for (std::size_t a = 0; a < n_act; ++a) {
                    const std::size_t i = active_index_[a];
                    u.segment<3>(3 * static_cast<Eigen::Index>(a)) =
                        alpha_inv_[i] * warm->polarization[i];
                }
            }
            GmresOptions gopt;
            gopt.restart = opt_.gmres_restart;
            gopt.max_iterations = opt_.max_iterations;
            gopt.tolerance = opt_.tolerance;
            const auto matvec = [this](const Eigen::VectorXcd& v) {
                return apply_operator(scale_by_alpha(v));
            };
            const GmresResult res = gmres(matvec, b, u, gopt);
            x = scale_by_alpha(u);
            sol.iterations = res.iterations;
            sol.residual = res.residual;
        }

        for (std::size_t a = 0; a < n_act; ++a)
            sol.polarization[active_index_[a]] = x.segment<3>(3 * static_cast<Eigen::Index>(a));
        return sol;
    }

    /// Exciting field alpha_i^-1 P_i at voxel i (incident plus all other voxels).
    Eigen::Vector3cd exciting_field(const FieldSolution& sol, std::size_t i) const {
        return alpha_inv_[i] * sol.polarization[i];
    }

    /// Ohmic power deposited in the voxels, W. The radiative-reaction part of
    /// Im(alpha) is subtracted so lossless media absorb exactly zero.
    double absorbed_power(const FieldSolution& sol) const {
        const double rad = k_ * k_ * k_ / (6.0 * constants::pi * constants::eps0);
        double p = 0.0;
        for (std::size_t a = 0; a < active_index_.size(); ++a) {
            const std::size_t i = active_index_[a];
            const Eigen::Vector3cd& pi = sol.polarization[i];
            const Eigen::Vector3cd ex = alpha_inv_[i] * pi;
            // Im(P . E_exc*), dot over components without conjugating P
            const std::complex<double> pe = pi(0) * std::conj(ex(0)) + pi(1) * std::conj(ex(1)) +
                                            pi(2) * std::conj(ex(2));
            p += std::imag(pe) - rad * pi.squaredNorm();
        }
        return 0.5 * omega_ * p;
    }

    /// Extinction cross section from the optical theorem, m^2 (plane wave only).
    double extinction(const FieldSolution& sol, const PlaneWave& pw) const {
        double s = 0.0;
        for (std::size_t i = 0; i < grid_->size(); ++i) {
            const Eigen::Vector3cd& e = sol.incident[i];
            const Eigen::Vector3cd& pi = sol.polarization[i];
            const std::complex<double> ep = std::conj(e(0)) * pi(0) + std::conj(e(1)) * pi(1) +
                                            std::conj(e(2)) * pi(2);
            s += std::imag(ep);
        }
        return k_ / (constants::eps0 * pw.amplitude * pw.amplitude) * s;
    }

private:
    void assemble_dense() {
        const std::size_t n_act = active_index_.size();
        const double coupling = k_ * k_ / constants::eps0;
        A_.resize(3 * n_act, 3 * n_act);
        for (std::size_t a = 0; a < n_act; ++a) {
            for (std::size_t b = 0; b < n_act; ++b) {
                Eigen::Matrix3cd blk;
                if (a == b)
                    blk = alpha_inv_[active_index_[a]];
                else
                    blk = -coupling * green_tensor(grid_->centers[active_index_[a]],
                                                   grid_->centers[active_index_[b]], k_);
                A_.block<3, 3>(3 * static_cast<Eigen::Index>(a),
                               3 * static_cast<Eigen::Index>(b)) = blk;
            }
        }
        lu_.compute(A_);
    }

    void build_table() {
        Eigen::Vector3i lo = grid_->index.front(), hi = grid_->index.front();
        for (const Eigen::Vector3i& ix : grid_->index) {
            lo = lo.cwiseMin(ix);
            hi = hi.cwiseMax(ix);
        }
        dim_ = hi - lo + Eigen::Vector3i::Ones();
        tdim_ = 2 * dim_ - Eigen::Vector3i::Ones();
        table_.assign(static_cast<std::size_t>(tdim_.x()) * tdim_.y() * tdim_.z(),
                      Eigen::Matrix3cd::Zero());
        const double coupling = k_ * k_ / constants::eps0;
        const double h = grid_->spacing;
        for (int dz = -(dim_.z() - 1); dz <= dim_.z() - 1; ++dz)
            for (int dy = -(dim_.y() - 1); dy <= dim_.y() - 1; ++dy)
                for (int dx = -(dim_.x() - 1); dx <= dim_.x() - 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0)
                        continue;
                    const Eigen::Vector3d r(h * dx, h * dy, h * dz);
                    table_[table_slot(dx, dy, dz)] =
                        coupling * green_tensor(r, Eigen::Vector3d::Zero(), k_);
                }
    }

    std::size_t table_slot(int dx, int dy, int dz) const {
        const std::size_t ix = static_cast<std::size_t>(dx + dim_.x() - 1);
        const std::size_t iy = static_cast<std::size_t>(dy + dim_.y() - 1);
        const std::size_t iz = static_cast<std::size_t>(dz + dim_.z() - 1);
        return (iz * static_cast<std::size_t>(tdim_.y()) + iy) * tdim_.x() + ix;
    }

    Eigen::VectorXcd scale_by_alpha(const Eigen::VectorXcd& v) const {
        Eigen::VectorXcd out(v.size());
        for (std::size_t a = 0; a < active_index_.size(); ++a)
            out.segment<3>(3 * static_cast<Eigen::Index>(a)) =
                alpha_[active_index_[a]] * v.segment<3>(3 * static_cast<Eigen::Index>(a));
        return out;
    }

    Eigen::VectorXcd apply_operator(const Eigen::VectorXcd& v) const {
        const std::size_t n_act = active_index_.size();
        if (dense_)
            return A_ * v;
        Eigen::VectorXcd out(3 * n_act);
        for (std::size_t a = 0; a < n_act; ++a) {
            const Eigen::Vector3i ia = grid_->index[active_index_[a]];
            Eigen::Vector3cd acc = alpha_inv_[active_index_[a]] *
                                   v.segment<3>(3 * static_cast<Eigen::Index>(a));
            for (std::size_t b = 0; b < n_act; ++b) {
                if (b == a)
                    continue;
                const Eigen::Vector3i d = ia - grid_->index[active_index_[b]];
                acc.noalias() -= table_[table_slot(d.x(), d.y(), d.z())] *
                                 v.segment<3>(3 * static_cast<Eigen::Index>(b));
            }
            out.segment<3>(3 * static_cast<Eigen::Index>(a)) = acc;
        }
        return out;
    }

    const VoxelGrid* grid_;
    double omega_, b_z_, k_;
    SolverOptions opt_;
    std::vector<Eigen::Matrix3cd> alpha_, alpha_inv_;
    std::vector<bool> active_;
    std::vector<std::size_t> active_index_;
    bool dense_ = false;
    Eigen::MatrixXcd A_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
    Eigen::Vector3i dim_ = Eigen::Vector3i::Zero(), tdim_ = Eigen::Vector3i::Zero();
    std::vector<Eigen::Matrix3cd> table_;
};

/// Scattered electric field of a solution at an exterior point, V/m.
inline Eigen::Vector3cd scattered_E(const FieldSolution& sol, const VoxelGrid& grid,
                                    const Eigen::Vector3d& r) {
    const double k = sol.omega / constants::c0;
    const double coupling = k * k / constants::eps0;
    Eigen::Vector3cd e = Eigen::Vector3cd::Zero();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (sol.polarization[i].isZero(0.0))
            continue;
        e += coupling * (green_tensor(r, grid.centers[i], k) * sol.polarization[i]);
    }
    return e;
}

/// Scattered magnetic field of a solution at an exterior point, A/m.
inline Eigen::Vector3cd scattered_H(const FieldSolution& sol, const VoxelGrid& grid,
                                    const Eigen::Vector3d& r) {
    const std::complex<double> i1(0.0, 1.0);
    const double k = sol.omega / constants::c0;
    Eigen::Vector3cd h = Eigen::Vector3cd::Zero();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (sol.polarization[i].isZero(0.0))
            continue;
        h += -i1 * sol.omega *
             complex_cross(grad_green_scalar(r, grid.centers[i], k), sol.polarization[i]);
    }
    return h;
}

/// Radiation amplitude F(n) of the induced dipoles, defined through
/// E_s -> F(n) exp(ikr)/r in the far zone; V (volts).
inline Eigen::Vector3cd scattered_far_field(const FieldSolution& sol, const VoxelGrid& grid,
                                            const Eigen::Vector3d& n) {
    const std::complex<double> i1(0.0, 1.0);
    const double k = sol.omega / constants::c0;
    const double pref = k * k / (4.0 * constants::pi * constants::eps0);
    const Eigen::Matrix3d proj = transverse_projector(n);
    Eigen::Vector3cd f = Eigen::Vector3cd::Zero();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (sol.polarization[i].isZero(0.0))
            continue;
        const std::complex<double> phase = std::exp(-i1 * k * n.dot(grid.centers[i]));
        f += pref * phase * (proj * sol.polarization[i]);
    }
    return f;
}

/// Power radiated by a far-field amplitude integrated over all directions, W.
/// `total_amplitude` maps a unit direction to F(n); dP/dOmega = |F|^2/(2 Z0).
template <typename AmplitudeFn>
double radiated_power(const AmplitudeFn& total_amplitude, const SphereQuadrature& quad) {
    double p = 0.0;
    for (std::size_t q = 0; q < quad.dirs.size(); ++q) {
        const Eigen::Vector3cd f = total_amplitude(quad.dirs[q]);
        p += quad.weights[q] * f.squaredNorm();
    }
    return p / (2.0 * constants::z0);
}

/// Scattering cross section by far-field quadrature of the induced dipoles, m^2.
inline double far_field_csca(const FieldSolution& sol, const VoxelGrid& grid, double e_inc,
                             const SphereQuadrature& quad) {
    if (e_inc <= 0.0)
        throw ConfigError("far_field_csca: incident amplitude must be positive");
    const double p = radiated_power(
        [&](const Eigen::Vector3d& n) { return scattered_far_field(sol, grid, n); }, quad);
    const double intensity = e_inc * e_inc / (2.0 * constants::z0);
    return p / intensity;
}

} // namespace magdda
