#pragma once

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "magdda/errors.hpp"

namespace magdda {

struct GmresOptions {
    int restart = 40;
    int max_iterations = 2000;
    double tolerance = 1e-6; // relative residual ||b - Ax|| / ||b||
};

struct GmresResult {
    int iterations = 0;
    double residual = 0.0;
};

/// Restarted GMRES with modified Gram-Schmidt orthogonalisation.
/// `matvec` applies the system operator to a vector. `x` holds the initial
/// guess on entry (pass zeros for a cold start) and the solution on exit.
inline GmresResult gmres(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& matvec,
                         const Eigen::VectorXcd& b, Eigen::VectorXcd& x,
                         const GmresOptions& opt = {}) {
    using VectorXcd = Eigen::VectorXcd;
    using complexd = std::complex<double>;

    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero(b.size());
        return {0, 0.0};
    }
    if (x.size() != b.size())
        x = VectorXcd::Zero(b.size());

    const int m = opt.restart;
    GmresResult out;

    std::vector<VectorXcd> V(static_cast<std::size_t>(m) + 1);
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m + 1, m);
    Eigen::VectorXcd cs(m), sn(m), g(m + 1);

    while (out.iterations < opt.max_iterations) {
        VectorXcd r = b - matvec(x);
        double rnorm = r.norm();
        out.residual = rnorm / bnorm;
        if (out.residual <= opt.tolerance)
            return out;

        V[0] = r / rnorm;
        g.setZero();
        g(0) = rnorm;

        int j = 0;
        for (; j < m && out.iterations < opt.max_iterations; ++j, ++out.iterations) {
            VectorXcd w = matvec(V[static_cast<std::size_t>(j)]);
            for (int i = 0; i <= j; ++i) {
                H(i, j) = V[static_cast<std::size_t>(i)].dot(w); // conjugated dot
                w -= H(i, j) * V[static_cast<std::size_t>(i)];
            }
            H(j + 1, j) = w.norm();
            if (std::abs(H(j + 1, j)) > 1e-300)
                V[static_cast<std::size_t>(j) + 1] = w / H(j + 1, j);
            else
                V[static_cast<std::size_t>(j) + 1] = VectorXcd::Zero(b.size());

            // apply stored Givens rotations to the new column
            for (int i = 0; i < j; ++i) {
                const complexd t = cs(i) * H(i, j) + sn(i) * H(i + 1, j);
                H(i + 1, j) = -std::conj(sn(i)) * H(i, j) + std::conj(cs(i)) * H(i + 1, j);
                H(i, j) = t;
            }
            // form the rotation annihilating H(j+1, j)
            const double denom =
                std::sqrt(std::norm(H(j, j)) + std::norm(H(j + 1, j)));
            if (denom > 1e-300) {
                cs(j) = std::conj(H(j, j)) / denom;
                sn(j) = std::conj(H(j + 1, j)) / denom;
            } else {
                cs(j) = 1.0;
                sn(j) = 0.0;
            }
            H(j, j) = cs(j) * H(j, j) + sn(j) * H(j + 1, j);
            H(j + 1, j) = 0.0;
            const complexd t = cs(j) * g(j);
            g(j + 1) = -std::conj(sn(j)) * g(j);
            g(j) = t;

            out.residual = std::abs(g(j + 1)) / bnorm;
            if (out.residual <= opt.tolerance) {
                ++j;
                ++out.iterations;
                break;
            }
        }

        // back-substitute the j x j triangular system and update x
        Eigen::VectorXcd y(j);
        for (int i = j - 1; i >= 0; --i) {
            complexd s = g(i);
            for (int l = i + 1; l < j; ++l)
                s -= H(i, l) * y(l);
            y(i) = s / H(i, i);
        }
        for (int i = 0; i < j; ++i)
            x += y(i) * V[static_cast<std::size_t>(i)];

        if (out.residual <= opt.tolerance)
            return out;
    }

    throw ConvergenceError("gmres: no convergence after " + std::to_string(out.iterations) +
                           " iterations (residual " + std::to_string(out.residual) + ")");
}

} // namespace magdda
