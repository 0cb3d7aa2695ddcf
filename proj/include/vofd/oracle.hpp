#pragma once

#include <complex>
#include <span>
#include <vector>

#include "vofd/contour.hpp"
#include "vofd/grid.hpp"

namespace vofd {

/// Two-parameter Mittag-Leffler function E_{alpha,beta}(z) for alpha in
/// (0, 1] and beta > 0, to about 1e-10 relative accuracy.
///
/// Small arguments use the power series; larger ones invert the Laplace
/// transform s^{alpha-beta} / (s^alpha - z) at t = 1 on a parabolic contour,
/// adding the residue of the pole when it lies right of the contour.
Complex mittag_leffler(double alpha, double beta, Complex z);
inline double mittag_leffler(double alpha, double beta, double z) {
    return mittag_leffler(alpha, beta, Complex(z, 0.0)).real();
}

/// Eigen-expansion solution sum_k E_alpha(-(lambda_k / rho) t^alpha) <u0, phi_k> phi_k
/// for constant alpha and rho (dense eigendecomposition of A_q).
SolutionSnapshot co_reference_solution(const EllipticOperator& op, const CoefficientField& field,
                                       const Vector& u0, double t);
std::vector<SolutionSnapshot> co_reference_solution(const EllipticOperator& op, const CoefficientField& field,
                                                    const Vector& u0, std::span<const double> times);

/// L1 weights b_j = (j+1)^{1-alpha} - j^{1-alpha}, j = 0..n_steps-1, and the
/// scale dt^{-alpha} / Gamma(2 - alpha) multiplying the weighted differences.
struct L1Weights {
    std::vector<double> b;
    double scale = 0.0;
};
L1Weights caputo_l1_weights(double alpha, double dt, int n_steps);

/// Discrete Caputo derivative at t_n = n dt of a sampled history u_0..u_n.
double l1_derivative(const L1Weights& w, std::span<const double> history);

struct L1Options {
    long step_cap = 200000;
    /// Add (f(0) - A_q u0) / 2 to the first step. Without it the scheme is
    /// only O(dt / t) accurate for data that is not smooth at t = 0.
    bool first_step_correction = true;
    /// Times to report (multiples of dt up to rounding); all steps when empty.
    std::vector<double> report_times;
};

/// Implicit L1 time stepping of (rho d_t^alpha + A_q) u = f with full memory.
std::vector<SolutionSnapshot> l1_solve(const EllipticOperator& op, const CoefficientField& field, const Vector& u0,
                                       const Source& f, double dt, double T, const L1Options& options = {});

}  // namespace vofd
