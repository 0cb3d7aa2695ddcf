#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "vofd/grid.hpp"

namespace vofd {

using Complex = std::complex<double>;
using ComplexSparseMatrix = Eigen::SparseMatrix<Complex>;

/// A Laplace variable off the closed negative half-line, in polar form.
struct ComplexShift {
    Complex p;
    double r = 0.0;
    double beta = 0.0;  // principal argument in (-pi, pi)

    /// Throws Error(branch_cut) for p in (-inf, 0].
    static ComplexShift from(Complex p);
};

/// Nodewise principal power p^{a_i} = exp(a_i (ln r + i beta)).
ComplexVector nodal_power(const ComplexShift& shift, const Vector& exponents);

/// Cached sparse LU solves of (A_q + rho p^alpha) u = rhs.
///
/// Factorizations are keyed by the exact value of p, so quadrature rules that
/// reuse nodes share them. All member functions are safe to call from
/// several threads.
class ShiftedSolver {
public:
    ShiftedSolver(const EllipticOperator& op, const CoefficientField& field, double rel_tol = 1e-12);

    ComplexVector solve(Complex p, const ComplexVector& rhs) const;
    Eigen::MatrixXcd solve(Complex p, const Eigen::MatrixXcd& rhs) const;

    ComplexSparseMatrix system_matrix(Complex p) const;

    const EllipticOperator& op() const noexcept { return *op_; }
    const CoefficientField& field() const noexcept { return *field_; }
    double tolerance() const noexcept { return tol_; }

    std::size_t cache_size() const;
    void clear_cache() const;

    struct Factorization;

private:
    std::shared_ptr<const Factorization> factor(Complex p) const;

    std::shared_ptr<const EllipticOperator> op_;
    std::shared_ptr<const CoefficientField> field_;
    double tol_;
    mutable std::mutex mutex_;
    mutable std::map<std::pair<double, double>, std::shared_ptr<const Factorization>> cache_;
};

/// One-off shifted solve with residual check (default 1e-12 relative).
ComplexVector shifted_solve(const EllipticOperator& op, const CoefficientField& field, Complex p,
                            const ComplexVector& rhs, double rel_tol = 1e-12);

/// Resolvent bound data at r = |p|, beta = arg p.
struct BoundReport {
    double r = 0.0;
    double beta = 0.0;
    double theta_star = 0.0;
    double c_star = 0.0;  // NaN inside the sector |beta| <= theta_star
    double C = 0.0;
    double bound = 0.0;
    double estimated_norm = 0.0;  // NaN until verify_bound fills it
    bool satisfied = false;
    /// |beta| within 1e-6 of theta_star, where C jumps between branches.
    bool near_threshold = false;
    int iterations = 0;
};

/// Sector half-angle below which the resolvent bound uses 2/rho0.
double theta_star(double r, const CoefficientField& field);

/// Bound part of the report: C(r, beta) and C * max(r^{-alpha0}, r^{-alphaM}).
BoundReport resolvent_bound(double r, double beta, const CoefficientField& field);

/// Options for the largest singular value estimate of the inverse.
struct NormEstimateOptions {
    double tol = 1e-8;
    int max_iterations = 500;
    unsigned seed = 12345;
};

/// Resolvent bound plus the estimated operator norm of (A_q + rho p^alpha)^{-1}.
BoundReport verify_bound(const EllipticOperator& op, const CoefficientField& field, Complex p,
                         const NormEstimateOptions& options = {});

/// Largest constant K with C(r,beta) = K max_sigma r^{sigma(alphaM - alpha0)} over a
/// log-uniform r grid on [r_lo, r_hi] and `n_beta` angles in (-pi, pi).
double envelope_constant(const CoefficientField& field, double r_lo, double r_hi, int n_r = 121,
                         int n_beta = 401);

}  // namespace vofd
