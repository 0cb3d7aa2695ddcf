#include "vofd/resolvent.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "vofd/error.hpp"

namespace vofd {

namespace {

constexpr std::size_t kMaxCachedFactorizations = 4096;
constexpr int kRefinementSteps = 3;

/// Uniform double in [0, 1) from the top 53 bits, independent of the
/// standard library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

ComplexShift ComplexShift::from(Complex p) {
    if (!std::isfinite(p.real()) || !std::isfinite(p.imag()))
        throw Error(ErrorCode::domain_error, "shift p must be finite");
    if (p.imag() == 0.0 && p.real() <= 0.0) {
        std::ostringstream msg;
        msg << "p = " << p.real() << " lies on the closed negative half-line";
        throw Error(ErrorCode::branch_cut, msg.str());
    }
    return ComplexShift{p, std::abs(p), std::arg(p)};
}

ComplexVector nodal_power(const ComplexShift& shift, const Vector& exponents) {
    const Complex log_p(std::log(shift.r), shift.beta);
    ComplexVector out(exponents.size());
    for (Eigen::Index i = 0; i < exponents.size(); ++i) out[i] = std::exp(exponents[i] * log_p);
    return out;
}

struct ShiftedSolver::Factorization {
    ComplexSparseMatrix matrix;
    Eigen::SparseLU<ComplexSparseMatrix> lu;
};

ShiftedSolver::ShiftedSolver(const EllipticOperator& op, const CoefficientField& field, double rel_tol)
    : op_(std::make_shared<EllipticOperator>(op)),
      field_(std::make_shared<CoefficientField>(field)),
      tol_(rel_tol) {
    if (field.size() != op.size())
        throw Error(ErrorCode::shape_error, "coefficient field and operator sizes differ");
}

ComplexSparseMatrix ShiftedSolver::system_matrix(Complex p) const {
    const ComplexShift shift = ComplexShift::from(p);
    const ComplexVector pa = nodal_power(shift, field_->alpha);
    ComplexSparseMatrix m = op_->matrix().cast<Complex>();
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += field_->rho[i] * pa[i];
    m.makeCompressed();
    return m;
}

std::shared_ptr<const ShiftedSolver::Factorization> ShiftedSolver::factor(Complex p) const {
    const std::pair<double, double> key{p.real(), p.imag()};
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto f = std::make_shared<Factorization>();
    f->matrix = system_matrix(p);
    f->lu.analyzePattern(f->matrix);
    f->lu.factorize(f->matrix);
    if (f->lu.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "sparse LU failed at p = (" << p.real() << ", " << p.imag() << ")";
        throw Error(ErrorCode::solve_failure, msg.str());
    }
    std::lock_guard lock(mutex_);
    if (cache_.size() >= kMaxCachedFactorizations) cache_.clear();
    return cache_.emplace(key, std::move(f)).first->second;
}

Eigen::MatrixXcd ShiftedSolver::solve(Complex p, const Eigen::MatrixXcd& rhs) const {
    if (static_cast<std::size_t>(rhs.rows()) != op_->size())
        throw Error(ErrorCode::shape_error, "right-hand side length does not match the interior node count");
    const auto f = factor(p);
    Eigen::MatrixXcd x = f->lu.solve(rhs);
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        const double rhs_norm = rhs.col(c).norm();
        if (rhs_norm == 0.0) {
            x.col(c).setZero();
            continue;
        }
        double res = 0.0;
        for (int step = 0; step <= kRefinementSteps; ++step) {
            const ComplexVector r = rhs.col(c) - f->matrix * x.col(c);
            res = r.norm();
            if (res <= tol_ * rhs_norm || step == kRefinementSteps) break;
            x.col(c) += f->lu.solve(r);
        }
        if (!(res <= tol_ * rhs_norm)) {
            std::ostringstream msg;
            msg << "relative residual " << res / rhs_norm << " exceeds " << tol_ << " at p = (" << p.real()
                << ", " << p.imag() << ")";
            throw Error(ErrorCode::solve_failure, msg.str());
        }
    }
    return x;
}

ComplexVector ShiftedSolver::solve(Complex p, const ComplexVector& rhs) const {
    return solve(p, Eigen::MatrixXcd(rhs)).col(0);
}

std::size_t ShiftedSolver::cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

void ShiftedSolver::clear_cache() const {
    std::lock_guard lock(mutex_);
    cache_.clear();
}

ComplexVector shifted_solve(const EllipticOperator& op, const CoefficientField& field, Complex p,
                            const ComplexVector& rhs, double rel_tol) {
    return ShiftedSolver(op, field, rel_tol).solve(p, rhs);
}

double theta_star(double r, const CoefficientField& field) {
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::domain_error, "theta_star needs r > 0");
    const double ratio = field.rho0 / (3.0 * field.rhoM);
    const double spread = field.alphaM - field.alpha0;
    const double up = std::atan(ratio * std::pow(r, spread));
    const double down = std::atan(ratio * std::pow(r, -spread));
    return std::min(up, down) / field.alphaM;
}

BoundReport resolvent_bound(double r, double beta, const CoefficientField& field) {
    if (!(std::abs(beta) < std::numbers::pi))
        throw Error(ErrorCode::domain_error, "resolvent bound needs |beta| < pi");
    BoundReport rep;
    rep.r = r;
    rep.beta = beta;
    rep.theta_star = theta_star(r, field);
    rep.estimated_norm = std::numeric_limits<double>::quiet_NaN();
    rep.near_threshold = std::abs(std::abs(beta) - rep.theta_star) <= 1e-6;
    if (std::abs(beta) <= rep.theta_star) {
        rep.c_star = std::numeric_limits<double>::quiet_NaN();
        rep.C = 2.0 / field.rho0;
    } else {
        double c = 0.0;
        for (double a : {field.alpha0, field.alphaM}) {
            const double s = std::abs(std::sin(a * beta));
            if (s == 0.0) throw Error(ErrorCode::unbounded_estimate, "sin(alpha_j beta) vanishes");
            c = std::max(c, 1.0 / s);
        }
        rep.c_star = c;
        rep.C = c / field.rho0;
    }
    rep.bound = rep.C * std::max(std::pow(r, -field.alpha0), std::pow(r, -field.alphaM));
    return rep;
}

BoundReport verify_bound(const EllipticOperator& op, const CoefficientField& field, Complex p,
                         const NormEstimateOptions& options) {
    const ComplexShift shift = ComplexShift::from(p);
    BoundReport rep = resolvent_bound(shift.r, shift.beta, field);
    const ShiftedSolver solver(op, field);
    const auto n = static_cast<Eigen::Index>(op.size());

    // H = M^{-H} M^{-1}; M is complex symmetric so M^{-H} y = conj(M^{-1} conj(y)).
    auto apply_h = [&](const ComplexVector& v) -> ComplexVector {
        const ComplexVector y = solver.solve(p, v);
        return solver.solve(p, ComplexVector(y.conjugate())).conjugate();
    };

    std::mt19937_64 rng(options.seed);
    ComplexVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = Complex(unit_uniform(rng) - 0.5, unit_uniform(rng) - 0.5);
    v.normalize();

    // Lanczos with full reorthogonalization; the largest Ritz value never
    // exceeds the largest eigenvalue of H.
    const int cap = static_cast<int>(std::min<Eigen::Index>(options.max_iterations, n));
    std::vector<ComplexVector> basis{v};
    std::vector<double> diag, off;
    double ritz = 0.0;
    bool converged = false;
    for (int j = 0; j < cap; ++j) {
        ComplexVector w = apply_h(basis.back());
        diag.push_back(basis.back().dot(w).real());
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) w -= b.dot(w) * b;
        const double beta_j = w.norm();

        const auto m = static_cast<Eigen::Index>(diag.size());
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            t(i, i) = diag[static_cast<std::size_t>(i)];
            if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = off[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        ritz = es.eigenvalues()[m - 1];
        const double residual = beta_j * std::abs(es.eigenvectors()(m - 1, m - 1));
        rep.iterations = j + 1;
        if (residual <= options.tol * ritz || beta_j <= 1e-14 * ritz || m == n) {
            converged = true;
            break;
        }
        off.push_back(beta_j);
        basis.push_back(w / beta_j);
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "norm estimate did not converge in " << cap << " iterations";
        throw Error(ErrorCode::estimate_failure, msg.str());
    }
    rep.estimated_norm = std::sqrt(std::max(ritz, 0.0));
    rep.satisfied = rep.estimated_norm <= rep.bound * (1.0 + 1e-9);
    return rep;
}

double envelope_constant(const CoefficientField& field, double r_lo, double r_hi, int n_r, int n_beta) {
    const double spread = field.alphaM - field.alpha0;
    double k = 0.0;
    for (int i = 0; i < n_r; ++i) {
        const double r = r_lo * std::pow(r_hi / r_lo, n_r > 1 ? static_cast<double>(i) / (n_r - 1) : 0.0);
        const double env = std::max(std::pow(r, spread), std::pow(r, -spread));
        const double ts = theta_star(r, field);
        // The supremum over beta sits just outside the sector or, when some
        // alpha exceeds 1/2, next to the cut at beta = pi, so probe both.
        std::vector<double> betas{ts, std::nextafter(ts, std::numbers::pi), std::nextafter(std::numbers::pi, 0.0)};
        for (int j = 1; j < n_beta; ++j) betas.push_back(-std::numbers::pi + 2.0 * std::numbers::pi * j / n_beta);
        for (double b : betas) k = std::max(k, resolvent_bound(r, b, field).C / env);
    }
    return k;
}

}  // namespace vofd
