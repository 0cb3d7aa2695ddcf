#include "vofd/oracle.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vofd/error.hpp"

namespace vofd {

namespace {

constexpr double kPi = std::numbers::pi;

Complex ml_series(double alpha, double beta, Complex z) {
    Complex sum = 0.0;
    Complex zn = 1.0;  // z^n
    double peak = 0.0;
    for (int n = 0; n < 20000; ++n) {
        const double arg = alpha * n + beta;
        // 1/Gamma vanishes at the poles 0, -1, ...; beta > 0 keeps arg positive.
        const Complex term = zn * std::exp(-std::lgamma(arg));
        sum += term;
        peak = std::max(peak, std::abs(term));
        if (n > 2 && std::abs(term) <= 1e-17 * std::max(std::abs(sum), 1e-300) && std::abs(term) < peak) return sum;
        if (std::abs(zn) == 0.0) return sum;
        zn *= z;
    }
    throw Error(ErrorCode::evaluation_error, "Mittag-Leffler series did not converge");
}

/// Inverse Laplace transform at t = 1 along s = mu (1 + iu)^2, trapezoid
/// rule on [-U, U] with step h.
Complex ml_parabola(double alpha, double beta, Complex z, double mu, double h) {
    const int half = static_cast<int>(std::ceil(std::sqrt(1.0 + 40.0 / mu) / h));
    Complex sum = 0.0;
    for (int k = -half; k <= half; ++k) {
        const double u = k * h;
        const Complex w(1.0, u);
        const Complex s = mu * w * w;
        const Complex ds = 2.0 * mu * w * Complex(0.0, 1.0);
        const Complex log_s = std::log(s);
        const Complex f = std::exp((alpha - beta) * log_s) / (std::exp(alpha * log_s) - z);
        sum += std::exp(s) * f * ds;
    }
    return sum * h / (2.0 * kPi * Complex(0.0, 1.0));
}

Complex ml_contour(double alpha, double beta, Complex z) {
    const double arg_z = std::arg(z);
    const bool has_pole = std::abs(arg_z) < alpha * kPi;
    const Complex pole = has_pole ? std::polar(std::pow(std::abs(z), 1.0 / alpha), arg_z / alpha) : Complex(0.0);
    const Complex residue =
        has_pole ? std::exp(pole) * std::exp((1.0 - beta) * std::log(pole)) / alpha : Complex(0.0);
    auto estimate = [&](double mu, double h) {
        Complex value = ml_parabola(alpha, beta, z, mu, h);
        if (has_pole) {
            // The pole sits right of the parabola iff Re sqrt(s / mu) > 1.
            const double side = std::real(std::sqrt(pole / mu)) - 1.0;
            if (std::abs(side) < 0.15)
                throw Error(ErrorCode::evaluation_error, "Mittag-Leffler pole too close to the contour");
            if (side > 0.0) value += residue;
        }
        return value;
    };
    const Complex a = estimate(4.0, 0.15);
    const Complex b = estimate(6.0, 0.10);
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    if (std::abs(a - b) > 1e-9 * scale) {
        std::ostringstream msg;
        msg << "Mittag-Leffler contour estimates disagree at z = " << z;
        throw Error(ErrorCode::evaluation_error, msg.str());
    }
    return b;
}

}  // namespace

Complex mittag_leffler(double alpha, double beta, Complex z) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::domain_error, "alpha must lie in (0, 1]");
    if (!(beta > 0.0)) throw Error(ErrorCode::domain_error, "beta must be positive");
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw Error(ErrorCode::domain_error, "argument must be finite");
    if (alpha == 1.0 && beta == 1.0) return std::exp(z);
    // The series loses about |z|^{1/alpha} / ln 10 digits to cancellation, so
    // its radius shrinks with alpha.
    const double radius = std::min(5.0, std::pow(10.0, alpha));
    if (std::abs(z) <= radius) return ml_series(alpha, beta, z);
    return ml_contour(alpha, beta, z);
}

std::vector<SolutionSnapshot> co_reference_solution(const EllipticOperator& op, const CoefficientField& field,
                                                    const Vector& u0, std::span<const double> times) {
    if (!field.constant_order() || !field.constant_density())
        throw Error(ErrorCode::not_applicable, "eigen-expansion reference needs constant alpha and rho");
    if (static_cast<std::size_t>(u0.size()) != op.size())
        throw Error(ErrorCode::shape_error, "initial data length does not match the interior node count");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(op.matrix())};
    const Vector coeffs = es.eigenvectors().transpose() * u0;
    const double alpha = field.alpha[0];
    const double rho = field.rho[0];
    std::vector<SolutionSnapshot> out;
    for (double t : times) {
        if (!(t >= 0.0)) throw Error(ErrorCode::domain_error, "time must be non-negative");
        Vector weighted(coeffs.size());
        for (Eigen::Index k = 0; k < coeffs.size(); ++k)
            weighted[k] = coeffs[k] * (t == 0.0 ? 1.0 : mittag_leffler(alpha, 1.0, -es.eigenvalues()[k] / rho * std::pow(t, alpha)));
        out.push_back(SolutionSnapshot{t, es.eigenvectors() * weighted, 0.0, Provenance::oracle});
    }
    return out;
}

SolutionSnapshot co_reference_solution(const EllipticOperator& op, const CoefficientField& field, const Vector& u0,
                                       double t) {
    return co_reference_solution(op, field, u0, std::span<const double>(&t, 1)).front();
}

L1Weights caputo_l1_weights(double alpha, double dt, int n_steps) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::domain_error, "alpha must lie in (0, 1)");
    if (!(dt > 0.0)) throw Error(ErrorCode::domain_error, "dt must be positive");
    if (n_steps < 0) throw Error(ErrorCode::domain_error, "step count must be non-negative");
    L1Weights w;
    w.scale = std::pow(dt, -alpha) / std::tgamma(2.0 - alpha);
    w.b.resize(static_cast<std::size_t>(n_steps));
    for (int j = 0; j < n_steps; ++j)
        w.b[static_cast<std::size_t>(j)] = std::pow(j + 1.0, 1.0 - alpha) - std::pow(static_cast<double>(j), 1.0 - alpha);
    return w;
}

double l1_derivative(const L1Weights& w, std::span<const double> history) {
    const std::size_t n = history.size() - 1;
    if (history.empty() || n > w.b.size()) throw Error(ErrorCode::domain_error, "history longer than the weight table");
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += w.b[j] * (history[n - j] - history[n - j - 1]);
    return w.scale * acc;
}

std::vector<SolutionSnapshot> l1_solve(const EllipticOperator& op, const CoefficientField& field, const Vector& u0,
                                       const Source& f, double dt, double T, const L1Options& options) {
    if (!(dt > 0.0) || !(T > 0.0)) throw Error(ErrorCode::domain_error, "dt and T must be positive");
    const auto n = static_cast<Eigen::Index>(op.size());
    if (u0.size() != n) throw Error(ErrorCode::shape_error, "initial data length does not match the interior node count");
    const double steps_real = std::round(T / dt);
    if (steps_real > static_cast<double>(options.step_cap)) {
        std::ostringstream msg;
        msg << T / dt << " steps exceed the cap of " << options.step_cap;
        throw Error(ErrorCode::budget_error, msg.str());
    }
    const int steps = static_cast<int>(steps_real);

    // Nodewise weights b_{j,i} and scales c_i.
    Vector scale(n);
    Eigen::MatrixXd b(n, steps);
    for (Eigen::Index i = 0; i < n; ++i) {
        const L1Weights w = caputo_l1_weights(field.alpha[i], dt, steps);
        scale[i] = w.scale;
        for (int j = 0; j < steps; ++j) b(i, j) = w.b[static_cast<std::size_t>(j)];
    }
    const Vector rc = field.rho.cwiseProduct(scale);
    SparseMatrix lhs = op.matrix();
    for (Eigen::Index i = 0; i < n; ++i) lhs.coeffRef(i, i) += rc[i];
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(lhs);
    if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::solve_failure, "L1 system factorization failed");

    std::vector<int> report;
    for (double t : options.report_times) {
        const double k = std::round(t / dt);
        if (!(t > 0.0) || std::abs(k * dt - t) > 1e-9 * std::max(1.0, t) || k > steps)
            throw Error(ErrorCode::domain_error, "report time is not a step of the L1 grid");
        report.push_back(static_cast<int>(k));
    }

    Eigen::MatrixXd diffs(n, steps);  // u^k - u^{k-1}, k = 1..steps
    Vector u = u0;
    std::vector<SolutionSnapshot> out;
    for (int k = 1; k <= steps; ++k) {
        // history: sum_{j=1}^{k-1} b_j (u^{k-j} - u^{k-j-1})
        Vector hist = Vector::Zero(n);
        for (int j = 1; j < k; ++j) hist += b.col(j).cwiseProduct(diffs.col(k - j - 1));
        const double t = k * dt;
        Vector rhs = f(t, n) + rc.cwiseProduct(u - hist);
        if (k == 1 && options.first_step_correction) {
            Vector f0 = f(0.0, n);
            if (!f0.allFinite()) f0.setZero();
            rhs += 0.5 * (f0 - op.matrix() * u0);
        }
        const Vector next = ldlt.solve(rhs);
        diffs.col(k - 1) = next - u;
        u = next;
        const bool wanted = report.empty() || std::find(report.begin(), report.end(), k) != report.end();
        if (wanted) out.push_back(SolutionSnapshot{t, u, 0.0, Provenance::l1});
    }
    return out;
}

}  // namespace vofd
