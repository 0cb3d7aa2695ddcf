#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "vofd/contour.hpp"
#include "vofd/oracle.hpp"

using namespace vofd;
using vofd::test::error_of;
using vofd::test::unit_grid;

namespace {

/// E_{1/2}(-x) = exp(x^2) erfc(x), with the asymptotic series for large x.
double ml_half(double x) {
    if (x < 25.0) return std::exp(x * x) * std::erfc(x);
    const double y = 1.0 / (2.0 * x * x);
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 8; ++k) {
        term *= -(2.0 * k - 1.0) * y;
        sum += term;
    }
    return sum / (x * std::sqrt(std::numbers::pi));
}

/// E_{1/2,1/2}(-x) = 1/sqrt(pi) - x E_{1/2}(-x).
double ml_half_half(double x) { return 1.0 / std::sqrt(std::numbers::pi) - x * ml_half(x); }

double lambda_1d(const SpatialGrid& g, int k) {
    const double h = g.spacing(0);
    return 4.0 / (h * h) * std::pow(std::sin(k * std::numbers::pi * h / 2.0), 2);
}

Vector bump(const SpatialGrid& g) {
    Vector v(static_cast<Eigen::Index>(g.interior_count()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto& x = g.interior_coords()[static_cast<std::size_t>(i)];
        v[i] = std::exp(-100.0 * (x[0] - 0.5) * (x[0] - 0.5));
    }
    return v;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("contour geometry and validation") {
    const ContourQuadrature c = build_contour(0.5, 0.75 * std::numbers::pi, 32, 64, 100.0);
    int arc = 0;
    for (const auto& node : c.nodes) {
        if (node.panel < 0) {
            ++arc;
            CHECK(std::abs(node.p) == doctest::Approx(0.5).epsilon(1e-15));
        } else {
            CHECK(std::abs(std::abs(std::arg(node.p)) - c.theta) < 1e-14);
            CHECK(std::abs(node.p) >= 0.5 * (1 - 1e-15));
            CHECK(std::abs(node.p) <= 100.0 * (1 + 1e-12));
        }
    }
    CHECK(arc == c.n_arc);
    CHECK(c.nodes.size() == static_cast<std::size_t>(c.n_arc + 2 * c.n_ray));
    CHECK(c.r_max == doctest::Approx(100.0));

    CHECK(error_of([] { build_contour(0.5, std::numbers::pi / 2.0, 32, 32, 10.0); }) == ErrorCode::contour_error);
    CHECK(error_of([] { build_contour(0.5, std::numbers::pi, 32, 32, 10.0); }) == ErrorCode::contour_error);
    CHECK(error_of([] { build_contour(1.0, 2.0, 32, 32, 10.0); }) == ErrorCode::contour_error);
    CHECK(error_of([] { build_contour(0.0, 2.0, 32, 32, 10.0); }) == ErrorCode::contour_error);
    CHECK(error_of([] { build_contour(0.5, 2.0, 3, 32, 10.0); }) == ErrorCode::contour_error);
}

TEST_CASE("contour nodes are closed under conjugation") {
    const ContourQuadrature c = contour_for_time(0.3, {});
    const std::size_t m = c.nodes.size();
    for (std::size_t j = 0; j < m; ++j) {
        const ContourNode& a = c.nodes[j];
        const ContourNode& b = c.nodes[m - 1 - j];
        CHECK(std::abs(a.p - std::conj(b.p)) <= 1e-15 * std::abs(a.p));
        CHECK(std::abs(a.weight + std::conj(b.weight)) <= 1e-15 * std::abs(a.weight));
    }
}

TEST_CASE("contour inverts scalar Laplace transforms") {
    // (1/2 pi i) int e^{tp} p^{-g-1} dp = t^g / Gamma(g + 1)
    for (double t : {0.01, 0.7, 3.0, 12.0}) {
        const ContourQuadrature c = contour_for_time(t, {});
        for (double gam : {0.0, 0.4, 2.5}) {
            const ComplexVector z = contour_sum(c, 1, [&](std::size_t, Complex p) {
                ComplexVector v(1);
                v[0] = std::exp(t * p) * std::pow(p, -gam - 1.0);
                return v;
            });
            const double ref = std::pow(t, gam) / std::tgamma(gam + 1.0);
            CHECK(std::abs(z[0] - ref) <= 1e-12 * ref + 1e-14);
        }
    }
}

TEST_CASE("time-adapted contours follow the epsilon schedule and nest") {
    ContourOptions o;
    CHECK(contour_for_time(0.1, o).epsilon == 0.5);
    CHECK(contour_for_time(2.0, o).epsilon == 0.5);
    CHECK(contour_for_time(4.0, o).epsilon == 0.25);
    const ContourQuadrature a = contour_for_time(1.0, o);
    const ContourQuadrature b = contour_for_time(0.1, o);
    CHECK(a.r_max * a.r_max * std::abs(std::cos(o.theta)) >= 0.0);
    CHECK(std::exp(1.0 * a.r_max * std::cos(o.theta)) <= 1e-16);
    // Upper-ray nodes of the shorter contour are a prefix of the longer one.
    const std::size_t start_a = static_cast<std::size_t>(a.n_ray + a.n_arc);
    const std::size_t start_b = static_cast<std::size_t>(b.n_ray + b.n_arc);
    for (std::size_t j = 0; j < static_cast<std::size_t>(a.n_ray); ++j)
        CHECK(a.nodes[start_a + j].p == b.nodes[start_b + j].p);
}

TEST_CASE("S0 on an eigenmode reproduces the Mittag-Leffler decay") {
    const SpatialGrid g = unit_grid(1, 32);
    const double rho = 2.0;
    const CoefficientField f = test::constant_field(g, 0.5, rho, 0.0);
    const EllipticOperator op = assemble_operator(g, f);
    const ShiftedSolver solver(op, f);
    for (int k : {1, 3}) {
        const Vector phi = test::sine_mode(g, k);
        for (double t : {0.05, 1.0, 7.0}) {
            const SolutionSnapshot s = apply_S0(contour_for_time(t, {}), solver, t, phi);
            const double ref = ml_half(lambda_1d(g, k) / rho * std::sqrt(t));
            CHECK(rel(s.u, ref * phi) <= 1e-9);
        }
    }
}

TEST_CASE("S0 recovers the initial data at small time") {
    // E_{0.9}(-lambda t^0.9) = 1 - lambda t^0.9 / Gamma(1.9) + ...
    const SpatialGrid g = unit_grid(1, 32);
    const CoefficientField f = test::constant_field(g, 0.9, 1.0, 0.0);
    const Vector phi = test::sine_mode(g, 1);
    const double t = 1e-6;
    const SolutionSnapshot s = apply_S0(contour_for_time(t, {}), assemble_operator(g, f), f, t, phi);
    const double drift = lambda_1d(g, 1) * std::pow(t, 0.9) / std::tgamma(1.9);
    CHECK(rel(s.u, phi) == doctest::Approx(drift).epsilon(1e-3));
}

TEST_CASE("S0 is independent of the contour parameters") {
    const SpatialGrid g = unit_grid(1, 32);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1 + x", "x");
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const Vector u0 = bump(g);
    ContourOptions a, b;
    a.epsilon = 0.5;
    a.theta = 2.2;
    b.epsilon = 0.25;
    b.theta = 2.8;
    const double t = 0.5;
    const SolutionSnapshot sa = apply_S0(contour_for_time(t, a), solver, t, u0);
    const SolutionSnapshot sb = apply_S0(contour_for_time(t, b), solver, t, u0);
    CHECK(rel(sa.u, sb.u) <= 1e-8);
}

TEST_CASE("S1 on an eigenmode matches the two-parameter Mittag-Leffler kernel") {
    const SpatialGrid g = unit_grid(1, 24);
    const CoefficientField f = test::constant_field(g, 0.5, 1.0, 0.0);
    const ShiftedSolver solver(assemble_operator(g, f), f);
    for (int k : {1, 2, 5}) {
        const Vector phi = test::sine_mode(g, k);
        for (double t : {0.02, 0.9, 4.0}) {
            const SolutionSnapshot s = apply_S1(contour_for_time(t, {}), solver, t, phi);
            const double ref = std::pow(t, -0.5) * ml_half_half(lambda_1d(g, k) * std::sqrt(t));
            CHECK(rel(s.u, ref * phi) <= 1e-9);
        }
    }
}

TEST_CASE("S1 output is real to roundoff") {
    const SpatialGrid g = unit_grid(2, 7);
    const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
    const ShiftedSolver solver(assemble_operator(g, f), f);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Vector psi(static_cast<Eigen::Index>(f.size()));
        for (auto& x : psi) x = u(rng);
        const SolutionSnapshot s = apply_S1(contour_for_time(0.4, {}), solver, 0.4, psi);
        CHECK(s.imag_residual <= 1e-10 * psi.norm());
    }
}

TEST_CASE("S2 vanishes in the near-constant-order regime") {
    const SpatialGrid g = unit_grid(1, 32);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const char* alpha : {"0.6", "0.3 + 0.15*x"}) {
        const CoefficientField f = test::expr_field(g, alpha, "1 + x", "x");
        const EllipticOperator op = assemble_operator(g, f);
        const ShiftedSolver solver(op, f);
        const ContourQuadrature c = contour_for_s2(op, f, {});
        Vector psi(static_cast<Eigen::Index>(f.size()));
        for (auto& x : psi) x = u(rng);
        CHECK(apply_S2(c, solver, psi).u.norm() <= 1e-8 * psi.norm());
        CHECK(apply_S2(c, solver, Vector::Zero(psi.size())).u.norm() == 0.0);
    }
}

TEST_CASE("forward solve with zero data is zero") {
    const SpatialGrid g = unit_grid(1, 16);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1", "0");
    const EllipticOperator op = assemble_operator(g, f);
    const std::vector<double> times{0.1, 1.0};
    for (const auto& s : solve_forward(op, f, Vector::Zero(15), Source::zero(), times)) CHECK(s.u.norm() == 0.0);
}

TEST_CASE("forward solve preconditions") {
    const SpatialGrid g = unit_grid(1, 16);
    const CoefficientField f = test::constant_field(g, 0.5, 1.0, 0.0);
    const EllipticOperator op = assemble_operator(g, f);
    const Vector u0 = Vector::Ones(15);
    const std::vector<double> unsorted{1.0, 0.5};
    const std::vector<double> nonpositive{0.0, 0.5};
    const std::vector<double> ok{0.5};
    CHECK(error_of([&] { solve_forward(op, f, u0, Source::zero(), unsorted); }) == ErrorCode::domain_error);
    CHECK(error_of([&] { solve_forward(op, f, u0, Source::zero(), nonpositive); }) == ErrorCode::domain_error);
    ContourOptions bad;
    bad.theta = 1.0;
    CHECK(error_of([&] { solve_forward(op, f, u0, Source::zero(), ok, bad); }) == ErrorCode::contour_error);
}

TEST_CASE("constant-in-time source on an eigenmode") {
    // u0 = 0, f = phi: u(t) = (1 - E_{1/2}(-lambda sqrt(t))) / lambda phi
    const SpatialGrid g = unit_grid(1, 20);
    const CoefficientField f = test::constant_field(g, 0.5, 1.0, 0.0);
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const Vector phi = test::sine_mode(g, 2);
    const double lambda = lambda_1d(g, 2);
    const std::vector<double> times{0.05, 0.5, 3.0};
    const Source laplace_form = Source::power_law({PowerTerm{phi, Vector::Zero(phi.size())}});
    const Source general = Source::function([phi](double) { return phi; });
    const auto a = solve_forward(solver, Vector::Zero(phi.size()), laplace_form, times);
    const auto b = solve_forward(solver, Vector::Zero(phi.size()), general, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const Vector ref = (1.0 - ml_half(lambda * std::sqrt(times[k]))) / lambda * phi;
        CHECK(rel(a[k].u, ref) <= 1e-9);
        CHECK(rel(b[k].u, ref) <= 1e-7);
    }
}

TEST_CASE("Duhamel route agrees with the Laplace route for a variable-order problem") {
    const SpatialGrid g = unit_grid(1, 20);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1 + x", "x");
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const auto n = static_cast<Eigen::Index>(f.size());
    Vector c(n);
    for (Eigen::Index i = 0; i < n; ++i) c[i] = std::sin(3.0 * g.interior_coords()[static_cast<std::size_t>(i)][0]);
    const Vector e = Vector::Constant(n, 1.5);
    const Source laplace_form = Source::power_law({PowerTerm{c, e}});
    const Source general = Source::function([c](double t) { return Vector(c * std::pow(t, 1.5)); });
    const std::vector<double> times{0.2, 1.0};
    const Vector u0 = bump(g);
    const auto a = solve_forward(solver, u0, laplace_form, times);
    const auto b = solve_forward(solver, u0, general, times);
    for (std::size_t k = 0; k < times.size(); ++k) CHECK(rel(b[k].u, a[k].u) <= 1e-6);
}

TEST_CASE("forward solve is linear in the data") {
    const SpatialGrid g = unit_grid(1, 16);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1 + x", "x");
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const auto n = static_cast<Eigen::Index>(f.size());
    const Vector u1 = bump(g), u2 = Vector::LinSpaced(n, 0.0, 1.0);
    const Vector c1 = Vector::Ones(n), c2 = u2;
    const Source f1 = Source::power_law({PowerTerm{c1, Vector::Constant(n, 0.5)}});
    const Source f2 = Source::power_law({PowerTerm{c2, Vector::Constant(n, 2.0)}});
    const Source both = Source::power_law({PowerTerm{2.0 * c1, Vector::Constant(n, 0.5)},
                                           PowerTerm{-3.0 * c2, Vector::Constant(n, 2.0)}});
    const std::vector<double> times{0.3};
    const Vector a = solve_forward(solver, u1, f1, times)[0].u;
    const Vector b = solve_forward(solver, u2, f2, times)[0].u;
    const Vector ab = solve_forward(solver, Vector(2.0 * u1 - 3.0 * u2), both, times)[0].u;
    CHECK(rel(ab, Vector(2.0 * a - 3.0 * b)) <= 1e-12);
}

TEST_CASE("quadrature refinement converges geometrically") {
    const SpatialGrid g = unit_grid(1, 16);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1 + x", "x");
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const Vector u0 = bump(g);
    const double t = 1.0;
    std::vector<Vector> out;
    int n = 8;
    double r = 8.0;
    for (int level = 0; level < 4; ++level, n *= 2, r *= 2.0)
        out.push_back(apply_S0(build_contour(0.5, 0.75 * std::numbers::pi, n, n, r), solver, t, u0).u);
    const double d1 = (out[1] - out[0]).norm(), d2 = (out[2] - out[1]).norm(), d3 = (out[3] - out[2]).norm();
    CHECK(d2 * 4.0 <= d1);
    CHECK(d3 * 4.0 <= d2);
}
