#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_support.hpp"
#include "vofd/dtn.hpp"
#include "vofd/oracle.hpp"
#include "vofd/quadrature.hpp"

using namespace vofd;
using vofd::test::error_of;
using vofd::test::unit_grid;

namespace {

/// Full-grid function sampled into interior and boundary vectors.
template <class Fn>
std::pair<Vector, Vector> sample(const SpatialGrid& g, Fn fn) {
    Vector in(static_cast<Eigen::Index>(g.interior_count())), bd(static_cast<Eigen::Index>(g.boundary_count()));
    for (std::size_t i = 0; i < g.interior_count(); ++i)
        in[static_cast<Eigen::Index>(i)] = fn(g.interior_coords()[i][0], g.interior_coords()[i][1]);
    for (std::size_t b = 0; b < g.boundary_count(); ++b)
        bd[static_cast<Eigen::Index>(b)] = fn(g.boundary()[b].coord[0], g.boundary()[b].coord[1]);
    return {in, bd};
}

Vector right_edge_drive(const SpatialGrid& g) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(g.boundary_count()));
    for (std::size_t b = 0; b < g.boundary_count(); ++b) {
        const auto& c = g.boundary()[b].coord;
        if (c[0] == 1.0) v[static_cast<Eigen::Index>(b)] = g.dimension() == 1 ? 1.0 : std::sin(std::numbers::pi * c[1]);
    }
    return v;
}

double rel(const ComplexVector& a, const ComplexVector& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("normal flux of simple fields") {
    const SpatialGrid g1 = unit_grid(1, 10);
    const FluxStencil s1 = flux_stencil(g1, g1.s_out());
    auto [in, bd] = sample(g1, [](double x, double) { return x; });
    const Vector f = normal_flux(s1, in, bd);
    CHECK(f[0] == doctest::Approx(-1.0).epsilon(1e-13));
    CHECK(f[1] == doctest::Approx(1.0).epsilon(1e-13));
    auto [cin, cbd] = sample(g1, [](double, double) { return 4.0; });
    CHECK(normal_flux(s1, cin, cbd).cwiseAbs().maxCoeff() <= 1e-12);

    const SpatialGrid g2 = unit_grid(2, 6);
    const FluxStencil s2 = flux_stencil(g2, g2.s_out());
    auto [qin, qbd] = sample(g2, [](double x, double) { return x * x; });
    const Vector q = normal_flux(s2, qin, qbd);
    for (std::size_t r = 0; r < s2.nodes.size(); ++r) {
        const BoundaryNode& node = g2.boundary()[s2.nodes[r]];
        const double expected = 2.0 * node.coord[0] * node.normal[0];
        CHECK(q[static_cast<Eigen::Index>(r)] == doctest::Approx(expected).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("flux stencil preconditions") {
    const SpatialGrid g = unit_grid(2, 4);
    const std::vector<std::size_t> bad{g.boundary_count()};
    CHECK(error_of([&] { flux_stencil(g, bad); }) == ErrorCode::domain_error);
}

TEST_CASE("drive validation") {
    BoundarySubsetSpec spec;
    spec.s_in = {"left"};
    const SpatialGrid g = unit_grid(2, 4, spec);
    const CoefficientField f = test::constant_field(g, 0.5, 1.0, 1.0);
    const EllipticOperator op = assemble_operator(g, f);
    const Vector g_right = right_edge_drive(g);
    CHECK(error_of([&] { make_drive(op, g_right, 2); }) == ErrorCode::invalid_drive);
    CHECK(error_of([&] { make_drive(op, Vector::Zero(static_cast<Eigen::Index>(g.boundary_count())), 1); }) ==
          ErrorCode::invalid_drive);
    CHECK(error_of([&] { make_drive(op, Vector::Zero(3), 2); }) == ErrorCode::shape_error);
    const auto drives = nodal_drives(op, 2);
    CHECK(drives.size() == g.s_in().size());
    for (const auto& d : drives) CHECK(op.apply_full(d.lift, d.g).norm() <= 1e-12);
}

TEST_CASE("boundary-driven solve: zero drive and vanishing initial state") {
    const SpatialGrid g = unit_grid(2, 6);
    const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
    const EllipticOperator op = assemble_operator(g, f);
    const ShiftedSolver solver(op, f);
    const std::vector<double> times{1e-4, 0.5};
    const BoundaryDrive zero = make_drive(op, Vector::Zero(static_cast<Eigen::Index>(g.boundary_count())), 2);
    for (const auto& r : solve_with_boundary(solver, zero, times).records) CHECK(r.flux.norm() == 0.0);

    const BoundaryDrive d = make_drive(op, right_edge_drive(g), 2);
    const BoundaryResult res = solve_with_boundary(solver, d, times);
    CHECK(res.snapshots[0].u.norm() <= 1e-7);
    CHECK(res.snapshots[1].u.norm() > 1e-3);
    CHECK(res.records[1].flux.size() == static_cast<Eigen::Index>(g.s_out().size()));
}

TEST_CASE("boundary-driven solve agrees with L1 time stepping") {
    const SpatialGrid g = unit_grid(1, 32);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1 + x", "x");
    const EllipticOperator op = assemble_operator(g, f);
    const ShiftedSolver solver(op, f);
    const BoundaryDrive d = make_drive(op, right_edge_drive(g), 2);
    const std::vector<double> times{0.5, 1.0};
    const BoundaryResult res = solve_with_boundary(solver, d, times);

    // (rho d^alpha + A_q) u = t^k B g for the interior values directly.
    const auto n = static_cast<Eigen::Index>(op.size());
    const Vector bg = op.boundary_coupling() * d.g;
    L1Options o;
    o.report_times = times;
    const auto l1 = l1_solve(op, f, Vector::Zero(n), Source::power_law({PowerTerm{bg, Vector::Constant(n, 2.0)}}),
                             1e-3, 1.0, o);
    const FluxStencil st = flux_stencil(g, g.s_out());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const Vector flux = normal_flux(st, l1[k].u, Vector(std::pow(times[k], 2) * d.g));
        CHECK(rel(res.records[k].flux, flux.cast<Complex>()) <= 1e-3);
    }
}

TEST_CASE("Laplace-domain DtN") {
    SUBCASE("p = 1 reduces to the real problem with potential q + rho") {
        const SpatialGrid g = unit_grid(2, 6);
        const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
        const EllipticOperator op = assemble_operator(g, f);
        const DtNRecord r = laplace_dtn(ShiftedSolver(op, f), 1.0, right_edge_drive(g));
        const CoefficientField real = make_field(f.alpha, Vector::Zero(f.alpha.size()) .array() + 1e-300, Vector(f.q + f.rho));
        const EllipticOperator op_real = assemble_operator(g, real);
        const LiftedBoundary w = lift_boundary_with_potential(right_edge_drive(g), op_real);
        const Vector flux = normal_flux(flux_stencil(g, g.s_out()), w.interior, w.boundary);
        CHECK(r.flux.imag().norm() == 0.0);
        CHECK((r.flux.real() - flux).norm() <= 1e-12 * flux.norm());
    }
    SUBCASE("constant potential in 1D matches the hyperbolic profile to second order") {
        const double mu = 2.0;
        double prev = 0.0;
        for (int n : {16, 32, 64}) {
            const SpatialGrid g = unit_grid(1, n);
            const CoefficientField f = test::constant_field(g, 0.5, mu * mu, 0.0);
            const DtNRecord r = laplace_dtn(ShiftedSolver(assemble_operator(g, f), f), 1.0, right_edge_drive(g));
            const double err = std::abs(r.flux[1].real() - mu / std::tanh(mu));
            if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.1));
            prev = err;
        }
        CHECK(prev <= 1e-3);
    }
    SUBCASE("zero data and linearity") {
        const SpatialGrid g = unit_grid(2, 5);
        const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
        const ShiftedSolver solver(assemble_operator(g, f), f);
        const auto nb = static_cast<Eigen::Index>(g.boundary_count());
        CHECK(laplace_dtn(solver, Complex(0.7, 0.3), Vector::Zero(nb)).flux.norm() == 0.0);
        const Vector g1 = right_edge_drive(g), g2 = Vector::LinSpaced(nb, -1.0, 1.0);
        const Complex p(0.7, 0.3);
        const ComplexVector a = laplace_dtn(solver, p, g1).flux, b = laplace_dtn(solver, p, g2).flux;
        const ComplexVector ab = laplace_dtn(solver, p, Vector(2.0 * g1 - 0.5 * g2)).flux;
        CHECK(rel(ab, ComplexVector(2.0 * a - 0.5 * b)) <= 1e-12);
        CHECK(error_of([&] { laplace_dtn(solver, -1.0, g1); }) == ErrorCode::branch_cut);
    }
}

TEST_CASE("Laplace-domain DtN response matrix is symmetric up to the flux stencil error") {
    double prev = 0.0;
    for (int n : {8, 16, 32}) {
        const SpatialGrid g = unit_grid(2, n);
        const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
        const ShiftedSolver solver(assemble_operator(g, f), f);
        // smooth boundary profiles on the left and right edges
        auto edge = [&](double x0) {
            Vector v = Vector::Zero(static_cast<Eigen::Index>(g.boundary_count()));
            for (std::size_t b = 0; b < g.boundary_count(); ++b) {
                const auto& c = g.boundary()[b].coord;
                if (c[0] == x0) v[static_cast<Eigen::Index>(b)] = std::sin(std::numbers::pi * c[1]);
            }
            return v;
        };
        const Vector gl = edge(0.0), gr = edge(1.0);
        // boundary inner products weighted by the edge spacing
        const double h = g.spacing(1);
        const double lr = h * laplace_dtn(solver, 1.5, gl).flux.real().dot(gr);
        const double rl = h * laplace_dtn(solver, 1.5, gr).flux.real().dot(gl);
        const double asym = std::abs(lr - rl) / std::abs(lr);
        if (prev > 0.0) CHECK(asym < prev);
        prev = asym;
    }
    CHECK(prev <= 1e-2);
}

TEST_CASE("Laplace rule and transform from time samples") {
    const LaplaceRule rule = laplace_rule(0.5, 2.0);
    CHECK(rule.horizon == 80.0);
    CHECK(std::is_sorted(rule.nodes.begin(), rule.nodes.end()));
    CHECK(rule.nodes.front() > 0.0);
    // int_0^T e^{-pt} t^2 dt -> 2/p^3, so the scaled transform is 1.
    std::vector<Vector> samples;
    for (double t : rule.nodes) samples.push_back(Vector::Constant(1, t * t));
    for (double p : {0.5, 1.0, 2.0})
        CHECK(laplace_from_time(rule, samples, p, 2).flux[0].real() == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<Vector> zeros(rule.nodes.size(), Vector::Zero(3));
    CHECK(laplace_from_time(rule, zeros, 1.0, 2).flux.norm() == 0.0);
    // a horizon chosen for p = 2 is too short for p = 0.1
    const LaplaceRule short_rule = laplace_rule(2.0, 2.0);
    std::vector<Vector> ones(short_rule.nodes.size(), Vector::Ones(1));
    CHECK(error_of([&] { laplace_from_time(short_rule, ones, 0.1, 2); }) == ErrorCode::horizon_error);
    CHECK(error_of([&] { laplace_from_time(rule, ones, 1.0, 2); }) == ErrorCode::shape_error);
}

TEST_CASE("Caputo derivative of t^2 has the expected Laplace transform") {
    for (double alpha : {0.3, 0.6, 0.9}) {
        const LaplaceRule rule = laplace_rule(0.5, 2.0);
        for (double p : {0.5, 1.0, 2.0}) {
            double acc = 0.0;
            for (std::size_t j = 0; j < rule.nodes.size(); ++j)
                acc += rule.weights[j] * std::exp(-p * rule.nodes[j]) * caputo_of_power(2, alpha, rule.nodes[j]);
            CHECK(acc == doctest::Approx(std::pow(p, alpha) * 2.0 / std::pow(p, 3)).epsilon(1e-10));
        }
    }
}

TEST_CASE("time-domain flux transforms to the Laplace-domain DtN") {
    const SpatialGrid g = unit_grid(1, 16);
    const CoefficientField f = test::expr_field(g, "0.3 + 0.4*x", "1 + x", "x");
    const EllipticOperator op = assemble_operator(g, f);
    const ShiftedSolver solver(op, f);
    const LaplaceRule rule = laplace_rule(0.5, 2.0);
    for (int k : {2, 4}) {
        const BoundaryDrive d = make_drive(op, right_edge_drive(g), k);
        const BoundaryResult res = solve_with_boundary(solver, d, rule.nodes);
        std::vector<Vector> flux;
        for (const auto& r : res.records) flux.push_back(r.flux.real());
        for (double p : {0.5, 1.0, 2.0}) {
            const DtNRecord direct = laplace_dtn(solver, p, d);
            CHECK(rel(laplace_from_time(rule, flux, p, k).flux, direct.flux) <= 1e-3);
        }
    }
}

TEST_CASE("weak-solution identity") {
    const SpatialGrid g = unit_grid(1, 32);
    const CoefficientField f = test::constant_field(g, 0.6, 1.0, 0.0);
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const std::vector<double> ps{0.5, 1.0, 2.0};
    const WeakSolutionReport r = verify_weak_solution(solver, test::sine_mode(g, 1), Source::zero(), ps);
    CHECK(r.residual.size() == 3);
    CHECK(r.max_residual <= 1e-4);
    CHECK(verify_weak_solution(solver, Vector::Zero(31), Source::zero(), ps).max_residual == 0.0);
    const Source fn = Source::function([](double) { return Vector::Ones(31); });
    CHECK(error_of([&] { verify_weak_solution(solver, Vector::Zero(31), fn, ps); }) == ErrorCode::not_applicable);
}

TEST_CASE("time-domain flux is analytic enough for Chebyshev extension") {
    const SpatialGrid g = unit_grid(2, 6);
    const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
    const EllipticOperator op = assemble_operator(g, f);
    const ShiftedSolver solver(op, f);
    const BoundaryDrive d = make_drive(op, right_edge_drive(g), 2);
    const std::vector<double> nodes = chebyshev_points(0.5, 2.0, 12);
    const std::vector<double> held{0.61, 1.13, 1.87};
    const BoundaryResult at_nodes = solve_with_boundary(solver, d, nodes);
    const BoundaryResult at_held = solve_with_boundary(solver, d, held);
    for (std::size_t h = 0; h < held.size(); ++h) {
        const std::vector<double> basis = chebyshev_basis(nodes, held[h]);
        ComplexVector pred = ComplexVector::Zero(at_held.records[h].flux.size());
        for (std::size_t k = 0; k < nodes.size(); ++k) pred += basis[k] * at_nodes.records[k].flux;
        CHECK(rel(pred, at_held.records[h].flux) <= 1e-6);
    }
}
