#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_support.hpp"
#include "vofd/inverse.hpp"

using namespace vofd;
using vofd::test::error_of;
using vofd::test::unit_grid;

namespace {

constexpr double kE = std::numbers::e;

Vector potential(const CoefficientField& f, double p) {
    return (f.q.array() + f.rho.array() * Eigen::pow(p, f.alpha.array())).matrix();
}

std::vector<DtNDataset> synthetic(const SpatialGrid& g, const CoefficientField& f, std::vector<double> ps) {
    const ShiftedSolver solver(assemble_operator(g, f), f);
    const std::vector<Vector> drives = full_boundary_drives(g);
    std::vector<DtNDataset> out;
    for (double p : ps) out.push_back(laplace_dataset(solver, p, drives));
    return out;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("pointwise extraction from exact potentials") {
    const Vector two = Vector::Constant(4, 2.0);
    auto v = [&](double p) { return Vector(two.array() + 3.0 * std::sqrt(p)); };
    SUBCASE("idealized small p") {
        const InverseResult r = extract_pointwise(two, v(1.0), v(kE), 1e-12);
        CHECK((r.q - two).norm() == 0.0);
        CHECK((r.rho.array() - 3.0).abs().maxCoeff() <= 1e-15);
        CHECK((r.alpha.array() - 0.5).abs().maxCoeff() <= 1e-15);
        CHECK(r.out_of_class.empty());
    }
    SUBCASE("p_s = 1e-6 bias propagation") {
        const InverseResult r = extract_pointwise(v(1e-6), v(1.0), v(kE), 1e-6);
        CHECK((r.q.array() - 2.0).abs().maxCoeff() <= 3e-3 + 1e-15);
        CHECK((r.rho.array() - 3.0).abs().maxCoeff() <= 1e-2 * 3.0);
        CHECK((r.alpha.array() - 0.5).abs().maxCoeff() <= 1e-2 * 0.5);
        CHECK(r.q_bias_bound >= 3e-3 * 0.99);
    }
    SUBCASE("model violations") {
        CHECK(error_of([&] { extract_pointwise(v(1e-6), v(kE), v(1.0), 1e-6); }) == ErrorCode::extraction_error);
        CHECK(error_of([&] { extract_pointwise(v(1.0), v(1e-6), v(kE), 1e-6); }) == ErrorCode::extraction_error);
        CHECK(error_of([&] { extract_pointwise(v(1e-6), v(1.0), v(kE), 2.0); }) == ErrorCode::domain_error);
        // V(e) - q > e rho implies alpha > 1: flagged and clipped
        const Vector big = Vector::Constant(4, 2.0 + 3.0 * 3.0);
        const InverseResult r = extract_pointwise(two, v(1.0), big, 1e-12);
        CHECK(r.out_of_class.size() == 4);
        CHECK(r.alpha.maxCoeff() < 1.0);
    }
}

TEST_CASE("small-p bias shrinks at least like 10^alpha0") {
    const SpatialGrid g = unit_grid(2, 4);
    const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
    double prev = 0.0;
    for (double ps : {1e-4, 1e-5, 1e-6}) {
        const InverseResult r = extract_pointwise(potential(f, ps), potential(f, 1.0), potential(f, kE), ps);
        const double bias = (r.q - f.q).cwiseAbs().maxCoeff();
        if (prev > 0.0) CHECK(prev / bias >= std::pow(10.0, f.alpha0) * (1.0 - 1e-9));
        prev = bias;
        // monotone consistency of the extracted fields
        CHECK(r.rho.minCoeff() > 0.0);
        CHECK(((potential(f, kE) - r.q).array() >= r.rho.array()).all());
    }
}

TEST_CASE("potential recovery on synthetic data") {
    const SpatialGrid g = unit_grid(2, 9);
    SUBCASE("constant potential") {
        const CoefficientField f = test::constant_field(g, 0.5, 3.0, 0.0);
        const PotentialEstimate e = recover_potential(synthetic(g, f, {1.0})[0], g);
        CHECK((e.V.array() - 3.0).abs().maxCoeff() <= 3e-4);
        CHECK(e.residual <= 1e-10);
        CHECK_FALSE(e.identifiability_warning);
    }
    SUBCASE("vanishing potential") {
        const CoefficientField f = test::constant_field(g, 0.5, 1e-14, 0.0);
        const PotentialEstimate e = recover_potential(synthetic(g, f, {1.0})[0], g);
        CHECK(e.V.cwiseAbs().maxCoeff() <= 1e-6);
        CHECK(e.residual <= 1e-10);
    }
    SUBCASE("two-bump phantom") {
        const char* bumps = "1 + exp(-40*((x-0.3)^2 + (y-0.3)^2)) + 0.5*exp(-40*((x-0.7)^2 + (y-0.6)^2))";
        const CoefficientField f = test::expr_field(g, "0.5", "1e-12", bumps);
        const PotentialEstimate e = recover_potential(synthetic(g, f, {1.0})[0], g);
        CHECK(rel(e.V, potential(f, 1.0)) <= 5e-2);
        CHECK(e.iterations <= 200);
    }
    SUBCASE("partial drives trigger the identifiability warning") {
        const CoefficientField f = test::constant_field(g, 0.5, 3.0, 0.0);
        DtNDataset d = synthetic(g, f, {1.0})[0];
        d.g.resize(5);
        d.flux.resize(5);
        const PotentialEstimate e = recover_potential(d, g);
        CHECK(e.identifiability_warning);
    }
    SUBCASE("malformed datasets") {
        DtNDataset d;
        d.p = 1.0;
        CHECK(error_of([&] { recover_potential(d, g); }) == ErrorCode::shape_error);
        d.p = -1.0;
        CHECK(error_of([&] { recover_potential(d, g); }) == ErrorCode::domain_error);
    }
}

TEST_CASE("end-to-end inversion") {
    const SpatialGrid g = unit_grid(2, 9);
    SUBCASE("constant coefficients") {
        const CoefficientField f = test::constant_field(g, 0.5, 1.0, 2.0);
        const auto data = synthetic(g, f, {1e-6, 1.0, kE});
        const InverseErrors e = relative_errors(invert_all(data, g), f);
        CHECK(e.alpha <= 2e-2);
        CHECK(e.rho <= 2e-2);
        CHECK(e.q <= 2e-2);
    }
    SUBCASE("variable coefficients and determinism") {
        const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
        const auto data = synthetic(g, f, {kE, 1e-6, 1.0});
        const InverseResult a = invert_all(data, g);
        const InverseResult b = invert_all(data, g);
        CHECK((a.alpha - b.alpha).norm() == 0.0);
        CHECK((a.q - b.q).norm() == 0.0);
        const InverseErrors e = relative_errors(a, f);
        CHECK(e.alpha <= 5e-2);
        CHECK(e.rho <= 5e-2);
        CHECK(e.q <= 5e-2);
        CHECK(a.potentials.size() == 3);
    }
    SUBCASE("dataset set must contain p_s, 1 and e") {
        const CoefficientField f = test::constant_field(g, 0.5, 1.0, 2.0);
        const auto data = synthetic(g, f, {1e-6, 1.0, 2.0});
        CHECK(error_of([&] { invert_all(data, g); }) == ErrorCode::domain_error);
    }
}

TEST_CASE("pipeline schedule") {
    const PipelineSchedule s = pipeline_schedule(0.5);
    CHECK(s.breaks.front() == 0.0);
    CHECK(s.breaks.back() == 80.0);
    CHECK(std::is_sorted(s.times.begin(), s.times.end()));
    CHECK(s.times.size() == (s.breaks.size() - 1) * 13);
    for (std::size_t k = 0; k + 1 < s.breaks.size(); ++k) {
        CHECK(s.panel_nodes[k].size() == 12);
        CHECK(s.times[s.held_out[k]] == doctest::Approx(0.5 * (s.breaks[k] + s.breaks[k + 1])));
        CHECK(s.breaks[k + 1] <= 2.0 * s.breaks[k] + 1e-12 + (k == 0 ? 1.0 : 0.0));
    }
}

TEST_CASE("time-to-Laplace pipeline") {
    const SpatialGrid g = unit_grid(2, 5);
    const CoefficientField f = test::expr_field(g, "0.35 + 0.2*x", "1 + 0.5*y", "1 + x*y");
    const EllipticOperator op = assemble_operator(g, f);
    const ShiftedSolver solver(op, f);
    const PipelineSchedule s = pipeline_schedule(0.5);
    Vector gv = Vector::Zero(static_cast<Eigen::Index>(g.boundary_count()));
    for (std::size_t b = 0; b < g.boundary_count(); ++b) {
        const auto& c = g.boundary()[b].coord;
        gv[static_cast<Eigen::Index>(b)] = c[0] * c[0] + c[1];
    }
    const BoundaryResult res = solve_with_boundary(solver, make_drive(op, gv, 2), s.times);
    TimeDtNSeries series{gv, 2, {}};
    for (const auto& r : res.records) series.flux.push_back(r.flux.real());
    const std::vector<double> ps{0.5, 1.0, 2.0};

    const auto out = time_to_laplace_pipeline(s, std::span(&series, 1), g, ps);
    REQUIRE(out.size() == 3);
    for (std::size_t j = 0; j < ps.size(); ++j) {
        const Vector direct = laplace_dtn(solver, ps[j], gv).flux.real();
        CHECK(rel(out[j].flux[0], direct) <= 2e-3);
    }

    TimeDtNSeries zero{Vector::Zero(gv.size()), 2, std::vector<Vector>(s.times.size(), Vector::Zero(series.flux[0].size()))};
    for (const auto& d : time_to_laplace_pipeline(s, std::span(&zero, 1), g, ps)) CHECK(d.flux[0].norm() == 0.0);

    TimeDtNSeries corrupt = series;
    corrupt.flux[s.panel_nodes[12][5]] *= 1.1;
    CHECK(error_of([&] { time_to_laplace_pipeline(s, std::span(&corrupt, 1), g, ps); }) ==
          ErrorCode::analytic_extension_error);

    const std::vector<double> far{0.1};
    CHECK(error_of([&] { time_to_laplace_pipeline(s, std::span(&series, 1), g, far); }) == ErrorCode::horizon_error);
}
