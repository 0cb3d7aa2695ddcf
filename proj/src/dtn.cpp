#include "vofd/dtn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vofd/error.hpp"
#include "vofd/quadrature.hpp"

namespace vofd {

namespace {

double factorial(int k) { return std::tgamma(k + 1.0); }

/// Full-grid node lookup into either the interior or the boundary vector.
struct NodeRef {
    bool interior = false;
    long index = -1;
};

NodeRef locate(const SpatialGrid& grid, int i, int j) {
    const long in = grid.interior_index(i, j);
    if (in >= 0) return {true, in};
    const long bn = grid.boundary_index(i, j);
    if (bn >= 0) return {false, bn};
    throw Error(ErrorCode::domain_error, "stencil node lies outside the grid");
}

using Triplets = std::vector<Eigen::Triplet<double>>;

/// Adds c * (3 u(i) - 4 u(i - s) + u(i - 2s)) / (2h) along one axis to row `row`.
void add_one_sided(const SpatialGrid& grid, int row, const BoundaryNode& node, int axis, int outward, double c,
                   Triplets& in, Triplets& bd) {
    const double h = grid.spacing(axis);
    const double coeff[3] = {3.0, -4.0, 1.0};
    for (int m = 0; m < 3; ++m) {
        int i = node.index[0], j = node.index[1];
        (axis == 0 ? i : j) -= m * outward;
        const NodeRef ref = locate(grid, i, j);
        (ref.interior ? in : bd).emplace_back(row, static_cast<int>(ref.index), c * coeff[m] / (2.0 * h));
    }
}

int outward_sign(const BoundaryNode& node, int axis) {
    if (axis == 0) return (node.sides & side_left) ? -1 : (node.sides & side_right) ? 1 : 0;
    return (node.sides & side_bottom) ? -1 : (node.sides & side_top) ? 1 : 0;
}


}  // namespace

BoundaryDrive make_drive(const EllipticOperator& op, const Vector& g, int k, std::size_t id) {
    const SpatialGrid& grid = op.grid();
    if (k < 2) throw Error(ErrorCode::invalid_drive, "time exponent k must be at least 2");
    if (static_cast<std::size_t>(g.size()) != grid.boundary_count())
        throw Error(ErrorCode::shape_error, "drive length does not match the boundary node count");
    for (std::size_t b = 0; b < grid.boundary_count(); ++b) {
        if (!std::isfinite(g[static_cast<Eigen::Index>(b)]))
            throw Error(ErrorCode::invalid_drive, "drive values must be finite");
        if (g[static_cast<Eigen::Index>(b)] != 0.0 && !grid.in_s_in(b)) {
            std::ostringstream msg;
            msg << "drive is nonzero at boundary node " << b << ", which is outside S_in";
            throw Error(ErrorCode::invalid_drive, msg.str());
        }
    }
    return BoundaryDrive{g, k, lift_boundary_with_potential(g, op).interior, id};
}

std::vector<BoundaryDrive> nodal_drives(const EllipticOperator& op, int k) {
    const SpatialGrid& grid = op.grid();
    std::vector<BoundaryDrive> out;
    for (std::size_t b : grid.s_in()) {
        Vector g = Vector::Zero(static_cast<Eigen::Index>(grid.boundary_count()));
        g[static_cast<Eigen::Index>(b)] = 1.0;
        out.push_back(make_drive(op, g, k, b));
    }
    return out;
}

std::string domain_name(DtNDomain d) { return d == DtNDomain::time ? "time" : "laplace"; }

FluxStencil flux_stencil(const SpatialGrid& grid, std::span<const std::size_t> subset) {
    for (int axis = 0; axis < grid.dimension(); ++axis)
        if (grid.intervals(axis) < 2)
            throw Error(ErrorCode::invalid_grid, "one-sided flux stencil needs at least two intervals per axis");
    Triplets in, bd;
    const auto& nodes = grid.boundary();
    for (std::size_t r = 0; r < subset.size(); ++r) {
        if (subset[r] >= nodes.size()) throw Error(ErrorCode::domain_error, "flux requested at a non-boundary node");
        const BoundaryNode& node = nodes[subset[r]];
        const int row = static_cast<int>(r);
        const double weight = node.corner ? 1.0 / std::numbers::sqrt2 : 1.0;
        for (int axis = 0; axis < grid.dimension(); ++axis) {
            const int s = outward_sign(node, axis);
            if (s != 0) add_one_sided(grid, row, node, axis, s, weight, in, bd);
        }
    }
    FluxStencil st;
    st.interior.resize(static_cast<Eigen::Index>(subset.size()), static_cast<Eigen::Index>(grid.interior_count()));
    st.boundary.resize(static_cast<Eigen::Index>(subset.size()), static_cast<Eigen::Index>(grid.boundary_count()));
    st.interior.setFromTriplets(in.begin(), in.end());
    st.boundary.setFromTriplets(bd.begin(), bd.end());
    st.nodes.assign(subset.begin(), subset.end());
    return st;
}

Vector normal_flux(const FluxStencil& st, const Vector& interior, const Vector& boundary) {
    if (interior.size() != st.interior.cols() || boundary.size() != st.boundary.cols())
        throw Error(ErrorCode::shape_error, "field does not match the flux stencil");
    return st.interior * interior + st.boundary * boundary;
}

ComplexVector normal_flux(const FluxStencil& st, const ComplexVector& interior, const ComplexVector& boundary) {
    if (interior.size() != st.interior.cols() || boundary.size() != st.boundary.cols())
        throw Error(ErrorCode::shape_error, "field does not match the flux stencil");
    return st.interior.cast<Complex>() * interior + st.boundary.cast<Complex>() * boundary;
}

double caputo_of_power(int k, double alpha, double t) {
    return factorial(k) * std::pow(t, k - alpha) / std::tgamma(k + 1.0 - alpha);
}

namespace {

/// Power-law source of the remainder v = u - t^k G for one drive.
Source boundary_source(const ShiftedSolver& solver, const BoundaryDrive& drive) {
    const EllipticOperator& op = solver.op();
    const CoefficientField& field = solver.field();
    if (drive.k < 2) throw Error(ErrorCode::invalid_drive, "time exponent k must be at least 2");
    if (drive.lift.size() != static_cast<Eigen::Index>(op.size()) ||
        static_cast<std::size_t>(drive.g.size()) != op.grid().boundary_count())
        throw Error(ErrorCode::shape_error, "drive does not match the operator");
    const auto n = static_cast<Eigen::Index>(op.size());

    std::vector<PowerTerm> terms;
    Vector c(n), e(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = field.alpha[i];
        c[i] = -field.rho[i] * factorial(drive.k) / std::tgamma(drive.k + 1.0 - a) * drive.lift[i];
        e[i] = drive.k - a;
    }
    terms.push_back(PowerTerm{c, e});
    const Vector defect = op.apply_full(drive.lift, drive.g);
    if (defect.cwiseAbs().maxCoeff() > 0.0) terms.push_back(PowerTerm{-defect, Vector::Constant(n, drive.k)});
    return Source::power_law(std::move(terms));
}

void append_snapshot(BoundaryResult& out, const FluxStencil& st, const BoundaryDrive& drive, const SolutionSnapshot& s) {
    const double tk = std::pow(s.t, drive.k);
    SolutionSnapshot u = s;
    u.u = tk * drive.lift + s.u;
    out.records.push_back(DtNRecord{DtNDomain::time, Complex(s.t, 0.0), drive.id,
                                    normal_flux(st, u.u, Vector(tk * drive.g)).cast<Complex>()});
    out.snapshots.push_back(std::move(u));
}

}  // namespace

BoundaryResult solve_with_boundary(const ShiftedSolver& solver, const BoundaryDrive& drive,
                                   std::span<const double> times, const ContourOptions& options) {
    const Source src = boundary_source(solver, drive);
    const auto n = static_cast<Eigen::Index>(solver.op().size());
    const std::vector<SolutionSnapshot> v = solve_forward(solver, Vector::Zero(n), src, times, options);
    const FluxStencil st = flux_stencil(solver.op().grid(), solver.op().grid().s_out());
    BoundaryResult out;
    for (const SolutionSnapshot& s : v) append_snapshot(out, st, drive, s);
    return out;
}

std::vector<BoundaryResult> solve_with_boundary(const ShiftedSolver& solver, std::span<const BoundaryDrive> drives,
                                                std::span<const double> times, const ContourOptions& options) {
    std::vector<Source> sources;
    for (const auto& d : drives) sources.push_back(boundary_source(solver, d));
    const auto n = static_cast<Eigen::Index>(solver.op().size());
    const FluxStencil st = flux_stencil(solver.op().grid(), solver.op().grid().s_out());
    std::vector<BoundaryResult> out(drives.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (k > 0 && !(times[k] > times[k - 1]))
            throw Error(ErrorCode::domain_error, "times must be strictly increasing");
        for (std::size_t j = 0; j < drives.size(); ++j) {
            const auto v = solve_forward(solver, Vector::Zero(n), sources[j], times.subspan(k, 1), options);
            append_snapshot(out[j], st, drives[j], v.front());
        }
    }
    return out;
}

DtNRecord laplace_dtn(const ShiftedSolver& solver, Complex p, const Vector& g, std::size_t id) {
    const EllipticOperator& op = solver.op();
    if (static_cast<std::size_t>(g.size()) != op.grid().boundary_count())
        throw Error(ErrorCode::shape_error, "drive length does not match the boundary node count");
    const ComplexVector w = solver.solve(p, ComplexVector(op.boundary_coupling().cast<Complex>() * g.cast<Complex>()));
    const FluxStencil st = flux_stencil(op.grid(), op.grid().s_out());
    return DtNRecord{DtNDomain::laplace, p, id, normal_flux(st, w, ComplexVector(g.cast<Complex>()))};
}

DtNRecord laplace_dtn(const ShiftedSolver& solver, Complex p, const BoundaryDrive& drive) {
    return laplace_dtn(solver, p, drive.g, drive.id);
}

LaplaceRule laplace_rule(double p_min, double p_max, int levels, int order) {
    if (!(p_min > 0.0) || !(p_max >= p_min)) throw Error(ErrorCode::domain_error, "need 0 < p_min <= p_max");
    if (levels < 0) throw Error(ErrorCode::domain_error, "dyadic level count must be non-negative");
    LaplaceRule rule;
    rule.horizon = std::max(40.0 / p_min, 20.0);
    std::vector<double> breaks{0.0};
    for (int l = levels; l >= 1; --l) breaks.push_back(std::ldexp(1.0, -l));
    breaks.push_back(1.0);
    const double width = std::min(1.0, 2.0 / p_max);
    const int panels = static_cast<int>(std::ceil((rule.horizon - 1.0) / width));
    for (int m = 1; m <= panels; ++m) breaks.push_back(1.0 + (rule.horizon - 1.0) * m / panels);
    const CompositeRule c = composite_gauss(breaks, order);
    rule.nodes = c.nodes;
    rule.weights = c.weights;
    return rule;
}

namespace {

/// Laplace sum and tail estimate for samples at the rule nodes.
template <class Vec>
std::pair<ComplexVector, double> laplace_sum(const LaplaceRule& rule, std::span<const Vec> samples, double p) {
    if (samples.size() != rule.nodes.size())
        throw Error(ErrorCode::shape_error, "sample count does not match the Laplace rule");
    if (samples.empty()) return {ComplexVector(), 0.0};
    ComplexVector acc = ComplexVector::Zero(samples.front().size());
    for (std::size_t j = 0; j < samples.size(); ++j)
        acc += (rule.weights[j] * std::exp(-p * rule.nodes[j])) * samples[j].template cast<Complex>();
    const std::size_t last = samples.size() - 1;
    const double fN = samples[last].cwiseAbs().maxCoeff();
    const double fP = last > 0 ? samples[last - 1].cwiseAbs().maxCoeff() : fN;
    double growth = 0.0;
    if (fN > 0.0 && fP > 0.0 && last > 0)
        growth = std::max(0.0, std::log(fN / fP) / std::log(rule.nodes[last] / rule.nodes[last - 1]));
    const double T = rule.nodes[last];
    const double denom = p - growth / T;
    const double tail = fN == 0.0 ? 0.0 : denom > 0.0 ? fN * std::exp(-p * T) / denom : HUGE_VAL;
    return {acc, tail};
}

void check_tail(double tail, double scale, double tol, double p) {
    if (tail > tol * std::max(scale, 1e-300)) {
        std::ostringstream msg;
        msg << "Laplace horizon too short at p = " << p << ": tail estimate " << tail << " against result " << scale;
        throw Error(ErrorCode::horizon_error, msg.str());
    }
}

}  // namespace

DtNRecord laplace_from_time(const LaplaceRule& rule, std::span<const Vector> flux, double p, int k,
                            std::size_t drive, double tol) {
    if (!(p > 0.0)) throw Error(ErrorCode::domain_error, "Laplace point must be real and positive");
    auto [acc, tail] = laplace_sum<Vector>(rule, flux, p);
    const double scale = std::pow(p, k + 1) / factorial(k);
    acc *= scale;
    tail *= scale;
    if (acc.size() > 0) check_tail(tail, acc.cwiseAbs().maxCoeff(), tol, p);
    return DtNRecord{DtNDomain::laplace, Complex(p, 0.0), drive, acc};
}

WeakSolutionReport verify_weak_solution(const ShiftedSolver& solver, const Vector& u0, const Source& f,
                                        std::span<const double> p_samples, const ContourOptions& options) {
    if (!f.has_laplace_form())
        throw Error(ErrorCode::not_applicable, "weak-solution check needs a source with a Laplace transform");
    if (p_samples.empty()) throw Error(ErrorCode::domain_error, "no p samples given");
    for (double p : p_samples)
        if (!(p > 0.0)) throw Error(ErrorCode::domain_error, "p samples must be real and positive");
    const auto [pmin, pmax] = std::minmax_element(p_samples.begin(), p_samples.end());
    const LaplaceRule rule = laplace_rule(*pmin, *pmax);
    const CoefficientField& field = solver.field();
    const auto n = static_cast<Eigen::Index>(field.size());

    const std::vector<SolutionSnapshot> u = solve_forward(solver, u0, f, rule.nodes, options);
    std::vector<Vector> samples;
    samples.reserve(u.size());
    for (const auto& s : u) samples.push_back(s.u);

    WeakSolutionReport report;
    for (double p : p_samples) {
        auto [lhs, tail] = laplace_sum<Vector>(rule, samples, p);
        ComplexVector rhs = f.laplace(Complex(p, 0.0), n);
        for (Eigen::Index i = 0; i < n; ++i) rhs[i] += field.rho[i] * std::pow(p, field.alpha[i] - 1.0) * u0[i];
        const ComplexVector ref = solver.solve(Complex(p, 0.0), rhs);
        const double scale = ref.norm();
        check_tail(tail, lhs.size() ? lhs.cwiseAbs().maxCoeff() : 0.0, 1e-6, p);
        const double res = scale == 0.0 ? (lhs.norm() == 0.0 ? 0.0 : HUGE_VAL) : (lhs - ref).norm() / scale;
        report.p.push_back(p);
        report.residual.push_back(res);
        report.max_residual = std::max(report.max_residual, res);
    }
    return report;
}

}  // namespace vofd
