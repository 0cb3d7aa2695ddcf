#pragma once

#include <span>
#include <string>
#include <vector>

#include "vofd/contour.hpp"
#include "vofd/grid.hpp"
#include "vofd/resolvent.hpp"

namespace vofd {

/// Boundary data g with time profile t^k, and its lift into the interior.
///
/// `g` holds one value per boundary node and vanishes outside S_in. The lift
/// solves A_q G = B g, so the full stencil of A_q annihilates (G, g).
struct BoundaryDrive {
    Vector g;
    int k = 2;
    Vector lift;
    std::size_t id = 0;
};

/// Validates g and k and lifts g with the potential of `op`.
/// Throws Error(invalid_drive) for k < 2 or g nonzero outside S_in.
BoundaryDrive make_drive(const EllipticOperator& op, const Vector& g, int k, std::size_t id = 0);

/// Unit drives e_b for every boundary node b in S_in.
std::vector<BoundaryDrive> nodal_drives(const EllipticOperator& op, int k);

enum class DtNDomain { time, laplace };
std::string domain_name(DtNDomain d);

/// Outward normal fluxes on S_out for one drive at one time or Laplace point.
struct DtNRecord {
    DtNDomain domain = DtNDomain::time;
    Complex point;  // t (real) or p
    std::size_t drive = 0;
    ComplexVector flux;  // indexed like grid.s_out()
};

/// Linear map (interior values, boundary values) -> outward normal
/// derivatives at a subset of boundary nodes.
///
/// Edge nodes use the one-sided difference (3 u_0 - 4 u_1 + u_2) / (2h)
/// along the inward normal. Corners carry the normal (s_x, s_y)/sqrt(2) and
/// combine the two one-sided edge derivatives accordingly.
struct FluxStencil {
    SparseMatrix interior;  // rows: subset, cols: interior nodes
    SparseMatrix boundary;  // rows: subset, cols: boundary nodes
    std::vector<std::size_t> nodes;
};

/// Throws Error(domain_error) for indices outside the boundary list and
/// Error(invalid_grid) when an axis has fewer than two intervals.
FluxStencil flux_stencil(const SpatialGrid& grid, std::span<const std::size_t> subset);

Vector normal_flux(const FluxStencil& stencil, const Vector& interior, const Vector& boundary);
ComplexVector normal_flux(const FluxStencil& stencil, const ComplexVector& interior, const ComplexVector& boundary);

/// Solutions of the boundary-driven problem with zero initial data.
struct BoundaryResult {
    std::vector<SolutionSnapshot> snapshots;  // interior values of u
    std::vector<DtNRecord> records;
};

/// Solves (rho d_t^alpha + A_q) u = 0 with u = t^k g on the boundary and
/// u(0) = 0 by writing u = t^k G + v, where v has the power-law source
/// -rho k! / Gamma(k + 1 - alpha) t^{k - alpha} G.
BoundaryResult solve_with_boundary(const ShiftedSolver& solver, const BoundaryDrive& drive,
                                   std::span<const double> times, const ContourOptions& options = {});

/// Several drives at shared, strictly increasing times. Evaluates all drives
/// at one time before moving on, so each contour's factorizations are
/// reused across drives while still cached.
std::vector<BoundaryResult> solve_with_boundary(const ShiftedSolver& solver, std::span<const BoundaryDrive> drives,
                                                std::span<const double> times, const ContourOptions& options = {});

/// Flux of the Dirichlet problem (A_q + rho p^alpha) w = 0 inside, w = g on
/// the boundary. Equals p^{k+1}/k! times the Laplace transform of the
/// time-domain flux for the drive t^k g.
DtNRecord laplace_dtn(const ShiftedSolver& solver, Complex p, const BoundaryDrive& drive);
DtNRecord laplace_dtn(const ShiftedSolver& solver, Complex p, const Vector& g, std::size_t id = 0);

/// Composite Gauss rule on [0, horizon] for Laplace integrals at real p:
/// dyadic panels from 2^-levels up to 1, then panels of width at most
/// min(1, 2 / p_max) up to horizon = max(40 / p_min, 20).
struct LaplaceRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    double horizon = 0.0;
};
LaplaceRule laplace_rule(double p_min, double p_max, int levels = 20, int order = 8);

/// (p^{k+1}/k!) int_0^T e^{-pt} flux(t) dt from fluxes sampled at the rule
/// nodes. The neglected tail is estimated from the growth rate over the last
/// two nodes; when it exceeds tol times the result, Error(horizon_error).
DtNRecord laplace_from_time(const LaplaceRule& rule, std::span<const Vector> flux, double p, int k,
                            std::size_t drive = 0, double tol = 1e-8);

/// Agreement of a forward solution with its Laplace-domain characterization
/// (A_q + rho p^alpha)^{-1} (F(p) + rho p^{alpha-1} u0) at sampled real p.
struct WeakSolutionReport {
    std::vector<double> p;
    std::vector<double> residual;  // relative, per p
    double max_residual = 0.0;
};

/// The source must have a Laplace form (zero or power-law terms).
WeakSolutionReport verify_weak_solution(const ShiftedSolver& solver, const Vector& u0, const Source& f,
                                        std::span<const double> p_samples, const ContourOptions& options = {});

/// Closed-form Caputo derivative of t^k at order alpha: k! t^{k-alpha} / Gamma(k+1-alpha).
double caputo_of_power(int k, double alpha, double t);

}  // namespace vofd
