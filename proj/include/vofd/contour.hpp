#pragma once

#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vofd/grid.hpp"
#include "vofd/resolvent.hpp"

namespace vofd {

/// Quadrature node on the contour; `weight` already contains dp.
struct ContourNode {
    Complex p;
    Complex weight;
    /// Ray panel index counted outward from |p| = epsilon; -1 on the arc.
    int panel = -1;
};

/// Discretized keyhole contour: two rays at angles -theta, +theta joined by
/// the arc |p| = epsilon, traversed with the negative half-line on the left.
///
/// Nodes are ordered along the path: lower ray inward, arc, upper ray
/// outward. Every node has its conjugate with weight -conj(w), so
/// contributions of real data pair up into real sums.
struct ContourQuadrature {
    double epsilon = 0.5;
    double theta = 0.75 * std::numbers::pi;
    double r_max = 0.0;
    int n_arc = 0;  // nodes on the arc
    int n_ray = 0;  // nodes per ray
    int ray_panels = 0;
    double ray_panel_width = 1.0;  // in log(s / epsilon)
    /// When positive, rays end at |p| = tail_start and the analytic tail of
    /// the leading large-p term is added by apply_S2.
    double tail_start = 0.0;
    std::vector<ContourNode> nodes;
};

/// Contour with uniform Gauss panels: `n_arc` arc nodes and `n_ray` nodes on
/// each ray (log-uniform in s), rounded up to whole panels of eight.
ContourQuadrature build_contour(double epsilon, double theta, int n_arc, int n_ray, double r_max);

/// Tuning for time-adapted contours and the forward solver.
struct ContourOptions {
    double theta = 0.75 * std::numbers::pi;
    /// Fixed epsilon; when unset the schedule 1/2 for t <= 2 and 1/t beyond is used.
    std::optional<double> epsilon;
    int arc_panels = 4;
    int gauss_order = 8;
    double ray_panel_width = 0.5;
    /// Rays stop where |e^{t p}| = e^{-truncation}.
    double truncation = 37.0;
    double realness_tol = 1e-10;
    int duhamel_panels = 32;
    int threads = 1;
};

double scheduled_epsilon(double t, const ContourOptions& options);

/// Contour for evaluating e^{tp}-weighted integrals at time t. R_max is
/// rounded up to a whole ray panel, so contours sharing epsilon are nested.
ContourQuadrature contour_for_time(double t, const ContourOptions& options);

/// Contour for the time-independent S2 integral: rays extend until the
/// neglected next-order tail is below roundoff for this operator and field.
ContourQuadrature contour_for_s2(const EllipticOperator& op, const CoefficientField& field,
                                 const ContourOptions& options);

enum class Provenance { contour, l1, oracle };
std::string provenance_name(Provenance p);

struct SolutionSnapshot {
    double t = 0.0;
    Vector u;
    double imag_residual = 0.0;
    Provenance provenance = Provenance::contour;
};

/// Sum (1/2 pi i) sum_j w_j term(j, p_j) over the contour nodes. Terms are
/// evaluated in parallel into per-node slots and reduced in node order.
/// When `magnitude` is given it receives (1/2 pi) sum_j |w_j term_j|_inf,
/// the scale against which roundoff in the sum is judged.
ComplexVector contour_sum(const ContourQuadrature& contour, int threads,
                          const std::function<ComplexVector(std::size_t, Complex)>& term,
                          double* magnitude = nullptr);

SolutionSnapshot apply_S0(const ContourQuadrature& contour, const ShiftedSolver& solver, double t,
                          const Vector& u0, const ContourOptions& options = {});
SolutionSnapshot apply_S1(const ContourQuadrature& contour, const ShiftedSolver& solver, double t,
                          const Vector& psi, const ContourOptions& options = {});
SolutionSnapshot apply_S2(const ContourQuadrature& contour, const ShiftedSolver& solver, const Vector& psi,
                          const ContourOptions& options = {});

SolutionSnapshot apply_S0(const ContourQuadrature& contour, const EllipticOperator& op,
                          const CoefficientField& field, double t, const Vector& u0);
SolutionSnapshot apply_S1(const ContourQuadrature& contour, const EllipticOperator& op,
                          const CoefficientField& field, double t, const Vector& psi);
SolutionSnapshot apply_S2(const ContourQuadrature& contour, const EllipticOperator& op,
                          const CoefficientField& field, const Vector& psi);

/// One term c(x) t^{gamma(x)} of a source with a closed-form Laplace transform.
struct PowerTerm {
    Vector coeff;
    Vector exponent;  // nodewise, > -1
};

/// Interior source f(t): zero, a sum of nodewise power laws, or a general
/// function of time (expression or table).
class Source {
public:
    static Source zero();
    static Source power_law(std::vector<PowerTerm> terms);
    static Source function(std::function<Vector(double)> f);
    /// Per-node expressions in x, y and t.
    static Source expression(const std::string& expr, const SpatialGrid& grid);
    /// Piecewise-linear interpolation of node values given at sorted times.
    static Source table(std::vector<double> times, std::vector<Vector> values);

    bool is_zero() const noexcept { return kind_ == Kind::zero; }
    bool has_laplace_form() const noexcept { return kind_ != Kind::function; }
    const std::vector<PowerTerm>& terms() const noexcept { return terms_; }

    Vector operator()(double t, Eigen::Index n) const;
    /// Laplace transform F(p) for zero and power-law sources.
    ComplexVector laplace(Complex p, Eigen::Index n) const;

private:
    enum class Kind { zero, power, function };
    Kind kind_ = Kind::zero;
    std::vector<PowerTerm> terms_;
    std::function<Vector(double)> fn_;
};

/// Solution of (rho d_t^alpha + A_q) u = f, u(0) = u0 at the given times.
///
/// Power-law sources are handled through their Laplace transform inside a
/// single contour integral; general sources use the Duhamel integral with
/// the weakly singular leading part of the kernel integrated exactly.
std::vector<SolutionSnapshot> solve_forward(const ShiftedSolver& solver, const Vector& u0, const Source& f,
                                            std::span<const double> times, const ContourOptions& options = {});

std::vector<SolutionSnapshot> solve_forward(const EllipticOperator& op, const CoefficientField& field,
                                            const Vector& u0, const Source& f, std::span<const double> times,
                                            const ContourOptions& options = {});

}  // namespace vofd
