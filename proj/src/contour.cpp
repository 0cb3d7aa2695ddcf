#include "vofd/contour.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "vofd/error.hpp"
#include "vofd/parallel.hpp"
#include "vofd/quadrature.hpp"

namespace vofd {

namespace {

constexpr Complex kI(0.0, 1.0);
constexpr double kMaxLogRadius = 690.0;

void check_contour_parameters(double epsilon, double theta) {
    if (!(theta > std::numbers::pi / 2.0 && theta < std::numbers::pi)) {
        std::ostringstream msg;
        msg << "theta = " << theta << " is outside (pi/2, pi)";
        throw Error(ErrorCode::contour_error, msg.str());
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        std::ostringstream msg;
        msg << "epsilon = " << epsilon << " is outside (0, 1)";
        throw Error(ErrorCode::contour_error, msg.str());
    }
}

ContourQuadrature make_contour(double epsilon, double theta, int arc_panels, int order, int ray_panels,
                               double width) {
    check_contour_parameters(epsilon, theta);
    if (arc_panels < 1 || ray_panels < 1 || order < 1 || !(width > 0.0))
        throw Error(ErrorCode::contour_error, "contour needs at least one panel per segment");
    ContourQuadrature c;
    c.epsilon = epsilon;
    c.theta = theta;
    c.ray_panels = ray_panels;
    c.ray_panel_width = width;
    c.r_max = epsilon * std::exp(width * ray_panels);
    c.n_arc = arc_panels * order;
    c.n_ray = ray_panels * order;

    std::vector<double> ray_breaks(static_cast<std::size_t>(ray_panels) + 1);
    for (int k = 0; k <= ray_panels; ++k) ray_breaks[static_cast<std::size_t>(k)] = width * k;
    const CompositeRule ray = composite_gauss(ray_breaks, order);
    std::vector<double> arc_breaks(static_cast<std::size_t>(arc_panels) + 1);
    for (int k = 0; k <= arc_panels; ++k)
        arc_breaks[static_cast<std::size_t>(k)] = -theta + 2.0 * theta * k / arc_panels;
    const CompositeRule arc = composite_gauss(arc_breaks, order);

    const Complex up = std::polar(1.0, theta);
    const Complex down = std::conj(up);
    c.nodes.reserve(static_cast<std::size_t>(c.n_arc + 2 * c.n_ray));
    for (std::size_t j = ray.nodes.size(); j-- > 0;) {
        const double s = epsilon * std::exp(ray.nodes[j]);
        c.nodes.push_back({s * down, -down * s * ray.weights[j], static_cast<int>(j) / order});
    }
    for (std::size_t j = 0; j < arc.nodes.size(); ++j) {
        const Complex p = std::polar(epsilon, arc.nodes[j]);
        c.nodes.push_back({p, kI * p * arc.weights[j], -1});
    }
    for (std::size_t j = 0; j < ray.nodes.size(); ++j) {
        const double s = epsilon * std::exp(ray.nodes[j]);
        c.nodes.push_back({s * up, up * s * ray.weights[j], static_cast<int>(j) / order});
    }
    return c;
}

int panels_for_radius(double radius, double epsilon, double width) {
    const double span = std::log(radius / epsilon);
    return std::max(1, static_cast<int>(std::ceil(span / width - 1e-12)));
}

double ray_radius_for_time(double t, const ContourOptions& o) {
    return std::max(2.0, o.truncation / (t * std::abs(std::cos(o.theta))));
}

double sup_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

SolutionSnapshot finish(double t, const ComplexVector& z, double input_scale, double tol) {
    SolutionSnapshot snap;
    snap.t = t;
    snap.u = z.real();
    snap.imag_residual = z.size() ? z.imag().cwiseAbs().maxCoeff() : 0.0;
    const double scale = std::max(sup_norm(snap.u), input_scale);
    if (snap.imag_residual > tol * scale) {
        std::ostringstream msg;
        msg << "imaginary residual " << snap.imag_residual << " exceeds " << tol << " x " << scale << " at t = " << t;
        throw Error(ErrorCode::realness_violation, msg.str());
    }
    return snap;
}

void check_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::domain_error, "evaluation time must be positive");
}

void check_length(const Vector& v, const ShiftedSolver& solver, const char* what) {
    if (static_cast<std::size_t>(v.size()) != solver.op().size())
        throw Error(ErrorCode::shape_error, std::string(what) + " length does not match the interior node count");
}

/// Tail of the leading term (rho p^alpha)^{-1} p^{-1} beyond |p| = S on both rays.
ComplexVector s2_tail(const ContourQuadrature& c, const CoefficientField& f, const Vector& psi) {
    ComplexVector out(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const double a = f.alpha[i];
        out[i] = -std::sin(a * c.theta) * std::pow(c.tail_start, -a) / (std::numbers::pi * a * f.rho[i]) * psi[i];
    }
    return out;
}

}  // namespace

ContourQuadrature build_contour(double epsilon, double theta, int n_arc, int n_ray, double r_max) {
    check_contour_parameters(epsilon, theta);
    if (n_arc < 4 || n_ray < 4) throw Error(ErrorCode::contour_error, "need at least 4 nodes per segment");
    if (!(r_max > 1.0) || !(r_max > epsilon) || !std::isfinite(r_max))
        throw Error(ErrorCode::contour_error, "truncation radius must exceed 1");
    constexpr int order = 8;
    const int arc_panels = (n_arc + order - 1) / order;
    const int ray_panels = (n_ray + order - 1) / order;
    return make_contour(epsilon, theta, arc_panels, order, ray_panels, std::log(r_max / epsilon) / ray_panels);
}

double scheduled_epsilon(double t, const ContourOptions& options) {
    if (options.epsilon) return *options.epsilon;
    return t <= 2.0 ? 0.5 : 1.0 / t;
}

ContourQuadrature contour_for_time(double t, const ContourOptions& o) {
    check_time(t);
    const double eps = scheduled_epsilon(t, o);
    check_contour_parameters(eps, o.theta);
    const int panels = panels_for_radius(ray_radius_for_time(t, o), eps, o.ray_panel_width);
    return make_contour(eps, o.theta, o.arc_panels, o.gauss_order, panels, o.ray_panel_width);
}

ContourQuadrature contour_for_s2(const EllipticOperator& op, const CoefficientField& field,
                                 const ContourOptions& o) {
    const double eps = o.epsilon.value_or(0.5);
    check_contour_parameters(eps, o.theta);
    double norm_a = 0.0;
    for (Eigen::Index k = 0; k < op.matrix().outerSize(); ++k) {
        double col = 0.0;
        for (SparseMatrix::InnerIterator it(op.matrix(), k); it; ++it) col += std::abs(it.value());
        norm_a = std::max(norm_a, col);
    }
    // Beyond S the next term of R(p) = D^{-1} - D^{-1} A D^{-1} + ... contributes
    // about |A| S^{-2 alpha0} / (rho0^2 alpha0); push it below roundoff.
    const double log_s = std::log(std::max(norm_a, 1.0) / (field.rho0 * field.rho0 * field.alpha0 * 1e-13)) /
                         (2.0 * field.alpha0);
    const double log_r = std::clamp(log_s, std::log(2.0), kMaxLogRadius);
    const int panels = panels_for_radius(std::exp(log_r), eps, o.ray_panel_width);
    ContourQuadrature c = make_contour(eps, o.theta, o.arc_panels, o.gauss_order, panels, o.ray_panel_width);
    c.tail_start = c.r_max;
    return c;
}

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::contour: return "contour";
        case Provenance::l1: return "l1";
        case Provenance::oracle: return "oracle";
    }
    return "unknown";
}

ComplexVector contour_sum(const ContourQuadrature& contour, int threads,
                          const std::function<ComplexVector(std::size_t, Complex)>& term, double* magnitude) {
    const std::size_t m = contour.nodes.size();
    std::vector<ComplexVector> slots(m);
    parallel_for(m, threads, [&](std::size_t j) {
        slots[j] = contour.nodes[j].weight * term(j, contour.nodes[j].p);
    });
    ComplexVector sum;
    double mag = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        if (slots[j].size() == 0) continue;
        if (sum.size() == 0) sum = ComplexVector::Zero(slots[j].size());
        sum += slots[j];
        if (magnitude) mag += slots[j].cwiseAbs().maxCoeff();
    }
    if (magnitude) *magnitude = mag / (2.0 * std::numbers::pi);
    return sum / (2.0 * std::numbers::pi * kI);
}

SolutionSnapshot apply_S0(const ContourQuadrature& contour, const ShiftedSolver& solver, double t,
                          const Vector& u0, const ContourOptions& options) {
    check_time(t);
    check_length(u0, solver, "initial data");
    const CoefficientField& f = solver.field();
    double mag = 0.0;
    const ComplexVector z = contour_sum(contour, options.threads, [&](std::size_t, Complex p) {
        const ComplexVector rhs = (f.rho.cast<Complex>().array() *
                                   nodal_power(ComplexShift::from(p), (f.alpha.array() - 1.0).matrix()).array() *
                                   u0.cast<Complex>().array())
                                      .matrix();
        return ComplexVector(std::exp(t * p) * solver.solve(p, rhs));
    }, &mag);
    return finish(t, z, std::max(sup_norm(u0), mag), options.realness_tol);
}

SolutionSnapshot apply_S1(const ContourQuadrature& contour, const ShiftedSolver& solver, double t,
                          const Vector& psi, const ContourOptions& options) {
    check_time(t);
    check_length(psi, solver, "source");
    const ComplexVector rhs = psi.cast<Complex>();
    double mag = 0.0;
    const ComplexVector z = contour_sum(contour, options.threads, [&](std::size_t, Complex p) {
        return ComplexVector(std::exp(t * p) * solver.solve(p, rhs));
    }, &mag);
    return finish(t, z, std::max(sup_norm(psi), mag), options.realness_tol);
}

SolutionSnapshot apply_S2(const ContourQuadrature& contour, const ShiftedSolver& solver, const Vector& psi,
                          const ContourOptions& options) {
    check_length(psi, solver, "source");
    const ComplexVector rhs = psi.cast<Complex>();
    double mag = 0.0;
    ComplexVector z = contour_sum(contour, options.threads, [&](std::size_t, Complex p) {
        return ComplexVector(solver.solve(p, rhs) / p);
    }, &mag);
    if (contour.tail_start > 0.0) z += s2_tail(contour, solver.field(), psi);
    return finish(0.0, z, std::max(sup_norm(psi), mag), options.realness_tol);
}

SolutionSnapshot apply_S0(const ContourQuadrature& contour, const EllipticOperator& op,
                          const CoefficientField& field, double t, const Vector& u0) {
    return apply_S0(contour, ShiftedSolver(op, field), t, u0);
}

SolutionSnapshot apply_S1(const ContourQuadrature& contour, const EllipticOperator& op,
                          const CoefficientField& field, double t, const Vector& psi) {
    return apply_S1(contour, ShiftedSolver(op, field), t, psi);
}

SolutionSnapshot apply_S2(const ContourQuadrature& contour, const EllipticOperator& op,
                          const CoefficientField& field, const Vector& psi) {
    return apply_S2(contour, ShiftedSolver(op, field), psi);
}

Source Source::zero() { return Source{}; }

Source Source::power_law(std::vector<PowerTerm> terms) {
    Source s;
    for (const auto& term : terms) {
        if (term.coeff.size() != term.exponent.size())
            throw Error(ErrorCode::shape_error, "power-law coefficient and exponent lengths differ");
        if (term.exponent.size() && !(term.exponent.minCoeff() > -1.0))
            throw Error(ErrorCode::domain_error, "power-law exponents must exceed -1");
    }
    s.kind_ = terms.empty() ? Kind::zero : Kind::power;
    s.terms_ = std::move(terms);
    return s;
}

Source Source::function(std::function<Vector(double)> f) {
    Source s;
    s.kind_ = Kind::function;
    s.fn_ = std::move(f);
    return s;
}

Source Source::expression(const std::string& expr, const SpatialGrid& grid) {
    const Expression e(expr);
    const auto coords = grid.interior_coords();
    return function([e, coords](double t) {
        Vector v(static_cast<Eigen::Index>(coords.size()));
        for (std::size_t i = 0; i < coords.size(); ++i) v[static_cast<Eigen::Index>(i)] = e(coords[i][0], coords[i][1], t);
        return v;
    });
}

Source Source::table(std::vector<double> times, std::vector<Vector> values) {
    if (times.empty() || times.size() != values.size())
        throw Error(ErrorCode::shape_error, "source table needs one value vector per time");
    if (!std::is_sorted(times.begin(), times.end()))
        throw Error(ErrorCode::domain_error, "source table times must be sorted");
    return function([times = std::move(times), values = std::move(values)](double t) -> Vector {
        if (t <= times.front()) return values.front();
        if (t >= times.back()) return values.back();
        const auto hi = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
        const double a = (t - times[hi - 1]) / (times[hi] - times[hi - 1]);
        return (1.0 - a) * values[hi - 1] + a * values[hi];
    });
}

Vector Source::operator()(double t, Eigen::Index n) const {
    switch (kind_) {
        case Kind::zero: return Vector::Zero(n);
        case Kind::power: {
            Vector v = Vector::Zero(n);
            for (const auto& term : terms_) {
                if (term.coeff.size() != n) throw Error(ErrorCode::shape_error, "source length mismatch");
                v += (term.coeff.array() * Eigen::pow(t, term.exponent.array())).matrix();
            }
            return v;
        }
        case Kind::function: {
            Vector v = fn_(t);
            if (v.size() != n) throw Error(ErrorCode::shape_error, "source length mismatch");
            return v;
        }
    }
    return Vector::Zero(n);
}

ComplexVector Source::laplace(Complex p, Eigen::Index n) const {
    if (kind_ == Kind::function)
        throw Error(ErrorCode::not_applicable, "source has no closed-form Laplace transform");
    ComplexVector out = ComplexVector::Zero(n);
    const Complex log_p = std::log(p);
    for (const auto& term : terms_) {
        if (term.coeff.size() != n) throw Error(ErrorCode::shape_error, "source length mismatch");
        for (Eigen::Index i = 0; i < n; ++i) {
            const double g = term.exponent[i];
            out[i] += term.coeff[i] * std::tgamma(g + 1.0) * std::exp(-(g + 1.0) * log_p);
        }
    }
    return out;
}

namespace {

/// Duhamel integral of the kernel S1 against a general source at time t.
/// Breaks graded geometrically toward both ends: `panels` toward a on the
/// left half and panels / 2 toward b on the right half, where the source
/// f(t - w) may be non-smooth.
std::vector<double> two_sided_breaks(double a, double b, int panels) {
    const double mid = 0.5 * (a + b);
    std::vector<double> out = graded_breaks(a, mid, panels);
    const std::vector<double> right = graded_breaks(a, mid, std::max(1, panels / 2));
    for (auto it = right.rbegin() + 1; it != right.rend(); ++it) out.push_back(b - (*it - a));
    return out;
}

ComplexVector duhamel(const ShiftedSolver& solver, const Source& f, double t, const ContourOptions& o,
                      double& magnitude) {
    const CoefficientField& field = solver.field();
    const auto n = static_cast<Eigen::Index>(field.size());
    const std::vector<double> breaks = two_sided_breaks(0.0, t, o.duhamel_panels);
    CompositeRule wr = composite_gauss(std::span<const double>(breaks).subspan(1), o.gauss_order);
    {
        // Near w = 0 the remainder kernel behaves like w^{2 alpha - 1}; on the
        // innermost panel w = delta v^k with k = 1 / (2 alpha0) makes it smooth.
        const double delta = breaks[1];
        const double k = 1.0 / (2.0 * field.alpha0);
        const GaussRule& g = gauss_legendre(o.gauss_order);
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            const double v = 0.5 * (g.nodes[i] + 1.0);
            wr.nodes.push_back(delta * std::pow(v, k));
            wr.weights.push_back(0.5 * g.weights[i] * delta * k * std::pow(v, k - 1.0));
        }
    }
    const auto m = static_cast<Eigen::Index>(wr.nodes.size());

    // Leading part w^{alpha-1} / (rho Gamma(alpha)) integrated exactly in
    // w = t v^{1/alpha}, grouped by distinct nodal order.
    ComplexVector leading = ComplexVector::Zero(n);
    {
        const CompositeRule vr = composite_gauss(two_sided_breaks(0.0, 1.0, o.duhamel_panels), o.gauss_order);
        std::map<double, std::vector<Eigen::Index>> groups;
        for (Eigen::Index i = 0; i < n; ++i) groups[field.alpha[i]].push_back(i);
        for (const auto& [a, idx] : groups) {
            Vector acc = Vector::Zero(n);
            for (std::size_t k = 0; k < vr.nodes.size(); ++k)
                acc += vr.weights[k] * f(t - t * std::pow(vr.nodes[k], 1.0 / a), n);
            for (Eigen::Index i : idx)
                leading[i] = std::pow(t, a) / (a * field.rho[i] * std::tgamma(a)) * acc[i];
        }
    }

    // Remainder kernel R(p) - (rho p^alpha)^{-1}, one contour shared by all
    // Duhamel nodes; node w_j uses the ray panels its own truncation needs.
    Eigen::MatrixXcd F(n, m);
    for (Eigen::Index j = 0; j < m; ++j) F.col(j) = f(t - wr.nodes[static_cast<std::size_t>(j)], n).cast<Complex>();
    const double eps = scheduled_epsilon(t, o);
    std::vector<int> needed(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j)
        needed[static_cast<std::size_t>(j)] =
            panels_for_radius(ray_radius_for_time(wr.nodes[static_cast<std::size_t>(j)], o), eps, o.ray_panel_width);
    const int max_panels = *std::max_element(needed.begin(), needed.end());
    const ContourQuadrature c = make_contour(eps, o.theta, o.arc_panels, o.gauss_order, max_panels, o.ray_panel_width);

    const ComplexVector remainder = contour_sum(c, o.threads, [&](std::size_t node, Complex p) {
        const int panel = c.nodes[node].panel;
        const ComplexVector d = (field.rho.cast<Complex>().array() *
                                 nodal_power(ComplexShift::from(p), field.alpha).array())
                                    .matrix();
        const Eigen::MatrixXcd x = solver.solve(p, F) - (F.array().colwise() / d.array()).matrix();
        ComplexVector acc = ComplexVector::Zero(n);
        for (Eigen::Index j = 0; j < m; ++j) {
            if (panel >= needed[static_cast<std::size_t>(j)]) continue;
            const double w = wr.nodes[static_cast<std::size_t>(j)];
            acc += (wr.weights[static_cast<std::size_t>(j)] * std::exp(w * p)) * x.col(j);
        }
        return acc;
    }, &magnitude);
    magnitude = std::max(magnitude, sup_norm(leading.real()));
    return leading + remainder;
}

}  // namespace

std::vector<SolutionSnapshot> solve_forward(const ShiftedSolver& solver, const Vector& u0, const Source& f,
                                            std::span<const double> times, const ContourOptions& o) {
    check_length(u0, solver, "initial data");
    for (std::size_t k = 0; k < times.size(); ++k) {
        check_time(times[k]);
        if (k > 0 && times[k] < times[k - 1]) throw Error(ErrorCode::domain_error, "times must be sorted");
    }
    check_contour_parameters(o.epsilon.value_or(0.5), o.theta);
    const CoefficientField& field = solver.field();
    const auto n = static_cast<Eigen::Index>(field.size());
    const bool zero_u0 = u0.size() == 0 || u0.cwiseAbs().maxCoeff() == 0.0;

    std::optional<ContourQuadrature> s2;
    std::vector<SolutionSnapshot> out;
    out.reserve(times.size());
    for (double t : times) {
        if (zero_u0 && f.is_zero()) {
            out.push_back(SolutionSnapshot{t, Vector::Zero(n), 0.0, Provenance::contour});
            continue;
        }
        const ContourQuadrature c = contour_for_time(t, o);
        if (f.has_laplace_form()) {
            double mag = 0.0;
            const ComplexVector z = contour_sum(c, o.threads, [&](std::size_t, Complex p) {
                const ComplexShift shift = ComplexShift::from(p);
                ComplexVector rhs = f.laplace(p, n);
                if (!zero_u0)
                    rhs.array() += field.rho.cast<Complex>().array() *
                                   nodal_power(shift, (field.alpha.array() - 1.0).matrix()).array() *
                                   u0.cast<Complex>().array();
                return ComplexVector(std::exp(t * p) * solver.solve(p, rhs));
            }, &mag);
            out.push_back(finish(t, z, std::max(sup_norm(u0), mag), o.realness_tol));
            continue;
        }
        ComplexVector z = ComplexVector::Zero(n);
        double scale = sup_norm(u0);
        if (!zero_u0) {
            z += apply_S0(c, solver, t, u0, o).u.cast<Complex>();
        }
        double mag = 0.0;
        z += duhamel(solver, f, t, o, mag);
        scale = std::max(scale, mag);
        const Vector ft = f(t, n);
        scale = std::max(scale, sup_norm(ft));
        if (ft.cwiseAbs().maxCoeff() > 0.0) {
            if (!s2) s2 = contour_for_s2(solver.op(), field, o);
            z += apply_S2(*s2, solver, ft, o).u.cast<Complex>();
        }
        out.push_back(finish(t, z, scale, o.realness_tol));
    }
    return out;
}

std::vector<SolutionSnapshot> solve_forward(const EllipticOperator& op, const CoefficientField& field,
                                            const Vector& u0, const Source& f, std::span<const double> times,
                                            const ContourOptions& o) {
    return solve_forward(ShiftedSolver(op, field), u0, f, times, o);
}

}  // namespace vofd
