#include "vofd/inverse.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vofd/error.hpp"
#include "vofd/quadrature.hpp"

namespace vofd {

namespace {

using Dense = Eigen::MatrixXd;

Dense columns(std::span<const Vector> cols, Eigen::Index rows) {
    Dense m(rows, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j].size() != rows) throw Error(ErrorCode::shape_error, "dataset column has the wrong length");
        m.col(static_cast<Eigen::Index>(j)) = cols[j];
    }
    return m;
}

/// Operator with zero potential on the grid; only A_0 and B are used.
EllipticOperator reference_operator(const SpatialGrid& grid, const DiffusionTensor& tensor) {
    const auto n = static_cast<Eigen::Index>(grid.interior_count());
    const CoefficientField f = make_field(Vector::Constant(n, 0.5), Vector::Ones(n), Vector::Zero(n));
    return assemble_operator(grid, f, tensor);
}

/// Graph Laplacian of the interior grid scaled so that V^T L V approximates
/// the integral of |grad V|^2.
SparseMatrix gradient_penalty(const SpatialGrid& grid) {
    std::vector<Eigen::Triplet<double>> t;
    const double vol = grid.cell_volume();
    const int nx = grid.intervals(0);
    const int ny = grid.dimension() == 2 ? grid.intervals(1) : 0;
    auto edge = [&](long a, long b, double h) {
        if (a < 0 || b < 0) return;
        const double w = vol / (h * h);
        t.emplace_back(a, a, w);
        t.emplace_back(b, b, w);
        t.emplace_back(a, b, -w);
        t.emplace_back(b, a, -w);
    };
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            const long a = grid.interior_index(i, j);
            if (a < 0) continue;
            edge(a, grid.interior_index(i + 1, j), grid.spacing(0));
            if (grid.dimension() == 2) edge(a, grid.interior_index(i, j + 1), grid.spacing(1));
        }
    const auto n = static_cast<Eigen::Index>(grid.interior_count());
    SparseMatrix l(n, n);
    l.setFromTriplets(t.begin(), t.end());
    return l;
}

/// Forward DtN model of A_0 + diag(V) for a fixed set of drives.
class DtNModel {
public:
    DtNModel(const SpatialGrid& grid, const DtNDataset& data, const DiffusionTensor& tensor)
        : op_(reference_operator(grid, tensor)), st_(flux_stencil(grid, grid.s_out())) {
        const auto nb = static_cast<Eigen::Index>(grid.boundary_count());
        g_ = columns(data.g, nb);
        d_ = columns(data.flux, static_cast<Eigen::Index>(grid.s_out().size()));
        if (g_.cols() != d_.cols()) throw Error(ErrorCode::shape_error, "drive and flux counts differ");
        if (g_.cols() == 0) throw Error(ErrorCode::shape_error, "dataset has no drives");
        bg_ = op_.boundary_coupling() * g_;
        cg_ = st_.boundary * g_;
    }

    struct State {
        Dense w;  // interior solutions, one column per drive
        Dense r;  // model flux minus data
        Eigen::SparseLU<SparseMatrix> lu;
    };

    /// Returns false when A_0 + diag(V) cannot be factorized.
    bool evaluate(const Vector& V, State& s) const {
        if (!V.allFinite()) return false;
        SparseMatrix m = op_.laplacian();
        for (Eigen::Index i = 0; i < V.size(); ++i) m.coeffRef(i, i) += V[i];
        m.makeCompressed();
        s.lu.compute(m);
        if (s.lu.info() != Eigen::Success) return false;
        s.w = s.lu.solve(bg_);
        s.r = st_.interior * s.w + cg_ - d_;
        return s.w.allFinite() && s.r.allFinite();
    }

    /// Z = M^{-1} C_int^T for the factorized state.
    Dense adjoint(const State& s) const { return s.lu.solve(Dense(st_.interior.transpose())); }

    const Dense& data() const noexcept { return d_; }
    const Dense& drives() const noexcept { return g_; }
    const EllipticOperator& op() const noexcept { return op_; }

private:
    EllipticOperator op_;
    FluxStencil st_;
    Dense g_, d_, bg_, cg_;
};

bool drives_span_inputs(const SpatialGrid& grid, const DtNModel& model) {
    // Boundary nodes of S_in that couple to at least one interior row.
    const SparseMatrix& b = model.op().boundary_coupling();
    Eigen::VectorXd used = Eigen::VectorXd::Zero(b.cols());
    for (int k = 0; k < b.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(b, k); it; ++it) used[it.col()] = 1.0;
    std::vector<Eigen::Index> rows;
    for (std::size_t s : grid.s_in())
        if (used[static_cast<Eigen::Index>(s)] != 0.0) rows.push_back(static_cast<Eigen::Index>(s));
    if (rows.empty()) return true;
    Dense sub(static_cast<Eigen::Index>(rows.size()), model.drives().cols());
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = model.drives().row(rows[r]);
    return Eigen::ColPivHouseholderQR<Dense>(sub).rank() == static_cast<Eigen::Index>(rows.size());
}

void fit_failure(const std::string& what, int iteration) {
    std::ostringstream msg;
    msg << what << " at Gauss-Newton iteration " << iteration;
    throw Error(ErrorCode::fit_failure, msg.str());
}

}  // namespace

DtNDataset laplace_dataset(const ShiftedSolver& solver, double p, std::span<const Vector> drives) {
    DtNDataset d;
    d.p = p;
    for (std::size_t j = 0; j < drives.size(); ++j) {
        const DtNRecord r = laplace_dtn(solver, Complex(p, 0.0), drives[j], j);
        d.g.push_back(drives[j]);
        d.flux.push_back(r.flux.real());
    }
    return d;
}

std::vector<Vector> full_boundary_drives(const SpatialGrid& grid) {
    std::vector<Vector> out;
    for (std::size_t b : grid.s_in()) {
        Vector g = Vector::Zero(static_cast<Eigen::Index>(grid.boundary_count()));
        g[static_cast<Eigen::Index>(b)] = 1.0;
        out.push_back(g);
    }
    return out;
}

PotentialEstimate recover_potential(const DtNDataset& data, const SpatialGrid& grid, const PotentialOptions& o) {
    if (!(data.p > 0.0)) throw Error(ErrorCode::domain_error, "dataset p must be real and positive");
    if (!(o.reg_weight >= 0.0)) throw Error(ErrorCode::domain_error, "regularization weight must be non-negative");
    const DtNModel model(grid, data, o.tensor);
    const auto n = static_cast<Eigen::Index>(grid.interior_count());
    const SparseMatrix L = gradient_penalty(grid);
    const double data_norm = model.data().norm();

    PotentialEstimate est;
    est.p = data.p;
    est.reg_weight = o.reg_weight;
    est.identifiability_warning = !drives_span_inputs(grid, model);

    // Constant start matched to the mean flux by scalar Newton steps.
    DtNModel::State s;
    double c = 0.0;
    for (int it = 0; it < 50; ++it) {
        if (!model.evaluate(Vector::Constant(n, c), s)) fit_failure("singular model in the constant start", 0);
        const double mean = s.r.mean();
        // d(flux)/dc = -C_int M^{-1} w = -Z^T w for every drive
        const double slope = -(model.adjoint(s).transpose() * s.w).mean();
        if (slope == 0.0 || !std::isfinite(slope)) break;
        double step = -mean / slope;
        // keep A_0 + c I positive definite
        while (c + step < 0.0 && std::abs(step) > 1e-14) step *= 0.5;
        c += step;
        if (std::abs(step) <= 1e-13 * std::max(1.0, std::abs(c))) break;
    }

    Vector V = Vector::Constant(n, c);
    auto objective = [&](const Vector& v, DtNModel::State& st) {
        if (!model.evaluate(v, st)) return HUGE_VAL;
        return 0.5 * st.r.squaredNorm() + 0.5 * o.reg_weight * v.dot(L * v);
    };
    double phi = objective(V, s);
    if (!std::isfinite(phi)) fit_failure("non-finite objective", 0);

    int iter = 0;
    double gnorm = HUGE_VAL;
    for (; iter < o.max_iterations; ++iter) {
        const Dense z = model.adjoint(s);       // n x n_out
        const Dense zr = z * s.r;               // n x n_drives
        const Vector grad = s.w.cwiseProduct(zr).rowwise().sum() * -1.0 + o.reg_weight * (L * V);
        gnorm = grad.norm();
        if (!std::isfinite(gnorm)) fit_failure("non-finite gradient", iter);
        if (gnorm <= o.gradient_tol) break;
        Dense h = (z * z.transpose()).cwiseProduct(s.w * s.w.transpose());
        h += o.reg_weight * Dense(L);
        Eigen::LDLT<Dense> ldlt(h);
        Vector step = ldlt.solve(-grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite() || grad.dot(step) >= 0.0) {
            // fall back to a ridge-damped step when the Gauss-Newton matrix is singular
            const double ridge = 1e-12 * std::max(h.diagonal().maxCoeff(), 1e-300);
            step = (h + ridge * Dense::Identity(n, n)).ldlt().solve(-grad);
        }
        DtNModel::State trial;
        double t = 1.0, next = HUGE_VAL;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            next = objective(V + t * step, trial);
            if (next <= phi + 1e-4 * t * grad.dot(step)) break;
        }
        if (!(next < phi)) break;  // no further decrease at working precision
        V += t * step;
        phi = objective(V, s);
        if ((t * step).norm() <= 1e-15 * std::max(1.0, V.norm())) {
            ++iter;
            break;
        }
    }
    est.V = V;
    est.iterations = iter;
    est.gradient_norm = gnorm;
    est.residual = data_norm > 0.0 ? s.r.norm() / data_norm : s.r.norm();
    return est;
}

InverseResult extract_pointwise(const Vector& v_small, const Vector& v_one, const Vector& v_e, double p_small) {
    if (!(p_small > 0.0 && p_small < 1.0)) throw Error(ErrorCode::domain_error, "p_s must lie in (0, 1)");
    if (v_small.size() != v_one.size() || v_one.size() != v_e.size())
        throw Error(ErrorCode::shape_error, "potential fields differ in length");
    const Eigen::Index n = v_one.size();
    InverseResult res;
    res.p_small = p_small;
    res.q = v_small;
    res.rho.resize(n);
    res.alpha.resize(n);
    constexpr double lo = 1e-9, hi = 1.0 - 1e-9;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double rho = v_one[i] - v_small[i];
        if (!(rho > 0.0)) {
            std::ostringstream msg;
            msg << "V(1) - V(p_s) = " << rho << " is not positive at node " << i;
            throw Error(ErrorCode::extraction_error, msg.str());
        }
        if (v_e[i] < v_one[i]) {
            std::ostringstream msg;
            msg << "V(e) < V(1) at node " << i << ", impossible since e^alpha > 1";
            throw Error(ErrorCode::extraction_error, msg.str());
        }
        const double ratio = (v_e[i] - v_small[i]) / rho;
        double a = std::log(ratio);
        if (!(a > 0.0 && a < 1.0)) {
            res.out_of_class.push_back(static_cast<std::size_t>(i));
            a = std::clamp(a, lo, hi);
        }
        res.rho[i] = rho;
        res.alpha[i] = a;
    }
    res.q_bias_bound = res.rho.maxCoeff() * std::pow(p_small, res.alpha.minCoeff());
    return res;
}

InverseResult invert_all(std::span<const DtNDataset> datasets, const SpatialGrid& grid, const PotentialOptions& o) {
    if (datasets.size() != 3) throw Error(ErrorCode::domain_error, "need datasets at p_s, 1 and e");
    const DtNDataset *small = nullptr, *one = nullptr, *e = nullptr;
    for (const auto& d : datasets) {
        if (std::abs(d.p - 1.0) <= 1e-12) one = &d;
        else if (std::abs(d.p - std::numbers::e) <= 1e-12 * std::numbers::e) e = &d;
        else if (d.p > 0.0 && d.p < 1.0) small = &d;
    }
    if (!small || !one || !e) throw Error(ErrorCode::domain_error, "datasets must be at p_s in (0, 1), p = 1 and p = e");
    std::vector<PotentialEstimate> pots{recover_potential(*small, grid, o), recover_potential(*one, grid, o),
                                        recover_potential(*e, grid, o)};
    InverseResult res = extract_pointwise(pots[0].V, pots[1].V, pots[2].V, small->p);
    res.potentials = std::move(pots);
    return res;
}

InverseErrors relative_errors(const InverseResult& r, const CoefficientField& truth) {
    if (r.alpha.size() != truth.alpha.size()) throw Error(ErrorCode::shape_error, "result and truth differ in size");
    auto rel = [](const Vector& a, const Vector& b) { return b.norm() > 0.0 ? (a - b).norm() / b.norm() : a.norm(); };
    return InverseErrors{rel(r.alpha, truth.alpha), rel(r.rho, truth.rho), rel(r.q, truth.q)};
}

PipelineSchedule pipeline_schedule(double p_min, int per_panel, int levels) {
    if (!(p_min > 0.0)) throw Error(ErrorCode::domain_error, "p_min must be positive");
    if (per_panel < 2 || levels < 0) throw Error(ErrorCode::domain_error, "invalid schedule parameters");
    const double horizon = std::max(40.0 / p_min, 20.0);
    PipelineSchedule s;
    s.per_panel = per_panel;
    s.breaks.push_back(0.0);
    for (int l = levels; l >= 1; --l) s.breaks.push_back(std::ldexp(1.0, -l));
    double b = 1.0;
    while (b < horizon) {
        s.breaks.push_back(b);
        b *= 2.0;
    }
    s.breaks.push_back(horizon);
    for (std::size_t k = 0; k + 1 < s.breaks.size(); ++k) {
        const std::vector<double> pts = chebyshev_points(s.breaks[k], s.breaks[k + 1], per_panel);
        const double mid = 0.5 * (s.breaks[k] + s.breaks[k + 1]);
        std::vector<std::size_t> idx;
        for (double t : pts) {
            if (t > mid && s.held_out.size() == k) {
                s.held_out.push_back(s.times.size());
                s.times.push_back(mid);
            }
            idx.push_back(s.times.size());
            s.times.push_back(t);
        }
        s.panel_nodes.push_back(std::move(idx));
    }
    return s;
}

std::vector<DtNDataset> time_to_laplace_pipeline(const PipelineSchedule& sched, std::span<const TimeDtNSeries> series,
                                                 const SpatialGrid& grid, std::span<const double> p_targets,
                                                 double tol) {
    if (p_targets.empty()) throw Error(ErrorCode::domain_error, "no Laplace targets given");
    for (double p : p_targets)
        if (!(p > 0.0)) throw Error(ErrorCode::domain_error, "Laplace targets must be real and positive");
    const double p_min = *std::min_element(p_targets.begin(), p_targets.end());
    const double p_max = *std::max_element(p_targets.begin(), p_targets.end());
    if (sched.breaks.back() < std::max(40.0 / p_min, 20.0) * (1.0 - 1e-12))
        throw Error(ErrorCode::horizon_error, "schedule horizon is shorter than 40 / p_min");
    const std::size_t panels = sched.breaks.size() - 1;
    if (sched.panel_nodes.size() != panels || sched.held_out.size() != panels)
        throw Error(ErrorCode::shape_error, "schedule is inconsistent");
    auto panel_times = [&](std::size_t k) {
        std::vector<double> t;
        for (std::size_t i : sched.panel_nodes[k]) t.push_back(sched.times.at(i));
        return t;
    };
    auto interpolate = [&](const std::vector<Vector>& values, std::size_t k, double t) {
        const std::vector<double> basis = chebyshev_basis(panel_times(k), t);
        Vector v = Vector::Zero(values.front().size());
        for (std::size_t i = 0; i < basis.size(); ++i) v += basis[i] * values[sched.panel_nodes[k][i]];
        return v;
    };

    const EllipticOperator ref = reference_operator(grid, {});
    const FluxStencil st = flux_stencil(grid, grid.s_out());

    // Gauss rule of the transform: each schedule panel split into pieces of
    // width at most min(1, 2 / p_max).
    const double width = std::min(1.0, 2.0 / p_max);
    const GaussRule& gl = gauss_legendre(8);
    LaplaceRule rule;
    rule.horizon = sched.breaks.back();
    std::vector<std::size_t> panel_of;
    for (std::size_t k = 0; k < panels; ++k) {
        const double a = sched.breaks[k], b = sched.breaks[k + 1];
        const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / width)));
        for (int m = 0; m < pieces; ++m) {
            const double lo = a + (b - a) * m / pieces, hi = a + (b - a) * (m + 1) / pieces;
            for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
                rule.nodes.push_back(0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes[i]);
                rule.weights.push_back(0.5 * (hi - lo) * gl.weights[i]);
                panel_of.push_back(k);
            }
        }
    }

    std::vector<DtNDataset> out(p_targets.size());
    for (std::size_t j = 0; j < p_targets.size(); ++j) out[j].p = p_targets[j];
    for (std::size_t d = 0; d < series.size(); ++d) {
        const TimeDtNSeries& s = series[d];
        if (s.flux.size() != sched.times.size()) throw Error(ErrorCode::shape_error, "series length does not match the schedule");
        const LiftedBoundary lift = lift_boundary(s.g, grid, ref);
        const Vector known = normal_flux(st, lift.interior, lift.boundary);

        std::vector<Vector> rest(s.flux.size());
        double scale = 0.0;
        for (std::size_t m = 0; m < s.flux.size(); ++m) {
            const double t = sched.times[m];
            rest[m] = s.flux[m] - std::pow(t, s.k) * known;
            scale = std::max(scale, std::exp(-p_min * t) * s.flux[m].cwiseAbs().maxCoeff());
        }
        // held-out checks
        for (std::size_t k = 0; k < panels; ++k) {
            const std::size_t held = sched.held_out[k];
            const Vector pred = interpolate(rest, k, sched.times[held]);
            const double miss = std::exp(-p_min * sched.times[held]) * (pred - rest[held]).cwiseAbs().maxCoeff();
            if (miss > tol * scale) {
                std::ostringstream msg;
                msg << "interpolated flux misses the held-out sample at t = " << sched.times[held] << " by " << miss
                    << " (scale " << scale << ") for drive " << d;
                throw Error(ErrorCode::analytic_extension_error, msg.str());
            }
        }
        std::vector<Vector> at_nodes(rule.nodes.size());
        for (std::size_t m = 0; m < rule.nodes.size(); ++m) at_nodes[m] = interpolate(rest, panel_of[m], rule.nodes[m]);
        for (std::size_t j = 0; j < p_targets.size(); ++j) {
            const DtNRecord r = laplace_from_time(rule, at_nodes, p_targets[j], s.k, d);
            out[j].g.push_back(s.g);
            out[j].flux.push_back(r.flux.real() + known);
        }
    }
    return out;
}

}  // namespace vofd
