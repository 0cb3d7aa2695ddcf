#include "vofd/grid.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "vofd/error.hpp"

namespace vofd {

std::size_t SpatialGrid::full_offset(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_[0] + 1) +
           static_cast<std::size_t>(i);
}

long SpatialGrid::interior_index(int i, int j) const {
    if (i < 0 || i > n_[0] || j < 0 || j > n_[1]) return -1;
    return full_to_interior_[full_offset(i, j)];
}

long SpatialGrid::boundary_index(int i, int j) const {
    if (i < 0 || i > n_[0] || j < 0 || j > n_[1]) return -1;
    return full_to_boundary_[full_offset(i, j)];
}

bool SpatialGrid::in_s_in(std::size_t b) const {
    return std::binary_search(s_in_.begin(), s_in_.end(), b);
}

double SpatialGrid::cell_volume() const { return dimension_ == 1 ? h_[0] : h_[0] * h_[1]; }

namespace {

std::vector<std::size_t> select_boundary(const std::vector<std::string>& entries,
                                         const std::vector<BoundaryNode>& nodes, int dimension) {
    std::set<std::size_t> chosen;
    for (const auto& entry : entries) {
        if (entry == "all") {
            for (std::size_t b = 0; b < nodes.size(); ++b) chosen.insert(b);
            continue;
        }
        if (!entry.empty() && entry[0] == '#') {
            std::size_t pos = 0;
            long k = -1;
            try {
                k = std::stol(entry.substr(1), &pos);
            } catch (const std::exception&) {
            }
            if (k < 0 || pos + 1 != entry.size() || static_cast<std::size_t>(k) >= nodes.size())
                throw Error(ErrorCode::invalid_boundary_spec, "bad boundary node selector '" + entry + "'");
            chosen.insert(static_cast<std::size_t>(k));
            continue;
        }
        unsigned mask = 0;
        if (entry == "left") mask = side_left;
        else if (entry == "right") mask = side_right;
        else if (entry == "bottom" && dimension == 2) mask = side_bottom;
        else if (entry == "top" && dimension == 2) mask = side_top;
        else throw Error(ErrorCode::invalid_boundary_spec, "unknown boundary portion '" + entry + "'");
        for (std::size_t b = 0; b < nodes.size(); ++b)
            if (nodes[b].sides & mask) chosen.insert(b);
    }
    if (chosen.empty())
        throw Error(ErrorCode::invalid_boundary_spec, "boundary subset selects no nodes");
    return {chosen.begin(), chosen.end()};
}

}  // namespace

SpatialGrid build_grid(int dimension, std::span<const Interval> extents, int n_per_axis,
                       const BoundarySubsetSpec& spec) {
    if (dimension != 1 && dimension != 2)
        throw Error(ErrorCode::invalid_grid, "dimension must be 1 or 2");
    if (extents.size() != static_cast<std::size_t>(dimension))
        throw Error(ErrorCode::invalid_grid, "need one extent per axis");
    if (n_per_axis < 2) throw Error(ErrorCode::invalid_grid, "need at least 2 intervals per axis");

    SpatialGrid g;
    g.dimension_ = dimension;
    for (int a = 0; a < dimension; ++a) {
        const Interval& e = extents[static_cast<std::size_t>(a)];
        if (!(e.hi > e.lo) || !std::isfinite(e.lo) || !std::isfinite(e.hi))
            throw Error(ErrorCode::invalid_grid, "extent must satisfy lo < hi");
        g.extents_[a] = e;
        g.n_[a] = n_per_axis;
        g.h_[a] = (e.hi - e.lo) / n_per_axis;
    }
    if (dimension == 1) {
        g.n_[1] = 0;
        g.extents_[1] = Interval{0.0, 0.0};
    }

    const int nx = g.n_[0];
    const int ny = g.n_[1];
    const std::size_t full = static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(ny + 1);
    g.full_to_interior_.assign(full, -1);
    g.full_to_boundary_.assign(full, -1);

    auto coord = [&](int i, int j) {
        return std::array<double, 2>{g.extents_[0].lo + i * g.h_[0],
                                     dimension == 2 ? g.extents_[1].lo + j * g.h_[1] : 0.0};
    };

    if (dimension == 1) {
        for (int i = 1; i < nx; ++i) {
            g.full_to_interior_[g.full_offset(i, 0)] = static_cast<long>(g.interior_.size());
            g.interior_.push_back(coord(i, 0));
        }
        g.boundary_.push_back({coord(0, 0), {0, 0}, {-1.0, 0.0}, side_left, false});
        g.boundary_.push_back({coord(nx, 0), {nx, 0}, {1.0, 0.0}, side_right, false});
    } else {
        for (int j = 1; j < ny; ++j)
            for (int i = 1; i < nx; ++i) {
                g.full_to_interior_[g.full_offset(i, j)] = static_cast<long>(g.interior_.size());
                g.interior_.push_back(coord(i, j));
            }
        auto add = [&](int i, int j) {
            unsigned sides = 0;
            if (i == 0) sides |= side_left;
            if (i == nx) sides |= side_right;
            if (j == 0) sides |= side_bottom;
            if (j == ny) sides |= side_top;
            double sx = (sides & side_left) ? -1.0 : (sides & side_right) ? 1.0 : 0.0;
            double sy = (sides & side_bottom) ? -1.0 : (sides & side_top) ? 1.0 : 0.0;
            const bool corner = sx != 0.0 && sy != 0.0;
            if (corner) {
                sx /= std::numbers::sqrt2;
                sy /= std::numbers::sqrt2;
            }
            g.boundary_.push_back({coord(i, j), {i, j}, {sx, sy}, sides, corner});
        };
        for (int i = 0; i < nx; ++i) add(i, 0);
        for (int j = 0; j < ny; ++j) add(nx, j);
        for (int i = nx; i > 0; --i) add(i, ny);
        for (int j = ny; j > 0; --j) add(0, j);
    }
    for (std::size_t b = 0; b < g.boundary_.size(); ++b) {
        const auto& idx = g.boundary_[b].index;
        g.full_to_boundary_[g.full_offset(idx[0], idx[1])] = static_cast<long>(b);
    }

    g.s_in_ = select_boundary(spec.s_in, g.boundary_, dimension);
    g.s_out_ = select_boundary(spec.s_out, g.boundary_, dimension);
    return g;
}

CoefficientSpec CoefficientSpec::constant(double value) {
    CoefficientSpec s;
    s.spec_ = value;
    return s;
}

CoefficientSpec CoefficientSpec::expr(const std::string& source) {
    CoefficientSpec s;
    s.spec_ = Expression(source);
    return s;
}

CoefficientSpec CoefficientSpec::table(std::vector<double> values) {
    CoefficientSpec s;
    s.spec_ = std::move(values);
    return s;
}

Vector CoefficientSpec::sample(const SpatialGrid& grid) const {
    const auto n = static_cast<Eigen::Index>(grid.interior_count());
    Vector out(n);
    if (const auto* c = std::get_if<double>(&spec_)) {
        out.setConstant(*c);
    } else if (const auto* e = std::get_if<Expression>(&spec_)) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& x = grid.interior_coords()[static_cast<std::size_t>(k)];
            out[k] = (*e)(x[0], x[1], 0.0);
        }
    } else {
        const auto& table = std::get<std::vector<double>>(spec_);
        if (table.size() != grid.interior_count())
            throw Error(ErrorCode::shape_error, "coefficient table has " + std::to_string(table.size()) +
                                                    " entries, grid has " + std::to_string(n) +
                                                    " interior nodes");
        for (Eigen::Index k = 0; k < n; ++k) out[k] = table[static_cast<std::size_t>(k)];
    }
    return out;
}

CoefficientField make_field(Vector alpha, Vector rho, Vector q) {
    if (alpha.size() == 0 || alpha.size() != rho.size() || alpha.size() != q.size())
        throw Error(ErrorCode::shape_error, "alpha, rho, q must be non-empty and of equal length");
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        if (!(alpha[k] > 0.0 && alpha[k] < 1.0))
            throw Error(ErrorCode::invalid_order,
                        "alpha = " + std::to_string(alpha[k]) + " at node " + std::to_string(k) +
                            " is outside (0,1)");
        if (!(rho[k] > 0.0) || !std::isfinite(rho[k]))
            throw Error(ErrorCode::invalid_density,
                        "rho = " + std::to_string(rho[k]) + " at node " + std::to_string(k));
        if (!(q[k] >= 0.0) || !std::isfinite(q[k]))
            throw Error(ErrorCode::invalid_potential,
                        "q = " + std::to_string(q[k]) + " at node " + std::to_string(k));
    }
    CoefficientField f;
    f.alpha0 = alpha.minCoeff();
    f.alphaM = alpha.maxCoeff();
    f.rho0 = rho.minCoeff();
    f.rhoM = rho.maxCoeff();
    f.alpha = std::move(alpha);
    f.rho = std::move(rho);
    f.q = std::move(q);
    return f;
}

CoefficientField sample_coefficients(const CoefficientSpec& alpha, const CoefficientSpec& rho,
                                     const CoefficientSpec& q, const SpatialGrid& grid) {
    return make_field(alpha.sample(grid), rho.sample(grid), q.sample(grid));
}

EllipticOperator assemble_operator(const SpatialGrid& grid, const CoefficientField& field,
                                   const DiffusionTensor& tensor) {
    const std::size_t n = grid.interior_count();
    if (field.size() != n)
        throw Error(ErrorCode::shape_error, "field has " + std::to_string(field.size()) +
                                                " nodes, grid has " + std::to_string(n));
    if (!(tensor.axx > 0.0 && tensor.ayy > 0.0))
        throw Error(ErrorCode::domain_error, "diffusion tensor must be positive definite");

    const int d = grid.dimension();
    const std::array<double, 2> w{tensor.axx / (grid.spacing(0) * grid.spacing(0)),
                                  d == 2 ? tensor.ayy / (grid.spacing(1) * grid.spacing(1)) : 0.0};

    std::vector<Eigen::Triplet<double>> lap, coup;
    const int nx = grid.intervals(0);
    const int ny = d == 2 ? grid.intervals(1) : 0;
    for (int j = (d == 2 ? 1 : 0); j <= (d == 2 ? ny - 1 : 0); ++j) {
        for (int i = 1; i < nx; ++i) {
            const long row = grid.interior_index(i, j);
            double diag = 0.0;
            for (int a = 0; a < d; ++a) {
                diag += 2.0 * w[a];
                for (int s : {-1, 1}) {
                    const int ni = a == 0 ? i + s : i;
                    const int nj = a == 1 ? j + s : j;
                    if (const long c = grid.interior_index(ni, nj); c >= 0)
                        lap.emplace_back(row, c, -w[a]);
                    else
                        coup.emplace_back(row, grid.boundary_index(ni, nj), w[a]);
                }
            }
            lap.emplace_back(row, row, diag);
        }
    }

    EllipticOperator op;
    op.grid_ = std::make_shared<const SpatialGrid>(grid);
    op.tensor_ = tensor;
    op.q_ = field.q;
    op.a0_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    op.a0_.setFromTriplets(lap.begin(), lap.end());
    op.coupling_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.boundary_count()));
    op.coupling_.setFromTriplets(coup.begin(), coup.end());
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(n); ++k) lap.emplace_back(k, k, field.q[k]);
    op.aq_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    op.aq_.setFromTriplets(lap.begin(), lap.end());
    return op;
}

Vector EllipticOperator::apply_full(const Vector& interior, const Vector& boundary) const {
    if (interior.size() != aq_.rows() || boundary.size() != coupling_.cols())
        throw Error(ErrorCode::shape_error, "grid function does not match operator");
    return aq_ * interior - coupling_ * boundary;
}

namespace {

LiftedBoundary lift_with(const SparseMatrix& system, const Vector& g, const SpatialGrid& grid,
                         const SparseMatrix& coupling) {
    if (static_cast<std::size_t>(g.size()) != grid.boundary_count())
        throw Error(ErrorCode::shape_error, "boundary data has " + std::to_string(g.size()) +
                                                " values, grid has " +
                                                std::to_string(grid.boundary_count()));
    LiftedBoundary out;
    out.boundary = g;
    if (g.cwiseAbs().maxCoeff() == 0.0) {
        out.interior = Vector::Zero(system.rows());
        return out;
    }
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(system);
    if (ldlt.info() != Eigen::Success)
        throw Error(ErrorCode::lifting_failure, "factorization of the lifting system failed");
    const Vector rhs = coupling * g;
    out.interior = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !out.interior.allFinite())
        throw Error(ErrorCode::lifting_failure, "lifting solve failed");
    return out;
}

}  // namespace

LiftedBoundary lift_boundary(const Vector& g, const SpatialGrid& grid, const EllipticOperator& op) {
    if (grid.interior_count() != op.size())
        throw Error(ErrorCode::shape_error, "grid and operator disagree");
    return lift_with(op.laplacian(), g, grid, op.boundary_coupling());
}

LiftedBoundary lift_boundary_with_potential(const Vector& g, const EllipticOperator& op) {
    return lift_with(op.matrix(), g, op.grid(), op.boundary_coupling());
}

}  // namespace vofd
