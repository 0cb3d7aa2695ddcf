#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vofd/expression.hpp"

namespace vofd {

using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Bit flags naming the edges a boundary node sits on.
enum Side : unsigned { side_left = 1u, side_right = 2u, side_bottom = 4u, side_top = 8u };

struct BoundaryNode {
    std::array<double, 2> coord{};
    std::array<int, 2> index{};  // full-grid (i, j); j = 0 in 1D
    std::array<double, 2> normal{};  // outward unit normal
    unsigned sides = 0;
    bool corner = false;
};

/// Selection of the input and output boundary portions.
///
/// Each entry is "all", an edge name ("left", "right", "bottom", "top") or
/// "#<k>" for boundary node k. Entries are unioned.
struct BoundarySubsetSpec {
    std::vector<std::string> s_in{"all"};
    std::vector<std::string> s_out{"all"};
};

/// Uniform tensor-product grid on an interval or rectangle.
///
/// Full-grid indices run i = 0..n_x and j = 0..n_y; interior nodes are
/// numbered x-fastest. Boundary nodes are listed counterclockwise starting at
/// the lower-left corner (1D: left then right).
class SpatialGrid {
public:
    int dimension() const noexcept { return dimension_; }
    const Interval& extent(int axis) const { return extents_.at(axis); }
    int intervals(int axis) const { return n_.at(axis); }
    double spacing(int axis) const { return h_.at(axis); }

    std::size_t interior_count() const noexcept { return interior_.size(); }
    std::size_t boundary_count() const noexcept { return boundary_.size(); }

    const std::vector<std::array<double, 2>>& interior_coords() const noexcept { return interior_; }
    const std::vector<BoundaryNode>& boundary() const noexcept { return boundary_; }
    const std::vector<std::size_t>& s_in() const noexcept { return s_in_; }
    const std::vector<std::size_t>& s_out() const noexcept { return s_out_; }

    /// Interior index of full-grid node (i, j), or -1.
    long interior_index(int i, int j = 0) const;
    /// Boundary index of full-grid node (i, j), or -1.
    long boundary_index(int i, int j = 0) const;

    bool in_s_in(std::size_t b) const;
    /// Grid cell measure h_x (1D) or h_x h_y (2D).
    double cell_volume() const;

private:
    friend SpatialGrid build_grid(int, std::span<const Interval>, int, const BoundarySubsetSpec&);

    std::size_t full_offset(int i, int j) const;

    int dimension_ = 1;
    std::array<Interval, 2> extents_{};
    std::array<int, 2> n_{1, 0};
    std::array<double, 2> h_{1.0, 1.0};
    std::vector<std::array<double, 2>> interior_;
    std::vector<BoundaryNode> boundary_;
    std::vector<std::size_t> s_in_, s_out_;
    std::vector<long> full_to_interior_, full_to_boundary_;
};

/// Builds a uniform grid with `n_per_axis` intervals along every axis.
SpatialGrid build_grid(int dimension, std::span<const Interval> extents, int n_per_axis,
                       const BoundarySubsetSpec& spec = {});

/// A coefficient given as a constant, an expression in x and y, or a table
/// of interior node values.
class CoefficientSpec {
public:
    static CoefficientSpec constant(double value);
    static CoefficientSpec expr(const std::string& source);
    static CoefficientSpec table(std::vector<double> values);

    Vector sample(const SpatialGrid& grid) const;

private:
    std::variant<double, Expression, std::vector<double>> spec_ = 0.0;
};

/// Nodal order, density and potential with their recorded bounds.
struct CoefficientField {
    Vector alpha, rho, q;
    double alpha0 = 0.0, alphaM = 0.0, rho0 = 0.0, rhoM = 0.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(alpha.size()); }
    bool constant_order(double tol = 1e-14) const { return alphaM - alpha0 <= tol; }
    bool constant_density(double tol = 1e-14) const { return rhoM - rho0 <= tol; }
};

/// Validates nodal values and records min/max bounds.
CoefficientField make_field(Vector alpha, Vector rho, Vector q);

CoefficientField sample_coefficients(const CoefficientSpec& alpha, const CoefficientSpec& rho,
                                     const CoefficientSpec& q, const SpatialGrid& grid);

/// Constant diagonal diffusion tensor diag(a_xx, a_yy).
struct DiffusionTensor {
    double axx = 1.0;
    double ayy = 1.0;
    double ellipticity() const noexcept { return axx < ayy ? axx : ayy; }
};

/// Dirichlet finite-difference realization of -div(a grad) + q.
class EllipticOperator {
public:
    const SpatialGrid& grid() const noexcept { return *grid_; }
    std::shared_ptr<const SpatialGrid> grid_ptr() const noexcept { return grid_; }

    /// A_q restricted to interior nodes.
    const SparseMatrix& matrix() const noexcept { return aq_; }
    /// A_0 (no potential).
    const SparseMatrix& laplacian() const noexcept { return a0_; }
    /// Coupling of interior rows to boundary values: (full stencil) = A u_int - B g.
    const SparseMatrix& boundary_coupling() const noexcept { return coupling_; }
    const Vector& potential() const noexcept { return q_; }
    const DiffusionTensor& tensor() const noexcept { return tensor_; }
    double ellipticity() const noexcept { return tensor_.ellipticity(); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(aq_.rows()); }

    /// Full stencil of A_q applied to a grid function given by interior and
    /// boundary values; returns the interior rows.
    Vector apply_full(const Vector& interior, const Vector& boundary) const;

private:
    friend EllipticOperator assemble_operator(const SpatialGrid&, const CoefficientField&,
                                              const DiffusionTensor&);

    std::shared_ptr<const SpatialGrid> grid_;
    SparseMatrix aq_, a0_, coupling_;
    Vector q_;
    DiffusionTensor tensor_;
};

EllipticOperator assemble_operator(const SpatialGrid& grid, const CoefficientField& field,
                                   const DiffusionTensor& tensor = {});

/// Interior values and boundary trace of a lifted boundary function.
struct LiftedBoundary {
    Vector interior;
    Vector boundary;
};

/// Discrete-harmonic extension of boundary data g (A_0 G = B g).
LiftedBoundary lift_boundary(const Vector& g, const SpatialGrid& grid, const EllipticOperator& op);

/// Extension solving A_q G = B g instead; any extension yields the same
/// boundary-driven solution, which the tests exploit.
LiftedBoundary lift_boundary_with_potential(const Vector& g, const EllipticOperator& op);

}  // namespace vofd
