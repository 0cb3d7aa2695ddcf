#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vofd {

/// Gauss–Legendre rule on [-1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss–Legendre rule (cached per n, thread-safe).
const GaussRule& gauss_legendre(int n);

/// Nodes and weights of a composite rule over a list of panels.
struct CompositeRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Composite Gauss–Legendre rule with `order` points per panel; `breaks`
/// holds the sorted panel boundaries.
CompositeRule composite_gauss(std::span<const double> breaks, int order);

/// Panel boundaries graded geometrically toward `a`: [a, a + L 2^{-(m-1)}],
/// ..., [a + L/2, b] with L = b - a and m = `panels`.
std::vector<double> graded_breaks(double a, double b, int panels, double ratio = 0.5);

/// Chebyshev points of the first kind mapped to [a, b], ascending.
std::vector<double> chebyshev_points(double a, double b, int n);

/// Barycentric interpolation through (nodes, values) at x. Nodes must be
/// Chebyshev points of the first kind (the matching weights are used).
double chebyshev_interpolate(std::span<const double> nodes, std::span<const double> values, double x);

/// Lagrange basis values l_k(x) for the same nodes, so that the interpolant
/// of any vector-valued samples v_k is sum_k l_k(x) v_k.
std::vector<double> chebyshev_basis(std::span<const double> nodes, double x);

}  // namespace vofd
