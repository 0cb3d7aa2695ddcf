#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vofd/error.hpp"
#include "vofd/grid.hpp"

namespace vofd::test {

/// Error code raised by fn, or nullopt if it returns normally.
inline std::optional<ErrorCode> error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline SpatialGrid unit_grid(int dimension, int n, const BoundarySubsetSpec& spec = {}) {
    const std::vector<Interval> ext(static_cast<std::size_t>(dimension), Interval{0.0, 1.0});
    return build_grid(dimension, ext, n, spec);
}

inline CoefficientField constant_field(const SpatialGrid& g, double alpha, double rho, double q) {
    const auto n = static_cast<Eigen::Index>(g.interior_count());
    return make_field(Vector::Constant(n, alpha), Vector::Constant(n, rho), Vector::Constant(n, q));
}

inline CoefficientField expr_field(const SpatialGrid& g, const char* alpha, const char* rho, const char* q) {
    return sample_coefficients(CoefficientSpec::expr(alpha), CoefficientSpec::expr(rho),
                               CoefficientSpec::expr(q), g);
}

/// Discrete sine mode k of the 1D Dirichlet Laplacian, unit 2-norm.
inline Vector sine_mode(const SpatialGrid& g, int k) {
    const auto n = static_cast<Eigen::Index>(g.interior_count());
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std::sin(k * 3.14159265358979323846 * g.interior_coords()[i][0]);
    return v.normalized();
}

}  // namespace vofd::test
