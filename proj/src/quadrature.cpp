#include "vofd/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "vofd/error.hpp"

namespace vofd {

namespace {

GaussRule compute_gauss(int n) {
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return rule;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
    if (n < 1) throw Error(ErrorCode::domain_error, "Gauss rule needs at least one node");
    static std::mutex mutex;
    static std::map<int, GaussRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss(n)).first;
    return it->second;
}

CompositeRule composite_gauss(std::span<const double> breaks, int order) {
    const GaussRule& g = gauss_legendre(order);
    CompositeRule out;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k], b = breaks[k + 1];
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            out.nodes.push_back(mid + half * g.nodes[i]);
            out.weights.push_back(half * g.weights[i]);
        }
    }
    return out;
}

std::vector<double> graded_breaks(double a, double b, int panels, double ratio) {
    if (panels < 1) throw Error(ErrorCode::domain_error, "need at least one panel");
    std::vector<double> breaks(static_cast<std::size_t>(panels) + 1);
    breaks.front() = a;
    breaks.back() = b;
    const double len = b - a;
    for (int k = 1; k < panels; ++k)
        breaks[static_cast<std::size_t>(k)] = a + len * std::pow(ratio, panels - k);
    return breaks;
}

std::vector<double> chebyshev_points(double a, double b, int n) {
    std::vector<double> pts(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double x = -std::cos((2.0 * k + 1.0) * std::numbers::pi / (2.0 * n));
        pts[static_cast<std::size_t>(k)] = 0.5 * (a + b) + 0.5 * (b - a) * x;
    }
    return pts;
}

std::vector<double> chebyshev_basis(std::span<const double> nodes, double x) {
    const std::size_t n = nodes.size();
    std::vector<double> basis(n, 0.0);
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double diff = x - nodes[k];
        if (diff == 0.0) {
            std::fill(basis.begin(), basis.end(), 0.0);
            basis[k] = 1.0;
            return basis;
        }
        // first-kind weights, ascending order: (-1)^k sin((2k+1)pi/(2n)) up to a common sign
        const double theta = (2.0 * static_cast<double>(n - 1 - k) + 1.0) * std::numbers::pi / (2.0 * n);
        const double w = ((n - 1 - k) % 2 == 0 ? 1.0 : -1.0) * std::sin(theta);
        basis[k] = w / diff;
        den += w / diff;
    }
    for (double& b : basis) b /= den;
    return basis;
}

double chebyshev_interpolate(std::span<const double> nodes, std::span<const double> values, double x) {
    const std::vector<double> basis = chebyshev_basis(nodes, x);
    double sum = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) sum += basis[k] * values[k];
    return sum;
}

}  // namespace vofd
