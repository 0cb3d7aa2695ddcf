#pragma once

#include <memory>
#include <string>

namespace vofd {

/// Point at which a coefficient or source expression is evaluated.
struct EvalPoint {
    double x = 0.0;
    double y = 0.0;
    double t = 0.0;
};

/// Compiled arithmetic expression over the variables x, y, t.
///
/// Grammar: numbers, the constants `pi` and `e`, binary + - * / ^ (right
/// associative), unary minus, parentheses, and the functions exp, log, sqrt,
/// sin, cos, tanh, abs. Parsing failures raise Error(config_error) naming the
/// offending column.
class Expression {
public:
    explicit Expression(const std::string& source);

    double operator()(const EvalPoint& at) const;
    double operator()(double x, double y = 0.0, double t = 0.0) const {
        return (*this)(EvalPoint{x, y, t});
    }

    const std::string& source() const noexcept { return source_; }
    bool depends_on_time() const noexcept { return uses_t_; }

    struct Node;

private:
    std::string source_;
    std::shared_ptr<const Node> root_;
    bool uses_t_ = false;
};

}  // namespace vofd
