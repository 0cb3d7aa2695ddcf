#include "vofd/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <vector>

#include "vofd/error.hpp"

namespace vofd {

struct Expression::Node {
    enum class Kind { number, var_x, var_y, var_t, neg, add, sub, mul, div, pow, call };
    enum class Fn { exp, log, sqrt, sin, cos, tanh, abs };

    Kind kind = Kind::number;
    Fn fn = Fn::exp;
    double value = 0.0;
    std::shared_ptr<const Node> lhs, rhs;

    double eval(const EvalPoint& at) const {
        switch (kind) {
            case Kind::number: return value;
            case Kind::var_x: return at.x;
            case Kind::var_y: return at.y;
            case Kind::var_t: return at.t;
            case Kind::neg: return -lhs->eval(at);
            case Kind::add: return lhs->eval(at) + rhs->eval(at);
            case Kind::sub: return lhs->eval(at) - rhs->eval(at);
            case Kind::mul: return lhs->eval(at) * rhs->eval(at);
            case Kind::div: return lhs->eval(at) / rhs->eval(at);
            case Kind::pow: return std::pow(lhs->eval(at), rhs->eval(at));
            case Kind::call: {
                const double a = lhs->eval(at);
                switch (fn) {
                    case Fn::exp: return std::exp(a);
                    case Fn::log: return std::log(a);
                    case Fn::sqrt: return std::sqrt(a);
                    case Fn::sin: return std::sin(a);
                    case Fn::cos: return std::cos(a);
                    case Fn::tanh: return std::tanh(a);
                    case Fn::abs: return std::abs(a);
                }
            }
        }
        return 0.0;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

class Parser {
public:
    explicit Parser(const std::string& src) : src_(src) {}

    NodePtr parse() {
        NodePtr n = parse_sum();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected character");
        return n;
    }

    bool uses_t = false;

private:
    const std::string& src_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::config_error,
                    "expression '" + src_ + "': " + what + " at column " + std::to_string(pos_ + 1));
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static NodePtr make(Node::Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
        auto n = std::make_shared<Node>();
        n->kind = kind;
        n->lhs = std::move(lhs);
        n->rhs = std::move(rhs);
        return n;
    }

    static NodePtr number(double v) {
        auto n = std::make_shared<Node>();
        n->value = v;
        return n;
    }

    NodePtr parse_sum() {
        NodePtr n = parse_product();
        for (;;) {
            if (accept('+')) n = make(Node::Kind::add, n, parse_product());
            else if (accept('-')) n = make(Node::Kind::sub, n, parse_product());
            else return n;
        }
    }

    NodePtr parse_product() {
        NodePtr n = parse_unary();
        for (;;) {
            if (accept('*')) n = make(Node::Kind::mul, n, parse_unary());
            else if (accept('/')) n = make(Node::Kind::div, n, parse_unary());
            else return n;
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) return make(Node::Kind::neg, parse_unary());
        if (accept('+')) return parse_unary();
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_atom();
        if (accept('^')) return make(Node::Kind::pow, base, parse_unary());
        return base;
    }

    NodePtr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr n = parse_sum();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = src_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("malformed number");
            pos_ += static_cast<std::size_t>(end - begin);
            return number(v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            const std::string name = src_.substr(start, pos_ - start);
            if (name == "x") return make(Node::Kind::var_x);
            if (name == "y") return make(Node::Kind::var_y);
            if (name == "t") {
                uses_t = true;
                return make(Node::Kind::var_t);
            }
            if (name == "pi") return number(std::numbers::pi);
            if (name == "e") return number(std::numbers::e);
            static const std::vector<std::pair<std::string, Node::Fn>> fns = {
                {"exp", Node::Fn::exp},   {"log", Node::Fn::log}, {"sqrt", Node::Fn::sqrt},
                {"sin", Node::Fn::sin},   {"cos", Node::Fn::cos}, {"tanh", Node::Fn::tanh},
                {"abs", Node::Fn::abs}};
            for (const auto& [fname, fn] : fns) {
                if (name != fname) continue;
                if (!accept('(')) fail("expected '(' after " + name);
                auto n = std::make_shared<Node>();
                n->kind = Node::Kind::call;
                n->fn = fn;
                n->lhs = parse_sum();
                if (!accept(')')) fail("expected ')'");
                return n;
            }
            pos_ = start;
            fail("unknown identifier '" + name + "'");
        }
        fail("unexpected character");
    }
};

}  // namespace

Expression::Expression(const std::string& source) : source_(source) {
    Parser parser(source_);
    root_ = parser.parse();
    uses_t_ = parser.uses_t;
}

double Expression::operator()(const EvalPoint& at) const { return root_->eval(at); }

}  // namespace vofd
