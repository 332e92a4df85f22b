#pragma once

// Arithmetic expressions over state variables x1..xn and disturbance
// variables th1..thm, plus boolean predicates over state variables.
//
// Both kinds of tree share one flat node pool; children always precede their
// parent in the pool, so the tree is acyclic by construction and immutable
// after parsing.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sbc/error.hpp"

namespace sbc::expr {

enum class NodeKind : std::uint8_t {
    Constant,
    StateVar,
    DisturbanceVar,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Call,
    // boolean-valued
    BoolConst,
    Compare,
    And,
    Or,
    Not,
};

enum class Func : std::uint8_t { Min, Max, Abs, Exp, Sin, Cos };

enum class RelOp : std::uint8_t { Lt, Le, Gt, Ge, Eq, Ne };

struct Node {
    NodeKind kind = NodeKind::Constant;
    double value = 0.0;          // Constant; BoolConst stores 0/1
    std::uint32_t index = 0;     // 0-based variable index, or Pow exponent
    Func func = Func::Min;
    RelOp rel = RelOp::Lt;
    std::vector<std::uint32_t> children;
};

namespace detail {

inline const char* func_name(Func f) {
    switch (f) {
    case Func::Min: return "min";
    case Func::Max: return "max";
    case Func::Abs: return "abs";
    case Func::Exp: return "exp";
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    }
    return "?";
}

inline const char* rel_name(RelOp r) {
    switch (r) {
    case RelOp::Lt: return "<";
    case RelOp::Le: return "<=";
    case RelOp::Gt: return ">";
    case RelOp::Ge: return ">=";
    case RelOp::Eq: return "==";
    case RelOp::Ne: return "!=";
    }
    return "?";
}

inline double checked(double v) {
    if (!std::isfinite(v)) throw EvalError("non-finite result");
    return v;
}

inline double ipow(double base, std::uint32_t e) {
    double result = 1.0;
    while (e != 0) {
        if (e & 1U) result *= base;
        base *= base;
        e >>= 1U;
    }
    return result;
}

inline double eval_node(const std::vector<Node>& pool, std::uint32_t id,
                        std::span<const double> x, std::span<const double> th) {
    const Node& nd = pool[id];
    auto arg = [&](std::size_t k) { return eval_node(pool, nd.children[k], x, th); };
    switch (nd.kind) {
    case NodeKind::Constant: return nd.value;
    case NodeKind::StateVar: return checked(x[nd.index]);
    case NodeKind::DisturbanceVar: return checked(th[nd.index]);
    case NodeKind::Neg: return -arg(0);
    case NodeKind::Add: return checked(arg(0) + arg(1));
    case NodeKind::Sub: return checked(arg(0) - arg(1));
    case NodeKind::Mul: return checked(arg(0) * arg(1));
    case NodeKind::Div: {
        double num = arg(0);
        double den = arg(1);
        if (den == 0.0) throw EvalError("division by zero");
        return checked(num / den);
    }
    case NodeKind::Pow: return checked(ipow(arg(0), nd.index));
    case NodeKind::Call: {
        switch (nd.func) {
        case Func::Min: {
            double r = arg(0);
            for (std::size_t k = 1; k < nd.children.size(); ++k) r = std::min(r, arg(k));
            return r;
        }
        case Func::Max: {
            double r = arg(0);
            for (std::size_t k = 1; k < nd.children.size(); ++k) r = std::max(r, arg(k));
            return r;
        }
        case Func::Abs: return std::fabs(arg(0));
        case Func::Exp: return checked(std::exp(arg(0)));
        case Func::Sin: return std::sin(arg(0));
        case Func::Cos: return std::cos(arg(0));
        }
        break;
    }
    default: break;
    }
    throw EvalError("boolean node evaluated as number");
}

inline bool eval_bool(const std::vector<Node>& pool, std::uint32_t id, std::span<const double> x) {
    const Node& nd = pool[id];
    switch (nd.kind) {
    case NodeKind::BoolConst: return nd.value != 0.0;
    case NodeKind::Not: return !eval_bool(pool, nd.children[0], x);
    case NodeKind::And:
        return eval_bool(pool, nd.children[0], x) && eval_bool(pool, nd.children[1], x);
    case NodeKind::Or:
        return eval_bool(pool, nd.children[0], x) || eval_bool(pool, nd.children[1], x);
    case NodeKind::Compare: {
        double a = eval_node(pool, nd.children[0], x, {});
        double b = eval_node(pool, nd.children[1], x, {});
        switch (nd.rel) {
        case RelOp::Lt: return a < b;
        case RelOp::Le: return a <= b;
        case RelOp::Gt: return a > b;
        case RelOp::Ge: return a >= b;
        case RelOp::Eq: return a == b;
        case RelOp::Ne: return a != b;
        }
        break;
    }
    default: break;
    }
    throw EvalError("numeric node evaluated as boolean");
}

inline void print_node(const std::vector<Node>& pool, std::uint32_t id, std::string& out) {
    const Node& nd = pool[id];
    auto bin = [&](const char* op) {
        out += '(';
        print_node(pool, nd.children[0], out);
        out += ' ';
        out += op;
        out += ' ';
        print_node(pool, nd.children[1], out);
        out += ')';
    };
    switch (nd.kind) {
    case NodeKind::Constant: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", nd.value);
        out += buf;
        return;
    }
    case NodeKind::StateVar: out += "x" + std::to_string(nd.index + 1); return;
    case NodeKind::DisturbanceVar: out += "th" + std::to_string(nd.index + 1); return;
    case NodeKind::Neg:
        out += "(-";
        print_node(pool, nd.children[0], out);
        out += ')';
        return;
    case NodeKind::Add: bin("+"); return;
    case NodeKind::Sub: bin("-"); return;
    case NodeKind::Mul: bin("*"); return;
    case NodeKind::Div: bin("/"); return;
    case NodeKind::Pow:
        out += '(';
        print_node(pool, nd.children[0], out);
        out += " ^ " + std::to_string(nd.index) + ")";
        return;
    case NodeKind::Call:
        out += func_name(nd.func);
        out += '(';
        for (std::size_t k = 0; k < nd.children.size(); ++k) {
            if (k != 0) out += ", ";
            print_node(pool, nd.children[k], out);
        }
        out += ')';
        return;
    case NodeKind::BoolConst: out += nd.value != 0.0 ? "true" : "false"; return;
    case NodeKind::Compare: bin(rel_name(nd.rel)); return;
    case NodeKind::And: bin("&&"); return;
    case NodeKind::Or: bin("||"); return;
    case NodeKind::Not:
        out += "(!";
        print_node(pool, nd.children[0], out);
        out += ')';
        return;
    }
}

inline bool same_node(const std::vector<Node>& pa, std::uint32_t a, const std::vector<Node>& pb,
                      std::uint32_t b) {
    const Node& x = pa[a];
    const Node& y = pb[b];
    if (x.kind != y.kind || x.children.size() != y.children.size()) return false;
    switch (x.kind) {
    case NodeKind::Constant:
    case NodeKind::BoolConst:
        if (x.value != y.value) return false;
        break;
    case NodeKind::StateVar:
    case NodeKind::DisturbanceVar:
    case NodeKind::Pow:
        if (x.index != y.index) return false;
        break;
    case NodeKind::Call:
        if (x.func != y.func) return false;
        break;
    case NodeKind::Compare:
        if (x.rel != y.rel) return false;
        break;
    default: break;
    }
    for (std::size_t k = 0; k < x.children.size(); ++k)
        if (!same_node(pa, x.children[k], pb, y.children[k])) return false;
    return true;
}

} // namespace detail

/// Real-valued expression f(x, th).
class Expr {
public:
    Expr() = default;
    Expr(std::vector<Node> pool, std::uint32_t root, std::size_t n, std::size_t m)
        : pool_(std::move(pool)), root_(root), n_(n), m_(m) {}

    double eval(std::span<const double> x, std::span<const double> th) const {
        if (x.size() != n_ || th.size() != m_) throw EvalError("dimension mismatch in expression evaluation");
        return detail::eval_node(pool_, root_, x, th);
    }

    std::string to_string() const {
        std::string s;
        detail::print_node(pool_, root_, s);
        return s;
    }

    const Node& root() const { return pool_[root_]; }
    const Node& node(std::uint32_t id) const { return pool_[id]; }
    std::size_t state_dim() const noexcept { return n_; }
    std::size_t disturbance_dim() const noexcept { return m_; }

    friend bool structurally_equal(const Expr& a, const Expr& b) {
        return detail::same_node(a.pool_, a.root_, b.pool_, b.root_);
    }

private:
    std::vector<Node> pool_;
    std::uint32_t root_ = 0;
    std::size_t n_ = 0;
    std::size_t m_ = 0;
};

/// Boolean predicate over state variables only.
class Predicate {
public:
    Predicate() = default;
    Predicate(std::vector<Node> pool, std::uint32_t root, std::size_t n)
        : pool_(std::move(pool)), root_(root), n_(n) {}

    /// A predicate that is constantly `value`.
    static Predicate constant(bool value, std::size_t n) {
        Node nd;
        nd.kind = NodeKind::BoolConst;
        nd.value = value ? 1.0 : 0.0;
        return Predicate({nd}, 0, n);
    }

    bool eval(std::span<const double> x) const {
        if (x.size() != n_) throw EvalError("dimension mismatch in predicate evaluation");
        return detail::eval_bool(pool_, root_, x);
    }

    std::string to_string() const {
        std::string s;
        detail::print_node(pool_, root_, s);
        return s;
    }

    const Node& root() const { return pool_[root_]; }
    const Node& node(std::uint32_t id) const { return pool_[id]; }
    std::size_t state_dim() const noexcept { return n_; }

    friend bool structurally_equal(const Predicate& a, const Predicate& b) {
        return detail::same_node(a.pool_, a.root_, b.pool_, b.root_);
    }

private:
    std::vector<Node> pool_;
    std::uint32_t root_ = 0;
    std::size_t n_ = 0;
};

namespace detail {

enum class Tok : std::uint8_t {
    End, Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma,
    Lt, Le, Gt, Ge, EqEq, NotEq, AndAnd, OrOr, Bang,
};

struct Token {
    Tok kind = Tok::End;
    std::size_t offset = 0;
    std::string_view text;
    double number = 0.0;
};

inline std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        Token t;
        t.offset = i;
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t j = i;
            while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                    j = k;
                }
            }
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(src.data() + i, src.data() + j, v);
            if (ec != std::errc() || ptr != src.data() + j || !std::isfinite(v))
                throw ParseError("malformed number '" + std::string(src.substr(i, j - i)) + "'", i);
            t.kind = Tok::Number;
            t.number = v;
            t.text = src.substr(i, j - i);
            i = j;
        } else if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < src.size() && is_ident(src[j])) ++j;
            t.kind = Tok::Ident;
            t.text = src.substr(i, j - i);
            i = j;
        } else {
            auto two = [&](char next) { return i + 1 < src.size() && src[i + 1] == next; };
            std::size_t len = 1;
            switch (c) {
            case '+': t.kind = Tok::Plus; break;
            case '-': t.kind = Tok::Minus; break;
            case '*': t.kind = Tok::Star; break;
            case '/': t.kind = Tok::Slash; break;
            case '^': t.kind = Tok::Caret; break;
            case '(': t.kind = Tok::LParen; break;
            case ')': t.kind = Tok::RParen; break;
            case ',': t.kind = Tok::Comma; break;
            case '<':
                if (two('=')) { t.kind = Tok::Le; len = 2; } else t.kind = Tok::Lt;
                break;
            case '>':
                if (two('=')) { t.kind = Tok::Ge; len = 2; } else t.kind = Tok::Gt;
                break;
            case '=':
                if (!two('=')) throw ParseError("unexpected '='", i);
                t.kind = Tok::EqEq;
                len = 2;
                break;
            case '!':
                if (two('=')) { t.kind = Tok::NotEq; len = 2; } else t.kind = Tok::Bang;
                break;
            case '&':
                if (!two('&')) throw ParseError("unexpected '&'", i);
                t.kind = Tok::AndAnd;
                len = 2;
                break;
            case '|':
                if (!two('|')) throw ParseError("unexpected '|'", i);
                t.kind = Tok::OrOr;
                len = 2;
                break;
            default: throw ParseError(std::string("unexpected character '") + c + "'", i);
            }
            t.text = src.substr(i, len);
            i += len;
        }
        out.push_back(t);
    }
    Token end;
    end.kind = Tok::End;
    end.offset = src.size();
    out.push_back(end);
    return out;
}

class Parser {
public:
    Parser(std::string_view src, std::size_t n, std::size_t m, bool predicate)
        : toks_(lex(src)), n_(n), m_(m), predicate_(predicate) {}

    std::uint32_t parse_expr_root() {
        auto root = parse_sum();
        expect_end();
        return root;
    }

    std::uint32_t parse_predicate_root() {
        auto root = parse_or();
        expect_end();
        return root;
    }

    std::vector<Node> take_pool() { return std::move(pool_); }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }

    [[noreturn]] void fail(const std::string& what) const {
        const Token& t = peek();
        if (t.kind == Tok::End) throw ParseError(what + ", got end of input", t.offset);
        throw ParseError(what + ", got '" + std::string(t.text) + "'", t.offset);
    }

    void expect(Tok k, const char* what) {
        if (peek().kind != k) fail(std::string("expected ") + what);
        ++pos_;
    }

    void expect_end() {
        if (peek().kind != Tok::End) fail("unexpected trailing input");
    }

    std::uint32_t push(Node nd) {
        pool_.push_back(std::move(nd));
        return static_cast<std::uint32_t>(pool_.size() - 1);
    }

    std::uint32_t binary(NodeKind k, std::uint32_t a, std::uint32_t b) {
        Node nd;
        nd.kind = k;
        nd.children = {a, b};
        return push(std::move(nd));
    }

    std::uint32_t parse_sum() {
        auto lhs = parse_product();
        for (;;) {
            if (peek().kind == Tok::Plus) {
                ++pos_;
                lhs = binary(NodeKind::Add, lhs, parse_product());
            } else if (peek().kind == Tok::Minus) {
                ++pos_;
                lhs = binary(NodeKind::Sub, lhs, parse_product());
            } else {
                return lhs;
            }
        }
    }

    std::uint32_t parse_product() {
        auto lhs = parse_unary();
        for (;;) {
            if (peek().kind == Tok::Star) {
                ++pos_;
                lhs = binary(NodeKind::Mul, lhs, parse_unary());
            } else if (peek().kind == Tok::Slash) {
                ++pos_;
                lhs = binary(NodeKind::Div, lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    std::uint32_t parse_unary() {
        if (peek().kind == Tok::Minus) {
            ++pos_;
            Node nd;
            nd.kind = NodeKind::Neg;
            nd.children = {parse_unary()};
            return push(std::move(nd));
        }
        return parse_power();
    }

    std::uint32_t parse_power() {
        auto base = parse_primary();
        while (peek().kind == Tok::Caret) {
            ++pos_;
            const Token& t = peek();
            if (t.kind != Tok::Number || t.number < 0.0 || t.number != std::floor(t.number) ||
                t.number > 4096.0)
                fail("expected non-negative integer exponent");
            ++pos_;
            Node nd;
            nd.kind = NodeKind::Pow;
            nd.index = static_cast<std::uint32_t>(t.number);
            nd.children = {base};
            base = push(std::move(nd));
        }
        return base;
    }

    std::uint32_t parse_variable(const Token& t) {
        std::string_view name = t.text;
        bool state = name.size() > 1 && name[0] == 'x';
        bool dist = name.size() > 2 && name.substr(0, 2) == "th";
        std::string_view digits = state ? name.substr(1) : name.substr(2);
        for (char c : digits)
            if (!std::isdigit(static_cast<unsigned char>(c)))
                throw ParseError("unknown identifier '" + std::string(name) + "'", t.offset);
        std::size_t k = 0;
        std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (dist && predicate_)
            throw ParseError("disturbance variable '" + std::string(name) + "' not allowed in a set predicate",
                             t.offset);
        std::size_t limit = state ? n_ : m_;
        if (k < 1 || k > limit)
            throw ParseError("variable index out of range '" + std::string(name) + "'", t.offset);
        Node nd;
        nd.kind = state ? NodeKind::StateVar : NodeKind::DisturbanceVar;
        nd.index = static_cast<std::uint32_t>(k - 1);
        return push(std::move(nd));
    }

    std::uint32_t parse_primary() {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::Number: {
            ++pos_;
            Node nd;
            nd.kind = NodeKind::Constant;
            nd.value = t.number;
            return push(std::move(nd));
        }
        case Tok::LParen: {
            ++pos_;
            auto inner = parse_sum();
            expect(Tok::RParen, "')'");
            return inner;
        }
        case Tok::Ident: {
            ++pos_;
            static constexpr std::pair<std::string_view, Func> funcs[] = {
                {"min", Func::Min}, {"max", Func::Max}, {"abs", Func::Abs},
                {"exp", Func::Exp}, {"sin", Func::Sin}, {"cos", Func::Cos},
            };
            for (auto [name, f] : funcs) {
                if (t.text != name) continue;
                expect(Tok::LParen, "'(' after function name");
                Node nd;
                nd.kind = NodeKind::Call;
                nd.func = f;
                nd.children.push_back(parse_sum());
                while (peek().kind == Tok::Comma) {
                    ++pos_;
                    nd.children.push_back(parse_sum());
                }
                bool variadic = f == Func::Min || f == Func::Max;
                if (variadic ? nd.children.size() < 2 : nd.children.size() != 1)
                    throw ParseError(std::string("wrong number of arguments to ") + func_name(f), t.offset);
                expect(Tok::RParen, "')'");
                return push(std::move(nd));
            }
            if ((t.text.size() > 1 && t.text[0] == 'x') || (t.text.size() > 2 && t.text.substr(0, 2) == "th"))
                return parse_variable(t);
            throw ParseError("unknown identifier '" + std::string(t.text) + "'", t.offset);
        }
        default: fail("expected a number, variable, function or '('");
        }
    }

    std::uint32_t parse_or() {
        auto lhs = parse_and();
        while (peek().kind == Tok::OrOr) {
            ++pos_;
            lhs = binary(NodeKind::Or, lhs, parse_and());
        }
        return lhs;
    }

    std::uint32_t parse_and() {
        auto lhs = parse_not();
        while (peek().kind == Tok::AndAnd) {
            ++pos_;
            lhs = binary(NodeKind::And, lhs, parse_not());
        }
        return lhs;
    }

    std::uint32_t parse_not() {
        if (peek().kind == Tok::Bang) {
            ++pos_;
            Node nd;
            nd.kind = NodeKind::Not;
            nd.children = {parse_not()};
            return push(std::move(nd));
        }
        return parse_atom();
    }

    std::uint32_t parse_atom() {
        const Token& t = peek();
        if (t.kind == Tok::Ident && (t.text == "true" || t.text == "false")) {
            ++pos_;
            Node nd;
            nd.kind = NodeKind::BoolConst;
            nd.value = t.text == "true" ? 1.0 : 0.0;
            return push(std::move(nd));
        }
        // A leading '(' may open either a grouped predicate or an arithmetic
        // operand of a comparison; try the comparison first, then backtrack.
        std::size_t save_pos = pos_;
        std::size_t save_pool = pool_.size();
        try {
            return parse_comparison();
        } catch (const ParseError& first) {
            if (t.kind != Tok::LParen) throw;
            pos_ = save_pos;
            pool_.resize(save_pool);
            try {
                ++pos_;
                auto inner = parse_or();
                expect(Tok::RParen, "')'");
                return inner;
            } catch (const ParseError& second) {
                if (second.offset() >= first.offset()) throw;
                throw first;
            }
        }
    }

    std::uint32_t parse_comparison() {
        auto lhs = parse_sum();
        RelOp op;
        switch (peek().kind) {
        case Tok::Lt: op = RelOp::Lt; break;
        case Tok::Le: op = RelOp::Le; break;
        case Tok::Gt: op = RelOp::Gt; break;
        case Tok::Ge: op = RelOp::Ge; break;
        case Tok::EqEq: op = RelOp::Eq; break;
        case Tok::NotEq: op = RelOp::Ne; break;
        default: fail("expected comparison operator");
        }
        ++pos_;
        auto rhs = parse_sum();
        Node nd;
        nd.kind = NodeKind::Compare;
        nd.rel = op;
        nd.children = {lhs, rhs};
        return push(std::move(nd));
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::vector<Node> pool_;
    std::size_t n_;
    std::size_t m_;
    bool predicate_;
};

} // namespace detail

/// Parses an arithmetic expression over x1..xn and th1..thm.
inline Expr parse_expr(std::string_view text, std::size_t n, std::size_t m) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw ParseError("empty expression", 0);
    detail::Parser p(text, n, m, false);
    auto root = p.parse_expr_root();
    return Expr(p.take_pool(), root, n, m);
}

/// Parses a boolean predicate over x1..xn.
inline Predicate parse_predicate(std::string_view text, std::size_t n) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw ParseError("empty predicate", 0);
    detail::Parser p(text, n, 0, true);
    auto root = p.parse_predicate_root();
    return Predicate(p.take_pool(), root, n);
}

inline double eval_expr(const Expr& e, std::span<const double> x, std::span<const double> th) {
    return e.eval(x, th);
}

inline bool eval_predicate(const Predicate& p, std::span<const double> x) { return p.eval(x); }

} // namespace sbc::expr
