#pragma once

// Immutable symbolic expressions: parsing, exact differentiation, evaluation.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace globlag {

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public ExprError {
 public:
  SyntaxError(const std::string& message, std::size_t offset)
      : ExprError(message + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EvalError : public ExprError {
 public:
  using ExprError::ExprError;
};

class MissingBinding : public EvalError {
 public:
  explicit MissingBinding(const std::string& name)
      : EvalError("no binding for variable '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DomainError : public EvalError {
 public:
  using EvalError::EvalError;
};

using Binding = std::map<std::string, double, std::less<>>;

enum class Op : std::uint8_t {
  kConst, kVar, kNeg, kAdd, kSub, kMul, kDiv, kPow,
  kSin, kCos, kTan, kExp, kLog, kSqrt,
};

inline bool is_function(Op op) { return op >= Op::kSin; }

inline const char* function_name(Op op) {
  switch (op) {
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kTan: return "tan";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    default: return "";
  }
}

namespace detail {

struct Node {
  Op op = Op::kConst;
  double value = 0.0;
  int exponent = 0;
  std::string name;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
  // Sorted, unique.
  std::vector<std::string> vars;
};

using NodePtr = std::shared_ptr<const Node>;

inline std::vector<std::string> merge_vars(const std::vector<std::string>& a,
                                           const std::vector<std::string>& b) {
  std::vector<std::string> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline double apply_function(Op op, double v) {
  switch (op) {
    case Op::kSin: return std::sin(v);
    case Op::kCos: return std::cos(v);
    case Op::kTan: return std::tan(v);
    case Op::kExp: return std::exp(v);
    case Op::kLog:
      if (!(v > 0.0)) throw DomainError("log of non-positive value");
      return std::log(v);
    case Op::kSqrt:
      if (v < 0.0) throw DomainError("sqrt of negative value");
      return std::sqrt(v);
    default: throw ExprError("not a function op");
  }
}

inline double apply_pow(double base, int exponent) {
  if (base == 0.0 && exponent < 0) throw DomainError("zero raised to a negative power");
  if (exponent == 2) return base * base;
  return std::pow(base, exponent);
}

inline double apply_div(double a, double b) {
  if (b == 0.0) throw DomainError("division by zero");
  return a / b;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

class Expression {
 public:
  Expression() : node_(make_const(0.0)) {}
  Expression(double v) : node_(make_const(v)) {}  // NOLINT: implicit numeric lift

  static Expression constant(double v) { return Expression(make_const(v)); }
  static Expression variable(std::string name) {
    auto n = std::make_shared<detail::Node>();
    n->op = Op::kVar;
    n->vars = {name};
    n->name = std::move(name);
    return Expression(std::move(n));
  }

  Op op() const { return node_->op; }
  bool is_constant() const { return node_->op == Op::kConst; }
  bool is_zero() const { return is_constant() && node_->value == 0.0; }
  bool is_one() const { return is_constant() && node_->value == 1.0; }
  double constant_value() const { return node_->value; }
  const std::string& var_name() const { return node_->name; }
  int exponent() const { return node_->exponent; }
  Expression lhs() const { return Expression(node_->lhs); }
  Expression rhs() const { return Expression(node_->rhs); }

  const std::vector<std::string>& free_vars() const { return node_->vars; }
  bool depends_on(std::string_view v) const {
    return std::binary_search(node_->vars.begin(), node_->vars.end(), v, std::less<>{});
  }

  const detail::Node* id() const { return node_.get(); }
  const detail::NodePtr& node_ptr() const { return node_; }

  double evaluate(const Binding& b) const {
    double r = eval_node(*node_, b);
    if (!std::isfinite(r)) throw DomainError("non-finite result");
    return r;
  }

  std::string str() const {
    std::string out;
    print_node(*node_, out);
    return out;
  }

  friend Expression operator+(const Expression& a, const Expression& b) {
    if (a.is_constant() && b.is_constant()) return constant(a.constant_value() + b.constant_value());
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    return binary(Op::kAdd, a, b);
  }
  friend Expression operator-(const Expression& a, const Expression& b) {
    if (a.is_constant() && b.is_constant()) return constant(a.constant_value() - b.constant_value());
    if (b.is_zero()) return a;
    if (a.is_zero()) return -b;
    return binary(Op::kSub, a, b);
  }
  friend Expression operator*(const Expression& a, const Expression& b) {
    if (a.is_constant() && b.is_constant()) return constant(a.constant_value() * b.constant_value());
    if (a.is_zero() || b.is_zero()) return constant(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.is_constant() && a.constant_value() == -1.0) return -b;
    if (b.is_constant() && b.constant_value() == -1.0) return -a;
    return binary(Op::kMul, a, b);
  }
  friend Expression operator/(const Expression& a, const Expression& b) {
    if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
      return constant(a.constant_value() / b.constant_value());
    if (a.is_zero() && !(b.is_constant() && b.constant_value() == 0.0)) return constant(0.0);
    if (b.is_one()) return a;
    return binary(Op::kDiv, a, b);
  }
  friend Expression operator-(const Expression& a) {
    if (a.is_constant()) return constant(-a.constant_value());
    if (a.op() == Op::kNeg) return a.lhs();
    auto n = std::make_shared<detail::Node>();
    n->op = Op::kNeg;
    n->lhs = a.node_;
    n->vars = a.node_->vars;
    return Expression(std::move(n));
  }
  Expression& operator+=(const Expression& o) { return *this = *this + o; }
  Expression& operator-=(const Expression& o) { return *this = *this - o; }
  Expression& operator*=(const Expression& o) { return *this = *this * o; }

  friend Expression pow(const Expression& base, int exponent) {
    if (exponent == 0) return constant(1.0);
    if (exponent == 1) return base;
    if (base.is_constant() && !(base.constant_value() == 0.0 && exponent < 0))
      return constant(std::pow(base.constant_value(), exponent));
    auto n = std::make_shared<detail::Node>();
    n->op = Op::kPow;
    n->exponent = exponent;
    n->lhs = base.node_;
    n->vars = base.node_->vars;
    return Expression(std::move(n));
  }

  friend Expression apply(Op fn, const Expression& arg) {
    if (!is_function(fn)) throw ExprError("apply: not a function op");
    if (arg.is_constant()) {
      try {
        double v = detail::apply_function(fn, arg.constant_value());
        if (std::isfinite(v)) return constant(v);
      } catch (const DomainError&) {
        // Left unfolded so evaluation reports the domain error.
      }
    }
    auto n = std::make_shared<detail::Node>();
    n->op = fn;
    n->lhs = arg.node_;
    n->vars = arg.node_->vars;
    return Expression(std::move(n));
  }

 private:
  explicit Expression(detail::NodePtr n) : node_(std::move(n)) {}

  static detail::NodePtr make_const(double v) {
    auto n = std::make_shared<detail::Node>();
    n->op = Op::kConst;
    n->value = v;
    return n;
  }

  static Expression binary(Op op, const Expression& a, const Expression& b) {
    auto n = std::make_shared<detail::Node>();
    n->op = op;
    n->lhs = a.node_;
    n->rhs = b.node_;
    n->vars = detail::merge_vars(a.node_->vars, b.node_->vars);
    return Expression(std::move(n));
  }

  static double eval_node(const detail::Node& n, const Binding& b) {
    switch (n.op) {
      case Op::kConst: return n.value;
      case Op::kVar: {
        auto it = b.find(n.name);
        if (it == b.end()) throw MissingBinding(n.name);
        return it->second;
      }
      case Op::kNeg: return -eval_node(*n.lhs, b);
      case Op::kAdd: return eval_node(*n.lhs, b) + eval_node(*n.rhs, b);
      case Op::kSub: return eval_node(*n.lhs, b) - eval_node(*n.rhs, b);
      case Op::kMul: return eval_node(*n.lhs, b) * eval_node(*n.rhs, b);
      case Op::kDiv: return detail::apply_div(eval_node(*n.lhs, b), eval_node(*n.rhs, b));
      case Op::kPow: return detail::apply_pow(eval_node(*n.lhs, b), n.exponent);
      default: return detail::apply_function(n.op, eval_node(*n.lhs, b));
    }
  }

  // Binary operations are fully parenthesised; output re-parses to the same value.
  static void print_node(const detail::Node& n, std::string& out) {
    switch (n.op) {
      case Op::kConst:
        if (n.value < 0 || std::signbit(n.value)) {
          out += "(-";
          out += detail::format_number(-n.value);
          out += ')';
        } else {
          out += detail::format_number(n.value);
        }
        return;
      case Op::kVar: out += n.name; return;
      case Op::kNeg:
        out += "(-";
        print_node(*n.lhs, out);
        out += ')';
        return;
      case Op::kPow:
        out += '(';
        print_node(*n.lhs, out);
        out += ")^";
        out += std::to_string(n.exponent);
        return;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        static constexpr char kSym[] = {'+', '-', '*', '/'};
        out += '(';
        print_node(*n.lhs, out);
        out += ' ';
        out += kSym[static_cast<int>(n.op) - static_cast<int>(Op::kAdd)];
        out += ' ';
        print_node(*n.rhs, out);
        out += ')';
        return;
      }
      default:
        out += function_name(n.op);
        out += '(';
        print_node(*n.lhs, out);
        out += ')';
        return;
    }
  }

  detail::NodePtr node_;
};

inline Expression sin(const Expression& e) { return apply(Op::kSin, e); }
inline Expression cos(const Expression& e) { return apply(Op::kCos, e); }
inline Expression tan(const Expression& e) { return apply(Op::kTan, e); }
inline Expression exp(const Expression& e) { return apply(Op::kExp, e); }
inline Expression log(const Expression& e) { return apply(Op::kLog, e); }
inline Expression sqrt(const Expression& e) { return apply(Op::kSqrt, e); }

inline std::string print(const Expression& e) { return e.str(); }

// ---------------------------------------------------------------------------
// Parsing

struct ParseOptions {
  // Identifiers bound to constants are folded into the tree.
  Binding constants;
  // Identifier renames applied before constant lookup, e.g. phi -> x.
  std::map<std::string, std::string, std::less<>> renames;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& opts) : s_(text), opts_(opts) {}

  Expression parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("empty expression");
    Expression e = expr();
    skip_ws();
    if (pos_ < s_.size()) fail(std::string("unexpected character '") + s_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const { throw SyntaxError(msg, at); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size()) fail(std::string("unexpected end of input, expected '") + c + "'");
    if (s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  Expression expr() {
    Expression lhs = term();
    for (;;) {
      if (peek('+')) {
        ++pos_;
        lhs = lhs + term();
      } else if (peek('-')) {
        ++pos_;
        lhs = lhs - term();
      } else {
        return lhs;
      }
    }
  }

  Expression term() {
    Expression lhs = factor();
    for (;;) {
      if (peek('*')) {
        ++pos_;
        lhs = lhs * factor();
      } else if (peek('/')) {
        ++pos_;
        lhs = lhs / factor();
      } else {
        return lhs;
      }
    }
  }

  Expression factor() {
    Expression b = base();
    if (peek('^')) {
      ++pos_;
      return pow(b, integer());
    }
    return b;
  }

  int integer() {
    skip_ws();
    std::size_t start = pos_;
    bool negative = false;
    if (pos_ < s_.size() && s_[pos_] == '-') {
      negative = true;
      ++pos_;
    }
    std::size_t digits = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == digits) {
      if (pos_ >= s_.size()) fail("unexpected end of input, expected integer exponent");
      fail("exponent must be an integer");
    }
    if (pos_ < s_.size() && (s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E'))
      fail_at("exponent must be an integer", start);
    long v = std::stol(std::string(s_.substr(digits, pos_ - digits)));
    if (v > 4096) fail_at("exponent too large", start);
    return static_cast<int>(negative ? -v : v);
  }

  Expression base() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (c == '-') {
      ++pos_;
      return -base();
    }
    if (c == '(') {
      ++pos_;
      Expression e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected character '") + c + "'");
  }

  Expression number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t d = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      return pos_ - d;
    };
    std::size_t n = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) fail_at("malformed number", start);
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;
    }
    return Expression::constant(std::stod(std::string(s_.substr(start, pos_ - start))));
  }

  Expression identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string name(s_.substr(start, pos_ - start));
    if (peek('(')) {
      ++pos_;
      std::vector<Expression> args{expr()};
      while (peek(',')) {
        ++pos_;
        args.push_back(expr());
      }
      expect(')');
      static const std::map<std::string, Op, std::less<>> kFunctions = {
          {"sin", Op::kSin}, {"cos", Op::kCos}, {"tan", Op::kTan},
          {"exp", Op::kExp}, {"log", Op::kLog}, {"sqrt", Op::kSqrt}};
      auto it = kFunctions.find(name);
      if (it == kFunctions.end()) fail_at("unknown function '" + name + "'", start);
      if (args.size() != 1) fail_at("function '" + name + "' takes exactly one argument", start);
      return apply(it->second, args.front());
    }
    if (auto r = opts_.renames.find(name); r != opts_.renames.end()) name = r->second;
    if (auto c = opts_.constants.find(name); c != opts_.constants.end())
      return Expression::constant(c->second);
    if (name == "pi") return Expression::constant(std::numbers::pi);
    return Expression::variable(name);
  }

  std::string_view s_;
  const ParseOptions& opts_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expression parse(std::string_view text, const ParseOptions& opts = {}) {
  return detail::Parser(text, opts).parse();
}

// ---------------------------------------------------------------------------
// Differentiation and substitution. Both memoise on node identity so shared
// subtrees are processed once.

namespace detail {

class Differentiator {
 public:
  explicit Differentiator(std::string_view v) : v_(v) {}

  Expression d(const Expression& e) {
    if (!e.depends_on(v_)) return Expression::constant(0.0);
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expression r = compute(e);
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  Expression compute(const Expression& e) {
    switch (e.op()) {
      case Op::kConst: return 0.0;
      case Op::kVar: return e.var_name() == v_ ? 1.0 : 0.0;
      case Op::kNeg: return -d(e.lhs());
      case Op::kAdd: return d(e.lhs()) + d(e.rhs());
      case Op::kSub: return d(e.lhs()) - d(e.rhs());
      case Op::kMul: return d(e.lhs()) * e.rhs() + e.lhs() * d(e.rhs());
      case Op::kDiv: {
        Expression a = e.lhs(), b = e.rhs();
        return d(a) / b - a * d(b) / pow(b, 2);
      }
      case Op::kPow: {
        int n = e.exponent();
        return Expression(static_cast<double>(n)) * pow(e.lhs(), n - 1) * d(e.lhs());
      }
      case Op::kSin: return cos(e.lhs()) * d(e.lhs());
      case Op::kCos: return -(sin(e.lhs()) * d(e.lhs()));
      case Op::kTan: return d(e.lhs()) / pow(cos(e.lhs()), 2);
      case Op::kExp: return e * d(e.lhs());
      case Op::kLog: return d(e.lhs()) / e.lhs();
      case Op::kSqrt: return d(e.lhs()) / (Expression(2.0) * e);
    }
    throw ExprError("differentiate: unknown op");
  }

  std::string_view v_;
  std::unordered_map<const Node*, Expression> memo_;
};

}  // namespace detail

inline Expression differentiate(const Expression& e, std::string_view v) {
  return detail::Differentiator(v).d(e);
}

using Substitution = std::map<std::string, Expression, std::less<>>;

inline Expression substitute(const Expression& e, const Substitution& s) {
  std::unordered_map<const detail::Node*, Expression> memo;
  std::function<Expression(const Expression&)> go = [&](const Expression& x) -> Expression {
    bool touched = false;
    for (const auto& v : x.free_vars())
      if (s.count(v)) {
        touched = true;
        break;
      }
    if (!touched) return x;
    if (auto it = memo.find(x.id()); it != memo.end()) return it->second;
    Expression r;
    switch (x.op()) {
      case Op::kVar: r = s.find(x.var_name())->second; break;
      case Op::kNeg: r = -go(x.lhs()); break;
      case Op::kAdd: r = go(x.lhs()) + go(x.rhs()); break;
      case Op::kSub: r = go(x.lhs()) - go(x.rhs()); break;
      case Op::kMul: r = go(x.lhs()) * go(x.rhs()); break;
      case Op::kDiv: r = go(x.lhs()) / go(x.rhs()); break;
      case Op::kPow: r = pow(go(x.lhs()), x.exponent()); break;
      default: r = apply(x.op(), go(x.lhs())); break;
    }
    memo.emplace(x.id(), r);
    return r;
  };
  return go(e);
}

inline Expression substitute(const Expression& e, std::string_view var, double value) {
  Substitution s;
  s.emplace(std::string(var), Expression::constant(value));
  return substitute(e, s);
}

// ---------------------------------------------------------------------------
// Compiled evaluation over a fixed slot layout.

class CompiledExpression {
 public:
  CompiledExpression() = default;

  // Every free variable must appear in `slots`.
  CompiledExpression(const Expression& e, std::span<const std::string_view> slots) {
    int depth = 0;
    emit(*e.node_ptr(), slots, depth);
  }

  double operator()(const double* values) const {
    constexpr int kInline = 64;
    double inline_stack[kInline];
    std::vector<double> heap;
    double* st = inline_stack;
    if (max_depth_ > kInline) {
      heap.resize(max_depth_);
      st = heap.data();
    }
    int sp = 0;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::kConst: st[sp++] = in.value; break;
        case Op::kVar: st[sp++] = values[in.slot]; break;
        case Op::kNeg: st[sp - 1] = -st[sp - 1]; break;
        case Op::kAdd: --sp; st[sp - 1] += st[sp]; break;
        case Op::kSub: --sp; st[sp - 1] -= st[sp]; break;
        case Op::kMul: --sp; st[sp - 1] *= st[sp]; break;
        case Op::kDiv: --sp; st[sp - 1] = detail::apply_div(st[sp - 1], st[sp]); break;
        case Op::kPow: st[sp - 1] = detail::apply_pow(st[sp - 1], in.slot); break;
        default: st[sp - 1] = detail::apply_function(in.op, st[sp - 1]); break;
      }
    }
    double r = st[0];
    if (!std::isfinite(r)) throw DomainError("non-finite result");
    return r;
  }

  double operator()(std::span<const double> values) const { return (*this)(values.data()); }

  bool empty() const { return code_.empty(); }
  bool is_constant() const { return code_.size() == 1 && code_[0].op == Op::kConst; }

 private:
  struct Instr {
    Op op;
    int slot;  // variable slot, or exponent for kPow
    double value;
  };

  void emit(const detail::Node& n, std::span<const std::string_view> slots, int depth) {
    switch (n.op) {
      case Op::kConst: push({Op::kConst, 0, n.value}, depth + 1); return;
      case Op::kVar: {
        auto it = std::find(slots.begin(), slots.end(), std::string_view(n.name));
        if (it == slots.end()) throw MissingBinding(n.name);
        push({Op::kVar, static_cast<int>(it - slots.begin()), 0.0}, depth + 1);
        return;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv:
        emit(*n.lhs, slots, depth);
        emit(*n.rhs, slots, depth + 1);
        push({n.op, 0, 0.0}, depth + 1);
        return;
      case Op::kPow:
        emit(*n.lhs, slots, depth);
        push({Op::kPow, n.exponent, 0.0}, depth + 1);
        return;
      default:
        emit(*n.lhs, slots, depth);
        push({n.op, 0, 0.0}, depth + 1);
        return;
    }
  }

  void push(Instr in, int depth) {
    code_.push_back(in);
    max_depth_ = std::max(max_depth_, depth);
  }

  std::vector<Instr> code_;
  int max_depth_ = 0;
};

}  // namespace globlag
