#pragma once

#include <cctype>
#include <cstdlib>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bel/core.hpp"

namespace bel {

// Field-expression mini-language: numeric literals, identifiers, + - * / ^
// (^ right-associative, binds tighter than unary minus), parentheses and a
// fixed set of unary functions.
enum class ExprFun {
  sin, cos, tan, exp, log, sqrt, sinh, cosh, tanh, atan, abs
};

inline const char* expr_fun_name(ExprFun f) {
  static const char* names[] = {"sin", "cos", "tan", "exp", "log", "sqrt",
                                "sinh", "cosh", "tanh", "atan", "abs"};
  return names[int(f)];
}

struct ExprNode {
  enum class Op { num, var, add, sub, mul, div, pow, neg, fun };
  Op op = Op::num;
  double value = 0.0;     // num
  std::string name;       // var
  ExprFun fun = ExprFun::sin;
  std::size_t offset = 0; // byte offset into the source text
  std::vector<ExprNode> args;
};

struct ExprEnv {
  std::vector<std::pair<std::string, double>> vars;
  void set(const std::string& name, double v) {
    for (auto& kv : vars)
      if (kv.first == name) { kv.second = v; return; }
    vars.emplace_back(name, v);
  }
  const double* find(const std::string& name) const {
    for (auto& kv : vars)
      if (kv.first == name) return &kv.second;
    return nullptr;
  }
};

namespace detail {

inline ExprNode num_node(double v) {
  ExprNode n; n.op = ExprNode::Op::num; n.value = v; return n;
}

inline bool is_num(const ExprNode& n, double v) {
  return n.op == ExprNode::Op::num && n.value == v;
}

// Constant-folding builders keep derivative trees small.
inline ExprNode make_bin(ExprNode::Op op, ExprNode a, ExprNode b) {
  using Op = ExprNode::Op;
  if (a.op == Op::num && b.op == Op::num) {
    switch (op) {
      case Op::add: return num_node(a.value + b.value);
      case Op::sub: return num_node(a.value - b.value);
      case Op::mul: return num_node(a.value * b.value);
      case Op::div: if (b.value != 0.0) return num_node(a.value / b.value); break;
      default: break;
    }
  }
  if (op == Op::add) {
    if (is_num(a, 0)) return b;
    if (is_num(b, 0)) return a;
  }
  if (op == Op::sub && is_num(b, 0)) return a;
  if (op == Op::mul) {
    if (is_num(a, 0) || is_num(b, 0)) return num_node(0);
    if (is_num(a, 1)) return b;
    if (is_num(b, 1)) return a;
  }
  if (op == Op::div && is_num(a, 0)) return num_node(0);
  if (op == Op::pow && is_num(b, 1)) return a;
  ExprNode n; n.op = op;
  n.args.push_back(std::move(a));
  n.args.push_back(std::move(b));
  return n;
}

inline ExprNode make_neg(ExprNode a) {
  if (a.op == ExprNode::Op::num) return num_node(-a.value);
  if (a.op == ExprNode::Op::neg) return a.args[0];
  ExprNode n; n.op = ExprNode::Op::neg; n.args.push_back(std::move(a));
  return n;
}

inline ExprNode make_fun(ExprFun f, ExprNode a) {
  ExprNode n; n.op = ExprNode::Op::fun; n.fun = f; n.args.push_back(std::move(a));
  return n;
}

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>* allowed)
      : s_(text), allowed_(allowed) {}  // owned copy: strtod needs NUL termination

  ExprNode parse() {
    if (s_.size() > 64 * 1024) fail(0, "expression exceeds 64 KiB");
    ExprNode e = sum();
    skip_ws();
    if (pos_ != s_.size()) fail(pos_, "unexpected trailing input");
    return e;
  }

 private:
  std::string s_;
  std::size_t pos_ = 0;
  const std::vector<std::string>* allowed_;

  [[noreturn]] void fail(std::size_t at, const std::string& msg) {
    throw Error(Error::Kind::parse,
                "expression error at byte " + std::to_string(at) + ": " + msg);
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  ExprNode sum() {
    ExprNode e = term();
    for (;;) {
      if (eat('+')) e = make_bin(ExprNode::Op::add, std::move(e), term());
      else if (eat('-')) e = make_bin(ExprNode::Op::sub, std::move(e), term());
      else return e;
    }
  }
  ExprNode term() {
    ExprNode e = unary();
    for (;;) {
      if (eat('*')) e = make_bin(ExprNode::Op::mul, std::move(e), unary());
      else if (eat('/')) e = make_bin(ExprNode::Op::div, std::move(e), unary());
      else return e;
    }
  }
  ExprNode unary() {
    if (eat('-')) return make_neg(unary());
    return power();
  }
  ExprNode power() {
    ExprNode base = atom();
    if (eat('^')) {
      // exponent parsed at unary level so x^-2 works; right-associative
      return make_bin(ExprNode::Op::pow, std::move(base), unary());
    }
    return base;
  }
  ExprNode atom() {
    skip_ws();
    if (pos_ >= s_.size()) fail(pos_, "unexpected end of input");
    const std::size_t at = pos_;
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      ExprNode e = sum();
      if (!eat(')')) fail(pos_, "expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident();
    fail(at, std::string("unexpected character '") + c + "'");
  }
  ExprNode number() {
    const char* begin = s_.data() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail(pos_, "malformed number");
    ExprNode n = num_node(v);
    n.offset = pos_;
    pos_ += std::size_t(end - begin);
    return n;
  }
  ExprNode ident() {
    const std::size_t at = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string name(s_.substr(at, pos_ - at));
    if (peek() == '(') {
      int fid = -1;
      for (int f = 0; f <= int(ExprFun::abs); ++f)
        if (name == expr_fun_name(ExprFun(f))) { fid = f; break; }
      if (fid < 0) fail(at, "unknown function '" + name + "'");
      eat('(');
      std::vector<ExprNode> args;
      args.push_back(sum());
      while (eat(',')) args.push_back(sum());
      if (!eat(')')) fail(pos_, "expected ')'");
      if (args.size() != 1)
        fail(at, "function '" + name + "' expects 1 argument, got " +
                     std::to_string(args.size()));
      ExprNode n = make_fun(ExprFun(fid), std::move(args[0]));
      n.offset = at;
      return n;
    }
    if (allowed_) {
      bool ok = false;
      for (auto& a : *allowed_)
        if (a == name) { ok = true; break; }
      if (!ok) fail(at, "unknown identifier '" + name + "'");
    }
    ExprNode n;
    n.op = ExprNode::Op::var;
    n.name = std::move(name);
    n.offset = at;
    return n;
  }
};

inline double eval_node(const ExprNode& n, const ExprEnv& env) {
  using Op = ExprNode::Op;
  auto dom = [&](const char* what) -> double {
    throw Error(Error::Kind::eval,
                std::string(what) + " domain error at byte " + std::to_string(n.offset));
  };
  switch (n.op) {
    case Op::num: return n.value;
    case Op::var: {
      const double* v = env.find(n.name);
      if (!v) throw Error(Error::Kind::eval, "unknown identifier '" + n.name +
                                                 "' at byte " + std::to_string(n.offset));
      return *v;
    }
    case Op::add: return eval_node(n.args[0], env) + eval_node(n.args[1], env);
    case Op::sub: return eval_node(n.args[0], env) - eval_node(n.args[1], env);
    case Op::mul: return eval_node(n.args[0], env) * eval_node(n.args[1], env);
    case Op::div: return eval_node(n.args[0], env) / eval_node(n.args[1], env);
    case Op::pow: {
      const double r = std::pow(eval_node(n.args[0], env), eval_node(n.args[1], env));
      if (std::isnan(r)) return dom("pow");
      return r;
    }
    case Op::neg: return -eval_node(n.args[0], env);
    case Op::fun: {
      const double x = eval_node(n.args[0], env);
      switch (n.fun) {
        case ExprFun::sin: return std::sin(x);
        case ExprFun::cos: return std::cos(x);
        case ExprFun::tan: return std::tan(x);
        case ExprFun::exp: return std::exp(x);
        case ExprFun::log: return x > 0.0 ? std::log(x) : dom("log");
        case ExprFun::sqrt: return x >= 0.0 ? std::sqrt(x) : dom("sqrt");
        case ExprFun::sinh: return std::sinh(x);
        case ExprFun::cosh: return std::cosh(x);
        case ExprFun::tanh: return std::tanh(x);
        case ExprFun::atan: return std::atan(x);
        case ExprFun::abs: return std::fabs(x);
      }
      return 0.0;
    }
  }
  return 0.0;
}

inline int precedence(const ExprNode& n) {
  using Op = ExprNode::Op;
  switch (n.op) {
    case Op::add: case Op::sub: return 1;
    case Op::mul: case Op::div: return 2;
    case Op::neg: return 3;
    case Op::pow: return 4;
    default: return 5;
  }
}

inline void print_node(const ExprNode& n, std::string& out) {
  using Op = ExprNode::Op;
  auto child = [&](const ExprNode& c, bool parens) {
    if (parens) out += '(';
    print_node(c, out);
    if (parens) out += ')';
  };
  const int p = precedence(n);
  switch (n.op) {
    case Op::num: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      out += buf;
      break;
    }
    case Op::var: out += n.name; break;
    case Op::add: case Op::mul:
      child(n.args[0], precedence(n.args[0]) < p);
      out += (n.op == Op::add ? " + " : "*");
      child(n.args[1], precedence(n.args[1]) < p);
      break;
    case Op::sub: case Op::div:
      child(n.args[0], precedence(n.args[0]) < p);
      out += (n.op == Op::sub ? " - " : "/");
      child(n.args[1], precedence(n.args[1]) <= p);
      break;
    case Op::pow:
      child(n.args[0], precedence(n.args[0]) <= p);
      out += '^';
      child(n.args[1], precedence(n.args[1]) < 3);  // exponent reparses at unary level
      break;
    case Op::neg:
      out += '-';
      child(n.args[0], precedence(n.args[0]) < p);
      break;
    case Op::fun:
      out += expr_fun_name(n.fun);
      out += '(';
      print_node(n.args[0], out);
      out += ')';
      break;
  }
}

inline bool same_node(const ExprNode& a, const ExprNode& b) {
  if (a.op != b.op) return false;
  if (a.op == ExprNode::Op::num)
    return a.value == b.value || (std::isnan(a.value) && std::isnan(b.value));
  if (a.op == ExprNode::Op::var) return a.name == b.name;
  if (a.op == ExprNode::Op::fun && a.fun != b.fun) return false;
  if (a.args.size() != b.args.size()) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!same_node(a.args[i], b.args[i])) return false;
  return true;
}

inline bool depends_on_node(const ExprNode& n, const std::string& var) {
  if (n.op == ExprNode::Op::var) return n.name == var;
  for (auto& a : n.args)
    if (depends_on_node(a, var)) return true;
  return false;
}

inline ExprNode diff_node(const ExprNode& n, const std::string& var) {
  using Op = ExprNode::Op;
  switch (n.op) {
    case Op::num: return num_node(0);
    case Op::var: return num_node(n.name == var ? 1 : 0);
    case Op::add: return make_bin(Op::add, diff_node(n.args[0], var), diff_node(n.args[1], var));
    case Op::sub: return make_bin(Op::sub, diff_node(n.args[0], var), diff_node(n.args[1], var));
    case Op::mul:
      return make_bin(Op::add,
                      make_bin(Op::mul, diff_node(n.args[0], var), n.args[1]),
                      make_bin(Op::mul, n.args[0], diff_node(n.args[1], var)));
    case Op::div:
      return make_bin(Op::div,
                      make_bin(Op::sub,
                               make_bin(Op::mul, diff_node(n.args[0], var), n.args[1]),
                               make_bin(Op::mul, n.args[0], diff_node(n.args[1], var))),
                      make_bin(Op::pow, n.args[1], num_node(2)));
    case Op::pow: {
      const ExprNode& a = n.args[0];
      const ExprNode& b = n.args[1];
      if (!depends_on_node(b, var)) {  // b constant in var: b a^(b-1) a'
        return make_bin(Op::mul,
                        make_bin(Op::mul, b, make_bin(Op::pow, a, make_bin(Op::sub, b, num_node(1)))),
                        diff_node(a, var));
      }
      if (!depends_on_node(a, var)) {  // a^b ln(a) b'
        return make_bin(Op::mul,
                        make_bin(Op::mul, n, make_fun(ExprFun::log, a)),
                        diff_node(b, var));
      }
      // a^b (b' ln a + b a'/a)
      return make_bin(Op::mul, n,
                      make_bin(Op::add,
                               make_bin(Op::mul, diff_node(b, var), make_fun(ExprFun::log, a)),
                               make_bin(Op::div, make_bin(Op::mul, b, diff_node(a, var)), a)));
    }
    case Op::neg: return make_neg(diff_node(n.args[0], var));
    case Op::fun: {
      const ExprNode& a = n.args[0];
      ExprNode da = diff_node(a, var);
      ExprNode outer;
      switch (n.fun) {
        case ExprFun::sin: outer = make_fun(ExprFun::cos, a); break;
        case ExprFun::cos: outer = make_neg(make_fun(ExprFun::sin, a)); break;
        case ExprFun::tan:
          outer = make_bin(Op::add, num_node(1),
                           make_bin(Op::pow, make_fun(ExprFun::tan, a), num_node(2)));
          break;
        case ExprFun::exp: outer = make_fun(ExprFun::exp, a); break;
        case ExprFun::log: outer = make_bin(Op::div, num_node(1), a); break;
        case ExprFun::sqrt:
          outer = make_bin(Op::div, num_node(1),
                           make_bin(Op::mul, num_node(2), make_fun(ExprFun::sqrt, a)));
          break;
        case ExprFun::sinh: outer = make_fun(ExprFun::cosh, a); break;
        case ExprFun::cosh: outer = make_fun(ExprFun::sinh, a); break;
        case ExprFun::tanh:
          outer = make_bin(Op::sub, num_node(1),
                           make_bin(Op::pow, make_fun(ExprFun::tanh, a), num_node(2)));
          break;
        case ExprFun::atan:
          outer = make_bin(Op::div, num_node(1),
                           make_bin(Op::add, num_node(1), make_bin(Op::pow, a, num_node(2))));
          break;
        case ExprFun::abs:  // d|a| = a/|a| da (non-smooth at 0)
          outer = make_bin(Op::div, a, make_fun(ExprFun::abs, a));
          break;
      }
      return make_bin(Op::mul, std::move(outer), std::move(da));
    }
  }
  return num_node(0);
}

}  // namespace detail

class Expr {
 public:
  Expr() : root_(std::make_shared<ExprNode>(detail::num_node(0))) {}
  explicit Expr(double constant)
      : root_(std::make_shared<ExprNode>(detail::num_node(constant))) {}
  explicit Expr(ExprNode n) : root_(std::make_shared<ExprNode>(std::move(n))) {}

  static Expr parse(std::string_view text,
                    const std::vector<std::string>* allowed_vars = nullptr) {
    detail::Parser p(text, allowed_vars);
    return Expr(p.parse());
  }

  double eval(const ExprEnv& env) const { return detail::eval_node(*root_, env); }

  std::string str() const {
    std::string out;
    detail::print_node(*root_, out);
    return out;
  }

  Expr derivative(const std::string& var) const {
    return Expr(detail::diff_node(*root_, var));
  }

  bool depends_on(const std::string& var) const {
    return detail::depends_on_node(*root_, var);
  }

  bool same_ast(const Expr& other) const {
    return detail::same_node(*root_, *other.root_);
  }

  bool is_constant_zero() const { return detail::is_num(*root_, 0.0); }

  const ExprNode& root() const { return *root_; }

 private:
  std::shared_ptr<const ExprNode> root_;
};

}  // namespace bel
