#pragma once

#include <cctype>
#include <charconv>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ail/ra.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// Expression DSL.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := NUMBER | 'x' | NAME '(' expr (',' expr)* ')' | '(' expr ')'
//
// NAME is one of exp, log, abs, tanh, sigmoid, softplus, gelu, neg (1 arg),
// min, max (2 args), branch (3 args; the first must be a numeric constant).
// Whitespace is insignificant. A leading '-' on a number folds into the
// constant, so serialization round-trips structurally.
//
// Serialization is canonical: binary arithmetic fully parenthesized, neg
// printed as neg(...), constants printed with shortest round-trip decimals
// (up to 17 significant digits), so distinct trees serialize distinctly.
// ---------------------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace dsl_detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ExprPtr parse() {
    ExprPtr e = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    const int nodes = node_count(*e);
    if (nodes > kMaxExprNodes)
      throw ParseError("expression has " + std::to_string(nodes) + " nodes, limit is " +
                           std::to_string(kMaxExprNodes),
                       0);
    const int depth = tree_depth(*e);
    if (depth > kMaxExprDepth)
      throw ParseError("expression depth " + std::to_string(depth) + " exceeds limit " +
                           std::to_string(kMaxExprDepth),
                       0);
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void enter() {
    if (++nesting_ > kMaxNesting) fail("expression nesting too deep");
  }
  void leave() { --nesting_; }

  ExprPtr parse_expr() {
    enter();
    ExprPtr lhs = parse_term();
    for (;;) {
      const char c = peek();
      if (c == '+' || c == '-') {
        ++pos_;
        ExprPtr rhs = parse_term();
        lhs = expr::bin(c == '+' ? BinaryOp::Add : BinaryOp::Sub, std::move(lhs), std::move(rhs));
      } else {
        break;
      }
    }
    leave();
    return lhs;
  }

  ExprPtr parse_term() {
    enter();
    ExprPtr lhs = parse_unary();
    for (;;) {
      const char c = peek();
      if (c == '*' || c == '/') {
        ++pos_;
        ExprPtr rhs = parse_unary();
        lhs = expr::bin(c == '*' ? BinaryOp::Mul : BinaryOp::Div, std::move(lhs), std::move(rhs));
      } else {
        break;
      }
    }
    leave();
    return lhs;
  }

  ExprPtr parse_unary() {
    enter();
    ExprPtr out;
    if (eat('-')) {
      ExprPtr inner = parse_unary();
      if (inner->kind == RAExpr::Kind::Const)
        out = expr::cst(-inner->value);
      else
        out = expr::un(UnaryOp::Neg, std::move(inner));
    } else {
      out = parse_primary();
    }
    leave();
    return out;
  }

  ExprPtr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
    if (c == '(') {
      ++pos_;
      enter();
      ExprPtr e = parse_expr();
      leave();
      expect(')');
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  ExprPtr parse_number() {
    skip_ws();
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return expr::cst(value);
  }

  ExprPtr parse_name() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    if (name == "x") return expr::var();

    if (!eat('(')) {
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "' (the logit variable is 'x')");
    }

    if (name == "branch") {
      enter();
      ExprPtr t = parse_expr();
      if (t->kind != RAExpr::Kind::Const) {
        pos_ = start;
        fail("branch threshold must be a numeric constant");
      }
      expect(',');
      ExprPtr if_le = parse_expr();
      expect(',');
      ExprPtr if_gt = parse_expr();
      expect(')');
      leave();
      return expr::branch(t->value, std::move(if_le), std::move(if_gt));
    }

    if (name == "min" || name == "max") {
      enter();
      ExprPtr lhs = parse_expr();
      expect(',');
      ExprPtr rhs = parse_expr();
      expect(')');
      leave();
      return expr::bin(name == "min" ? BinaryOp::Min : BinaryOp::Max, std::move(lhs), std::move(rhs));
    }

    UnaryOp op;
    if (name == "neg")
      op = UnaryOp::Neg;
    else if (name == "exp")
      op = UnaryOp::Exp;
    else if (name == "log")
      op = UnaryOp::Log;
    else if (name == "abs")
      op = UnaryOp::Abs;
    else if (name == "tanh")
      op = UnaryOp::Tanh;
    else if (name == "sigmoid")
      op = UnaryOp::Sigmoid;
    else if (name == "softplus")
      op = UnaryOp::Softplus;
    else if (name == "gelu")
      op = UnaryOp::Gelu;
    else {
      pos_ = start;
      fail("unknown function '" + std::string(name) + "'");
    }
    enter();
    ExprPtr child = parse_expr();
    expect(')');
    leave();
    return expr::un(op, std::move(child));
  }

  static constexpr int kMaxNesting = 64;

  std::string_view text_;
  std::size_t pos_ = 0;
  int nesting_ = 0;
};

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "neg";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Abs: return "abs";
    case UnaryOp::Tanh: return "tanh";
    case UnaryOp::Sigmoid: return "sigmoid";
    case UnaryOp::Softplus: return "softplus";
    case UnaryOp::Gelu: return "gelu";
  }
  return "?";
}

inline void serialize_into(const RAExpr& e, std::string& out) {
  switch (e.kind) {
    case RAExpr::Kind::Const:
      out += format_double(e.value);
      return;
    case RAExpr::Kind::Var:
      out += 'x';
      return;
    case RAExpr::Kind::Unary:
      out += unary_name(e.uop);
      out += '(';
      serialize_into(*e.a, out);
      out += ')';
      return;
    case RAExpr::Kind::Binary: {
      if (e.bop == BinaryOp::Min || e.bop == BinaryOp::Max) {
        out += (e.bop == BinaryOp::Min) ? "min(" : "max(";
        serialize_into(*e.a, out);
        out += ", ";
        serialize_into(*e.b, out);
        out += ')';
        return;
      }
      char op = '+';
      if (e.bop == BinaryOp::Sub) op = '-';
      if (e.bop == BinaryOp::Mul) op = '*';
      if (e.bop == BinaryOp::Div) op = '/';
      out += '(';
      serialize_into(*e.a, out);
      out += op;
      serialize_into(*e.b, out);
      out += ')';
      return;
    }
    case RAExpr::Kind::Branch:
      out += "branch(";
      out += format_double(e.value);
      out += ", ";
      serialize_into(*e.a, out);
      out += ", ";
      serialize_into(*e.b, out);
      out += ')';
      return;
  }
}

}  // namespace dsl_detail

inline ExprPtr parse(std::string_view text) { return dsl_detail::Parser(text).parse(); }

inline std::string serialize(const RAExpr& e) {
  std::string out;
  dsl_detail::serialize_into(e, out);
  return out;
}

inline std::string serialize(const ExprPtr& e) { return serialize(*e); }

}  // namespace ail
