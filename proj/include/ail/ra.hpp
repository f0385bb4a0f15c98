#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ail {

// ---------------------------------------------------------------------------
// Reward-assignment expressions.
//
// A reward-assignment function maps the discriminator logit (the estimated
// log density ratio of expert vs. policy state-action visitation) to the
// scalar reward used for policy improvement. Expressions are small immutable
// trees; evaluation is pure and guarded so that any finite input yields a
// finite reward, which keeps evolved candidates from poisoning training.
// ---------------------------------------------------------------------------

enum class UnaryOp { Neg, Exp, Log, Abs, Tanh, Sigmoid, Softplus, Gelu };
enum class BinaryOp { Add, Sub, Mul, Div, Min, Max };

struct RAExpr;
using ExprPtr = std::shared_ptr<const RAExpr>;

struct RAExpr {
  enum class Kind { Const, Var, Unary, Binary, Branch };

  Kind kind = Kind::Const;
  double value = 0.0;  // Const payload; Branch threshold
  UnaryOp uop = UnaryOp::Neg;
  BinaryOp bop = BinaryOp::Add;
  ExprPtr a;  // unary child / binary left / branch if_le
  ExprPtr b;  // binary right / branch if_gt
};

inline constexpr int kMaxExprNodes = 128;
inline constexpr int kMaxExprDepth = 16;

// Guard constants (see eval_expr).
inline constexpr double kLogFloor = 1e-12;
inline constexpr double kDivFloor = 1e-12;
inline constexpr double kExpCap = 60.0;
inline constexpr double kValueCap = 1e300;

namespace expr {

inline ExprPtr cst(double v) {
  auto e = std::make_shared<RAExpr>();
  e->kind = RAExpr::Kind::Const;
  e->value = v;
  return e;
}

inline ExprPtr var() {
  auto e = std::make_shared<RAExpr>();
  e->kind = RAExpr::Kind::Var;
  return e;
}

inline ExprPtr un(UnaryOp op, ExprPtr child) {
  auto e = std::make_shared<RAExpr>();
  e->kind = RAExpr::Kind::Unary;
  e->uop = op;
  e->a = std::move(child);
  return e;
}

inline ExprPtr bin(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
  auto e = std::make_shared<RAExpr>();
  e->kind = RAExpr::Kind::Binary;
  e->bop = op;
  e->a = std::move(lhs);
  e->b = std::move(rhs);
  return e;
}

inline ExprPtr branch(double threshold, ExprPtr if_le, ExprPtr if_gt) {
  auto e = std::make_shared<RAExpr>();
  e->kind = RAExpr::Kind::Branch;
  e->value = threshold;
  e->a = std::move(if_le);
  e->b = std::move(if_gt);
  return e;
}

}  // namespace expr

inline int node_count(const RAExpr& e) {
  switch (e.kind) {
    case RAExpr::Kind::Const:
    case RAExpr::Kind::Var:
      return 1;
    case RAExpr::Kind::Unary:
      return 1 + node_count(*e.a);
    case RAExpr::Kind::Binary:
    case RAExpr::Kind::Branch:
      return 1 + node_count(*e.a) + node_count(*e.b);
  }
  return 1;
}

inline int tree_depth(const RAExpr& e) {
  switch (e.kind) {
    case RAExpr::Kind::Const:
    case RAExpr::Kind::Var:
      return 1;
    case RAExpr::Kind::Unary:
      return 1 + tree_depth(*e.a);
    case RAExpr::Kind::Binary:
    case RAExpr::Kind::Branch:
      return 1 + std::max(tree_depth(*e.a), tree_depth(*e.b));
  }
  return 1;
}

inline bool structurally_equal(const RAExpr& x, const RAExpr& y) {
  if (x.kind != y.kind) return false;
  switch (x.kind) {
    case RAExpr::Kind::Const:
      return x.value == y.value;
    case RAExpr::Kind::Var:
      return true;
    case RAExpr::Kind::Unary:
      return x.uop == y.uop && structurally_equal(*x.a, *y.a);
    case RAExpr::Kind::Binary:
      return x.bop == y.bop && structurally_equal(*x.a, *y.a) && structurally_equal(*x.b, *y.b);
    case RAExpr::Kind::Branch:
      return x.value == y.value && structurally_equal(*x.a, *y.a) && structurally_equal(*x.b, *y.b);
  }
  return false;
}

struct GuardStats {
  std::int64_t activations = 0;
};

// Numerically stable scalar kernels shared by eval and by the net activations.
inline double stable_softplus(double x) {
  // max(x,0) + log1p(exp(-|x|)) avoids overflow for large |x|.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double gelu_tanh(double x) {
  // tanh approximation: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
  constexpr double kSqrt2OverPi = 0.79788456080286535588;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

namespace detail {

inline double guard_finite(double v, GuardStats* gs) {
  if (std::isnan(v)) {
    if (gs) ++gs->activations;
    return 0.0;
  }
  if (std::isinf(v)) {
    if (gs) ++gs->activations;
    return std::copysign(kValueCap, v);
  }
  return v;
}

}  // namespace detail

// Evaluates an expression at logit x. Guards:
//   log(v)   -> log(max(v, 1e-12))
//   a / b    -> |b| clamped to >= 1e-12, sign preserved (sign of 0 is +)
//   exp(v)   -> argument capped at 60
//   any node -> NaN becomes 0, +/-Inf becomes +/-1e300
// Every guard hit increments the diagnostic counter; values are unaffected
// on the nominal path, so evaluation stays pure and deterministic.
inline double eval_expr(const RAExpr& e, double x, GuardStats* gs = nullptr) {
  switch (e.kind) {
    case RAExpr::Kind::Const:
      return e.value;
    case RAExpr::Kind::Var:
      return x;
    case RAExpr::Kind::Unary: {
      double v = eval_expr(*e.a, x, gs);
      double out = 0.0;
      switch (e.uop) {
        case UnaryOp::Neg:
          out = -v;
          break;
        case UnaryOp::Exp:
          if (v > kExpCap) {
            if (gs) ++gs->activations;
            v = kExpCap;
          }
          out = std::exp(v);
          break;
        case UnaryOp::Log:
          if (v < kLogFloor) {
            if (gs) ++gs->activations;
            v = kLogFloor;
          }
          out = std::log(v);
          break;
        case UnaryOp::Abs:
          out = std::abs(v);
          break;
        case UnaryOp::Tanh:
          out = std::tanh(v);
          break;
        case UnaryOp::Sigmoid:
          out = stable_sigmoid(v);
          break;
        case UnaryOp::Softplus:
          out = stable_softplus(v);
          break;
        case UnaryOp::Gelu:
          out = gelu_tanh(v);
          break;
      }
      return detail::guard_finite(out, gs);
    }
    case RAExpr::Kind::Binary: {
      const double l = eval_expr(*e.a, x, gs);
      double r = eval_expr(*e.b, x, gs);
      double out = 0.0;
      switch (e.bop) {
        case BinaryOp::Add:
          out = l + r;
          break;
        case BinaryOp::Sub:
          out = l - r;
          break;
        case BinaryOp::Mul:
          out = l * r;
          break;
        case BinaryOp::Div:
          if (std::abs(r) < kDivFloor) {
            if (gs) ++gs->activations;
            r = r < 0.0 ? -kDivFloor : kDivFloor;
          }
          out = l / r;
          break;
        case BinaryOp::Min:
          out = std::min(l, r);
          break;
        case BinaryOp::Max:
          out = std::max(l, r);
          break;
      }
      return detail::guard_finite(out, gs);
    }
    case RAExpr::Kind::Branch:
      return x <= e.value ? eval_expr(*e.a, x, gs) : eval_expr(*e.b, x, gs);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Named functions and registry.
// ---------------------------------------------------------------------------

enum class RASource { Builtin, Llm, LocalMutation };

struct RAFunction {
  std::string name;
  ExprPtr expr;
  RASource source = RASource::Builtin;
};

struct UnknownRAName : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& builtin_ra_names() {
  static const std::vector<std::string> names = {
      "gail", "airl", "fairl", "gail_heuristic", "dail", "sigmoid_only",
      "half_tanh", "top2", "top3", "top4", "top5"};
  return names;
}

namespace detail {

using expr::bin;
using expr::branch;
using expr::cst;
using expr::un;
using expr::var;

inline ExprPtr dail_expr() {
  // 0.5 * sigmoid(x) * (tanh(x) + 1), left-associated product.
  return bin(BinaryOp::Mul,
             bin(BinaryOp::Mul, cst(0.5), un(UnaryOp::Sigmoid, var())),
             bin(BinaryOp::Add, un(UnaryOp::Tanh, var()), cst(1.0)));
}

inline ExprPtr top2_expr() {
  // Piecewise-linear core with softplus knees, clipped to [0, 1.5]:
  //   x <= -0.8 : 0.5 + 0.8x - softplus(1.5*(-x - 0.8))/1.5
  //   |x| < 0.8 : 0.5 + 0.8x
  //   x >= 0.8  : 0.5 + 0.8*0.8 + softplus(1.5*(x - 0.8))/1.5
  auto linear = [] { return bin(BinaryOp::Add, cst(0.5), bin(BinaryOp::Mul, cst(0.8), var())); };
  auto lo = bin(BinaryOp::Sub, linear(),
                bin(BinaryOp::Div,
                    un(UnaryOp::Softplus,
                       bin(BinaryOp::Mul, cst(1.5),
                           bin(BinaryOp::Sub, un(UnaryOp::Neg, var()), cst(0.8)))),
                    cst(1.5)));
  auto hi = bin(BinaryOp::Add,
                bin(BinaryOp::Add, cst(0.5), bin(BinaryOp::Mul, cst(0.8), cst(0.8))),
                bin(BinaryOp::Div,
                    un(UnaryOp::Softplus,
                       bin(BinaryOp::Mul, cst(1.5), bin(BinaryOp::Sub, var(), cst(0.8)))),
                    cst(1.5)));
  auto body = branch(-0.8, std::move(lo), branch(0.8, linear(), std::move(hi)));
  return bin(BinaryOp::Min, cst(1.5), bin(BinaryOp::Max, cst(0.0), std::move(body)));
}

inline ExprPtr top3_expr() {
  // softplus(x)*sigmoid(1.5x) + 0.5*gelu(x)
  return bin(BinaryOp::Add,
             bin(BinaryOp::Mul, un(UnaryOp::Softplus, var()),
                 un(UnaryOp::Sigmoid, bin(BinaryOp::Mul, cst(1.5), var()))),
             bin(BinaryOp::Mul, cst(0.5), un(UnaryOp::Gelu, var())));
}

inline ExprPtr ratio_squash() {
  // x / (1 + |x|)
  return bin(BinaryOp::Div, var(), bin(BinaryOp::Add, cst(1.0), un(UnaryOp::Abs, var())));
}

inline ExprPtr top4_expr() {
  // (x/(1+|x|)) * sigmoid(3x) * 0.5 * (tanh(x) + 1)
  return bin(BinaryOp::Mul,
             bin(BinaryOp::Mul,
                 bin(BinaryOp::Mul, ratio_squash(),
                     un(UnaryOp::Sigmoid, bin(BinaryOp::Mul, cst(3.0), var()))),
                 cst(0.5)),
             bin(BinaryOp::Add, un(UnaryOp::Tanh, var()), cst(1.0)));
}

inline ExprPtr top5_expr() {
  // 0.5 * (x/(1+|x|) + 1) * sigmoid(3x)
  return bin(BinaryOp::Mul,
             bin(BinaryOp::Mul, cst(0.5), bin(BinaryOp::Add, ratio_squash(), cst(1.0))),
             un(UnaryOp::Sigmoid, bin(BinaryOp::Mul, cst(3.0), var())));
}

}  // namespace detail

inline RAFunction named_ra(const std::string& name) {
  using namespace detail;
  ExprPtr e;
  if (name == "gail") {
    e = un(UnaryOp::Softplus, var());
  } else if (name == "airl") {
    e = var();
  } else if (name == "fairl") {
    e = un(UnaryOp::Neg, bin(BinaryOp::Mul, var(), un(UnaryOp::Exp, var())));
  } else if (name == "gail_heuristic") {
    e = un(UnaryOp::Neg, un(UnaryOp::Softplus, un(UnaryOp::Neg, var())));
  } else if (name == "dail") {
    e = dail_expr();
  } else if (name == "sigmoid_only") {
    e = un(UnaryOp::Sigmoid, var());
  } else if (name == "half_tanh") {
    e = bin(BinaryOp::Mul, cst(0.5), bin(BinaryOp::Add, un(UnaryOp::Tanh, var()), cst(1.0)));
  } else if (name == "top2") {
    e = top2_expr();
  } else if (name == "top3") {
    e = top3_expr();
  } else if (name == "top4") {
    e = top4_expr();
  } else if (name == "top5") {
    e = top5_expr();
  } else {
    std::string msg = "unknown reward-assignment function '" + name + "'; valid names:";
    for (const auto& n : builtin_ra_names()) msg += " " + n;
    throw UnknownRAName(msg);
  }
  return RAFunction{name, std::move(e), RASource::Builtin};
}

// Elementwise evaluation over a batch of logits.
inline std::vector<double> eval_ra(const RAFunction& f, std::span<const double> logits,
                                   GuardStats* gs = nullptr) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = eval_expr(*f.expr, logits[i], gs);
  return out;
}

// ---------------------------------------------------------------------------
// Validation over a fixed grid; used to screen evolved candidates.
// ---------------------------------------------------------------------------

struct ValidationReport {
  double max_abs = 0.0;           // max |value| on the grid [-10, 10], step 0.01
  std::int64_t guard_count = 0;   // guard activations over the sweep
  bool bounded = false;           // max_abs <= kBoundedLimit
  bool monotone = false;          // weakly monotone along the grid
};

inline constexpr double kBoundedLimit = 100.0;

inline ValidationReport validate(const RAExpr& e) {
  ValidationReport rep;
  GuardStats gs;
  bool nondecreasing = true;
  bool nonincreasing = true;
  double prev = 0.0;
  for (int i = -1000; i <= 1000; ++i) {
    const double x = i * 0.01;
    const double v = eval_expr(e, x, &gs);
    rep.max_abs = std::max(rep.max_abs, std::abs(v));
    if (i > -1000) {
      if (v < prev) nondecreasing = false;
      if (v > prev) nonincreasing = false;
    }
    prev = v;
  }
  rep.guard_count = gs.activations;
  rep.bounded = rep.max_abs <= kBoundedLimit;
  rep.monotone = nondecreasing || nonincreasing;
  return rep;
}

}  // namespace ail
