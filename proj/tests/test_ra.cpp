#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ail/ra.hpp"
#include "ail/ra_dsl.hpp"
#include "ail/rng.hpp"

namespace {

// Independent direct evaluations of the builtin closed forms. These are the
// oracle for the expression-tree encodings and deliberately avoid eval_expr.
double ref_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double ref_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
double ref_gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.79788456080286535588 * (x + 0.044715 * x * x * x)));
}

double ref_top2(double x) {
  double core;
  if (x <= -0.8)
    core = 0.5 + 0.8 * x - ref_softplus(1.5 * (-x - 0.8)) / 1.5;
  else if (x > 0.8)
    core = 0.5 + 0.8 * 0.8 + ref_softplus(1.5 * (x - 0.8)) / 1.5;
  else
    core = 0.5 + 0.8 * x;
  return std::min(1.5, std::max(0.0, core));
}

const std::map<std::string, std::function<double(double)>>& reference_forms() {
  static const std::map<std::string, std::function<double(double)>> forms = {
      {"gail", [](double x) { return ref_softplus(x); }},
      {"airl", [](double x) { return x; }},
      {"fairl", [](double x) { return -x * std::exp(x); }},
      {"gail_heuristic", [](double x) { return -ref_softplus(-x); }},
      {"dail", [](double x) { return 0.5 * ref_sigmoid(x) * (std::tanh(x) + 1.0); }},
      {"sigmoid_only", [](double x) { return ref_sigmoid(x); }},
      {"half_tanh", [](double x) { return 0.5 * (std::tanh(x) + 1.0); }},
      {"top2", ref_top2},
      {"top3",
       [](double x) { return ref_softplus(x) * ref_sigmoid(1.5 * x) + 0.5 * ref_gelu(x); }},
      {"top4",
       [](double x) {
         return (x / (1.0 + std::abs(x))) * ref_sigmoid(3.0 * x) * 0.5 * (std::tanh(x) + 1.0);
       }},
      {"top5",
       [](double x) { return 0.5 * (x / (1.0 + std::abs(x)) + 1.0) * ref_sigmoid(3.0 * x); }},
  };
  return forms;
}

// Random expression generator for round-trip properties.
ail::ExprPtr random_expr(ail::Rng& rng, int depth_budget) {
  using namespace ail;
  const int kind = depth_budget <= 1 ? rng.uniform_int(2) : rng.uniform_int(10);
  switch (kind) {
    case 0: {
      // Mix of plain and awkward constants.
      switch (rng.uniform_int(4)) {
        case 0: return expr::cst(static_cast<double>(rng.uniform_int(21) - 10));
        case 1: return expr::cst(rng.uniform(-5.0, 5.0));
        case 2: return expr::cst(rng.uniform(-1.0, 1.0) * 1e-7);
        default: return expr::cst(rng.uniform(-1.0, 1.0) * 1e9);
      }
    }
    case 1:
      return expr::var();
    case 2:
    case 3:
    case 4: {
      const auto op = static_cast<UnaryOp>(rng.uniform_int(8));
      return expr::un(op, random_expr(rng, depth_budget - 1));
    }
    case 9: {
      const double t = rng.uniform(-3.0, 3.0);
      return expr::branch(t, random_expr(rng, depth_budget - 1), random_expr(rng, depth_budget - 1));
    }
    default: {
      const auto op = static_cast<BinaryOp>(rng.uniform_int(6));
      return expr::bin(op, random_expr(rng, depth_budget - 1), random_expr(rng, depth_budget - 1));
    }
  }
}

}  // namespace

TEST_CASE("named builtins hit expected values at reference points") {
  auto at = [](const std::string& name, double x) {
    auto f = ail::named_ra(name);
    return ail::eval_expr(*f.expr, x);
  };

  CHECK(at("gail", 0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(at("fairl", -1.0) == Catch::Approx(1.0 / std::exp(1.0)).epsilon(1e-12));
  CHECK(at("dail", 0.0) == Catch::Approx(0.25).epsilon(1e-12));
  // High-precision direct evaluation of 0.5*sigmoid(-1.8)*(tanh(-1.8)+1).
  const double dail_m18 = 0.5 * ref_sigmoid(-1.8) * (std::tanh(-1.8) + 1.0);
  CHECK(dail_m18 == Catch::Approx(0.00377).margin(5e-6));
  CHECK(at("dail", -1.8) == Catch::Approx(dail_m18).epsilon(1e-14));
  CHECK(at("gail_heuristic", 0.0) == Catch::Approx(-std::log(2.0)).epsilon(1e-12));

  const double big = at("dail", 20.0);
  CHECK(big >= 0.999);
  CHECK(big <= 1.0);

  CHECK_THROWS_AS(ail::named_ra("nope"), ail::UnknownRAName);
  CHECK_THROWS_WITH(ail::named_ra("nope"), Catch::Matchers::ContainsSubstring("dail"));
}

TEST_CASE("every builtin matches its independent closed form") {
  ail::Rng rng(20240817);
  for (const auto& name : ail::builtin_ra_names()) {
    auto f = ail::named_ra(name);
    const auto& ref = reference_forms().at(name);
    for (int i = 0; i < 1000; ++i) {
      const double x = rng.uniform(-10.0, 10.0);
      const double got = ail::eval_expr(*f.expr, x);
      const double want = ref(x);
      INFO(name << " at x=" << x);
      CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("eval_ra maps batches elementwise") {
  auto airl = ail::named_ra("airl");
  const std::vector<double> in = {-2.0, 0.0, 2.0};
  CHECK(ail::eval_ra(airl, in) == in);

  auto gail = ail::named_ra("gail");
  const std::vector<double> lo = {-5.0};
  CHECK(ail::eval_ra(gail, lo)[0] == Catch::Approx(0.00672).margin(5e-6));

  CHECK(ail::eval_ra(airl, std::vector<double>{}).empty());
}

TEST_CASE("dail stays in [0,1] over a dense grid") {
  auto dail = ail::named_ra("dail");
  for (int i = -5000; i <= 5000; ++i) {
    const double x = i * 0.01;
    const double v = ail::eval_expr(*dail.expr, x);
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("evaluation is pure and bitwise deterministic") {
  ail::Rng rng(7);
  auto e = random_expr(rng, 6);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-30.0, 30.0);
    const double a = ail::eval_expr(*e, x);
    const double b = ail::eval_expr(*e, x);
    REQUIRE(std::memcmp(&a, &b, sizeof a) == 0);
    REQUIRE(std::isfinite(a));
  }
}

TEST_CASE("guards absorb domain violations") {
  auto logx = ail::parse("log(x)");
  ail::GuardStats gs;
  const double v = ail::eval_expr(*logx, -1.0, &gs);
  CHECK(v == Catch::Approx(std::log(1e-12)));
  CHECK(gs.activations == 1);

  auto divx = ail::parse("1/x");
  ail::GuardStats gs2;
  CHECK(ail::eval_expr(*divx, 0.0, &gs2) == Catch::Approx(1e12));
  CHECK(gs2.activations == 1);

  auto negdiv = ail::parse("1/x");
  CHECK(ail::eval_expr(*negdiv, -1e-15) == Catch::Approx(-1e12));

  auto expx = ail::parse("exp(x)");
  ail::GuardStats gs3;
  CHECK(ail::eval_expr(*expx, 100.0, &gs3) == Catch::Approx(std::exp(60.0)));
  CHECK(gs3.activations == 1);

  // Product of capped exponentials can only overflow through the value cap.
  auto chain = ail::parse("exp(x)*exp(x)*exp(x)*exp(x)*exp(x)*exp(x)");
  const double capped = ail::eval_expr(*chain, 1000.0);
  CHECK(std::isfinite(capped));

  // inf - inf style NaN is mapped to zero.
  auto nan_expr = ail::parse("exp(x)*exp(x)*exp(x)*exp(x)*exp(x)*exp(x) - exp(x)*exp(x)*exp(x)*exp(x)*exp(x)*exp(x)");
  CHECK(ail::eval_expr(*nan_expr, 1000.0) == 0.0);
}

TEST_CASE("parser matches hand-built trees") {
  auto parsed = ail::parse("0.5*sigmoid(x)*(tanh(x)+1)");
  auto dail = ail::named_ra("dail");
  CHECK(ail::structurally_equal(*parsed, *dail.expr));

  auto spaced = ail::parse("  0.5 * sigmoid( x ) * ( tanh(x) + 1 )  ");
  CHECK(ail::structurally_equal(*spaced, *dail.expr));

  auto b = ail::parse("branch(0.8, x, 1)");
  CHECK(b->kind == ail::RAExpr::Kind::Branch);
  CHECK(b->value == 0.8);
  CHECK(b->a->kind == ail::RAExpr::Kind::Var);
  CHECK(b->b->kind == ail::RAExpr::Kind::Const);

  auto neg_const = ail::parse("-3");
  CHECK(neg_const->kind == ail::RAExpr::Kind::Const);
  CHECK(neg_const->value == -3.0);

  auto neg_var = ail::parse("-x");
  CHECK(neg_var->kind == ail::RAExpr::Kind::Unary);
  CHECK(neg_var->uop == ail::UnaryOp::Neg);
}

TEST_CASE("parser reports errors with byte offsets") {
  try {
    ail::parse("0.5 +* x");
    FAIL("expected ParseError");
  } catch (const ail::ParseError& e) {
    CHECK(e.offset() == 5);
  }

  CHECK_THROWS_AS(ail::parse(""), ail::ParseError);
  CHECK_THROWS_AS(ail::parse("foo(x)"), ail::ParseError);
  CHECK_THROWS_AS(ail::parse("min(x)"), ail::ParseError);
  CHECK_THROWS_AS(ail::parse("branch(x, 1, 2)"), ail::ParseError);
  CHECK_THROWS_AS(ail::parse("sigmoid(x"), ail::ParseError);
  CHECK_THROWS_AS(ail::parse("y + 1"), ail::ParseError);

  // Node budget: 129 leaves chained by '+' crosses the 128-node limit.
  std::string big = "x";
  for (int i = 0; i < 128; ++i) big += "+x";
  CHECK_THROWS_WITH(ail::parse(big), Catch::Matchers::ContainsSubstring("limit"));

  std::string deep = "x";
  for (int i = 0; i < 20; ++i) deep = "tanh(" + deep + ")";
  CHECK_THROWS_AS(ail::parse(deep), ail::ParseError);
}

TEST_CASE("serialization is canonical") {
  CHECK(ail::serialize(ail::expr::cst(0.5)) == "0.5");
  CHECK(ail::serialize(ail::named_ra("airl").expr) == "x");
  CHECK(ail::serialize(ail::expr::branch(0.8, ail::expr::var(), ail::expr::cst(1.0))) ==
        "branch(0.8, x, 1)");
  CHECK(ail::serialize(ail::named_ra("gail").expr) == "softplus(x)");
  CHECK(ail::serialize(ail::named_ra("dail").expr) == "((0.5*sigmoid(x))*(tanh(x)+1))");
  CHECK(ail::serialize(ail::expr::un(ail::UnaryOp::Neg, ail::expr::cst(3.0))) == "neg(3)");
  CHECK(ail::serialize(ail::expr::cst(-3.0)) == "-3");
}

TEST_CASE("serialize/parse round-trips random trees") {
  ail::Rng rng(991);
  int kept = 0;
  while (kept < 1000) {
    auto e = random_expr(rng, 5);
    if (ail::node_count(*e) > ail::kMaxExprNodes || ail::tree_depth(*e) > ail::kMaxExprDepth)
      continue;
    ++kept;
    const std::string text = ail::serialize(e);
    auto back = ail::parse(text);
    INFO(text);
    REQUIRE(ail::structurally_equal(*e, *back));
    REQUIRE(ail::serialize(back) == text);
  }
}

TEST_CASE("builtins round-trip through the DSL") {
  for (const auto& name : ail::builtin_ra_names()) {
    auto f = ail::named_ra(name);
    auto back = ail::parse(ail::serialize(f.expr));
    INFO(name);
    CHECK(ail::structurally_equal(*f.expr, *back));
    CHECK(ail::node_count(*f.expr) <= ail::kMaxExprNodes);
    CHECK(ail::tree_depth(*f.expr) <= ail::kMaxExprDepth);
  }
}

TEST_CASE("validate reports grid statistics") {
  auto dail = ail::validate(*ail::named_ra("dail").expr);
  CHECK(dail.bounded);
  CHECK(dail.guard_count == 0);
  CHECK(dail.max_abs <= 1.0);

  auto fairl = ail::validate(*ail::named_ra("fairl").expr);
  CHECK_FALSE(fairl.bounded);
  // Unbounded below for large positive logits: -10*e^10.
  CHECK(fairl.max_abs == Catch::Approx(10.0 * std::exp(10.0)).epsilon(1e-9));

  auto c3 = ail::validate(*ail::expr::cst(3.0));
  CHECK(c3.monotone);
  CHECK(c3.bounded);

  auto airl = ail::validate(*ail::named_ra("airl").expr);
  CHECK(airl.monotone);
  CHECK(airl.max_abs == Catch::Approx(10.0));

  auto fairl_mono = ail::validate(*ail::named_ra("fairl").expr);
  CHECK_FALSE(fairl_mono.monotone);
}
