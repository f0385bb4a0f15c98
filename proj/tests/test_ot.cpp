#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ail/ot.hpp"
#include "ail/rng.hpp"

namespace {

ail::EmpiricalDist random_cloud(ail::Rng& rng, int n, int d, double shift = 0.0) {
  ail::EmpiricalDist out;
  out.points = ail::Matrix(n, d);
  for (auto& v : out.points.data) v = rng.normal() + shift;
  return out;
}

// Oracle for equal uniform supports: minimum over all permutation matchings.
double permutation_oracle(const ail::EmpiricalDist& a, const ail::EmpiricalDist& b) {
  const ail::Matrix c = ail::cost_matrix(a, b);
  const int n = a.n();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) cost += c(i, perm[i]);
    best = std::min(best, cost / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

// Oracle for the 2x3 uniform case: integer vertices of the scaled
// transportation polytope (marginals 3,3 / 2,2,2) enumerated exhaustively.
double vertex_oracle_2x3(const ail::EmpiricalDist& a, const ail::EmpiricalDist& b) {
  const ail::Matrix c = ail::cost_matrix(a, b);
  double best = std::numeric_limits<double>::infinity();
  for (int f11 = 0; f11 <= 2; ++f11)
    for (int f12 = 0; f12 <= 2; ++f12) {
      const int f13 = 3 - f11 - f12;
      if (f13 < 0 || f13 > 2) continue;
      const int f21 = 2 - f11, f22 = 2 - f12, f23 = 2 - f13;
      const double cost = (f11 * c(0, 0) + f12 * c(0, 1) + f13 * c(0, 2) + f21 * c(1, 0) +
                           f22 * c(1, 1) + f23 * c(1, 2)) /
                          6.0;
      best = std::min(best, cost);
    }
  return std::sqrt(best);
}

}  // namespace

TEST_CASE("cost matrix basics") {
  ail::Rng rng(1);
  auto a = random_cloud(rng, 4, 3);
  auto c_self = ail::cost_matrix(a, a);
  for (int i = 0; i < 4; ++i) CHECK(c_self(i, i) == 0.0);

  ail::EmpiricalDist p, q;
  p.points = ail::Matrix(1, 1);
  p.points(0, 0) = 0.0;
  q.points = ail::Matrix(1, 1);
  q.points(0, 0) = 3.0;
  CHECK(ail::cost_matrix(p, q)(0, 0) == 9.0);

  auto b = random_cloud(rng, 5, 3);
  auto cab = ail::cost_matrix(a, b);
  auto cba = ail::cost_matrix(b, a);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) REQUIRE(cab(i, j) == cba(j, i));

  auto wrong = random_cloud(rng, 3, 2);
  CHECK_THROWS_AS(ail::cost_matrix(a, wrong), std::invalid_argument);
}

TEST_CASE("exact solver on degenerate instances") {
  ail::Rng rng(2);
  auto a = random_cloud(rng, 6, 4);
  auto self = ail::emd_exact(a, a);
  CHECK(self.distance == Catch::Approx(0.0).margin(1e-12));

  ail::EmpiricalDist p, q;
  p.points = ail::Matrix(1, 1);
  p.points(0, 0) = 0.0;
  q.points = ail::Matrix(1, 1);
  q.points(0, 0) = 3.0;
  CHECK(ail::emd_exact(p, q).distance == Catch::Approx(3.0));

  ail::EmpiricalDist big;
  big.points = ail::Matrix(300, 1);
  CHECK_THROWS_AS(ail::emd_exact(big, big), std::invalid_argument);
}

TEST_CASE("exact solver equals brute-force permutation matching") {
  ail::Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    const int n = 3;
    auto a = random_cloud(rng, n, 2);
    auto b = random_cloud(rng, n, 2, 0.5);
    const double got = ail::emd_exact(a, b).distance;
    const double want = permutation_oracle(a, b);
    REQUIRE(got == Catch::Approx(want).margin(1e-9));
  }
  for (int t = 0; t < 10; ++t) {
    const int n = 5;
    auto a = random_cloud(rng, n, 3);
    auto b = random_cloud(rng, n, 3, 1.0);
    REQUIRE(ail::emd_exact(a, b).distance ==
            Catch::Approx(permutation_oracle(a, b)).margin(1e-9));
  }
}

TEST_CASE("exact solver handles unequal supports") {
  ail::Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    auto a = random_cloud(rng, 2, 2);
    auto b = random_cloud(rng, 3, 2, 0.3);
    const auto res = ail::emd_exact(a, b);
    REQUIRE(res.distance == Catch::Approx(vertex_oracle_2x3(a, b)).margin(1e-9));
    REQUIRE(res.plan.marginal_violation() <= 1e-9);
  }
}

TEST_CASE("exact solver satisfies metric properties") {
  ail::Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    auto a = random_cloud(rng, 8, 3);
    auto b = random_cloud(rng, 8, 3, 0.7);
    auto c = random_cloud(rng, 8, 3, -0.4);
    const double ab = ail::emd_exact(a, b).distance;
    const double ba = ail::emd_exact(b, a).distance;
    const double ac = ail::emd_exact(a, c).distance;
    const double cb = ail::emd_exact(c, b).distance;
    REQUIRE(std::abs(ab - ba) <= 1e-9);
    REQUIRE(ab <= ac + cb + 1e-9);
    REQUIRE(ail::emd_exact(a, a).distance <= 1e-9);
  }
}

TEST_CASE("W2 is homogeneous under feature scaling") {
  ail::Rng rng(6);
  auto a = random_cloud(rng, 7, 3);
  auto b = random_cloud(rng, 7, 3, 1.2);
  const double base = ail::emd_exact(a, b).distance;
  ail::EmpiricalDist a2 = a, b2 = b;
  for (auto& v : a2.points.data) v *= 2.0;
  for (auto& v : b2.points.data) v *= 2.0;
  CHECK(ail::emd_exact(a2, b2).distance == Catch::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("sinkhorn self-distance is near zero") {
  ail::Rng rng(7);
  auto a = random_cloud(rng, 24, 4);
  const auto c = ail::cost_matrix(a, a);
  std::vector<double> entries(c.data);
  std::nth_element(entries.begin(), entries.begin() + entries.size() / 2, entries.end());
  const double median = entries[entries.size() / 2];

  ail::SinkhornParams params;
  params.eps = 0.01 * median;
  const auto res = ail::sinkhorn(a, a, params);
  const double scale = std::sqrt(median);
  CHECK(res.distance < 0.05 * scale);
  CHECK(res.plan.marginal_violation() < 1e-5);
}

TEST_CASE("sinkhorn tracks the exact solver within 2 percent") {
  ail::Rng rng(8);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    auto a = random_cloud(rng, 32, 4);
    auto b = random_cloud(rng, 32, 4, 3.0);
    const double exact = ail::emd_exact(a, b).distance;
    const auto approx = ail::sinkhorn(a, b);  // default eps = 0.005 * max cost
    const double rel = std::abs(approx.distance - exact) / exact;
    worst = std::max(worst, rel);
    REQUIRE(rel < 0.02);
  }
  INFO("worst relative error " << worst);
  CHECK(worst < 0.02);
}

TEST_CASE("sinkhorn plan marginals satisfy the stopping rule") {
  ail::Rng rng(9);
  auto a = random_cloud(rng, 16, 3);
  auto b = random_cloud(rng, 20, 3, 1.0);
  const auto res = ail::sinkhorn(a, b);
  CHECK(res.converged);
  CHECK(res.marginal_error < 1e-6);
  CHECK(res.plan.marginal_violation() < 1e-5);
  for (double v : res.plan.coupling.data) REQUIRE(v >= 0.0);
}

TEST_CASE("fitness ranks closer clouds higher") {
  ail::Rng rng(10);
  auto demos = random_cloud(rng, 30, 4);
  auto close = random_cloud(rng, 30, 4, 0.2);
  auto far = random_cloud(rng, 30, 4, 2.5);
  const double f_self = ail::ot_fitness(demos, demos);
  const double f_close = ail::ot_fitness(close, demos);
  const double f_far = ail::ot_fitness(far, demos);
  CHECK(f_self == Catch::Approx(0.0).margin(1e-9));
  CHECK(f_close > f_far);
  CHECK(f_self >= f_close);

  // Uneven sizes are equalized by deterministic subsampling.
  auto big = random_cloud(rng, 64, 4, 0.2);
  CHECK(std::isfinite(ail::ot_fitness(big, demos)));

  ail::EmpiricalDist empty;
  empty.points = ail::Matrix(0, 4);
  CHECK_THROWS_AS(ail::ot_fitness(empty, demos), std::invalid_argument);
}
