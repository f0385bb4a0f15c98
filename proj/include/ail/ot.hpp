#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ail/matrix.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// Wasserstein distance between empirical state-action distributions.
// Ground cost is squared Euclidean on the raw feature vectors; distances are
// reported in the W2 convention (square root of the transport cost).
// Two solvers: an exact min-cost-flow for small supports (the oracle) and
// log-domain Sinkhorn for larger instances. Both are deterministic.
// ---------------------------------------------------------------------------

struct EmpiricalDist {
  Matrix points;  // n x d, uniform weights 1/n

  int n() const { return points.rows; }
  int dim() const { return points.cols; }
};

struct TransportPlan {
  Matrix coupling;  // n x m

  // L1 violation of the uniform marginals.
  double marginal_violation() const {
    const int n = coupling.rows, m = coupling.cols;
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += coupling(i, j);
      err += std::abs(s - 1.0 / n);
    }
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += coupling(i, j);
      err += std::abs(s - 1.0 / m);
    }
    return err;
  }
};

struct OTResult {
  double distance = 0.0;  // W2
  TransportPlan plan;
  bool converged = true;
  double marginal_error = 0.0;
  int iterations = 0;
};

inline constexpr std::int64_t kExactSizeLimit = 65536;  // max n*m for emd_exact

inline Matrix cost_matrix(const EmpiricalDist& a, const EmpiricalDist& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("cost_matrix: dimension mismatch " + std::to_string(a.dim()) +
                                " vs " + std::to_string(b.dim()));
  Matrix c(a.n(), b.n());
  for (int i = 0; i < a.n(); ++i) {
    const double* x = a.points.row(i);
    for (int j = 0; j < b.n(); ++j) {
      const double* y = b.points.row(j);
      double s = 0.0;
      for (int k = 0; k < a.dim(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
      }
      c(i, j) = s;
    }
  }
  return c;
}

// Exact optimal transport via successive shortest paths with node potentials
// (min-cost flow on the complete bipartite graph). Uniform weights scale to
// integer supplies of m/gcd per source and n/gcd per sink, so the solve is
// exact up to floating-point cost arithmetic.
inline OTResult emd_exact(const EmpiricalDist& a, const EmpiricalDist& b) {
  const int n = a.n(), m = b.n();
  if (static_cast<std::int64_t>(n) * m > kExactSizeLimit)
    throw std::invalid_argument("emd_exact: support sizes " + std::to_string(n) + "x" +
                                std::to_string(m) + " exceed the exact-solver limit");
  const Matrix c = cost_matrix(a, b);
  const std::int64_t g = std::gcd(n, m);
  const std::int64_t unit_supply = m / g;   // per source
  const std::int64_t unit_demand = n / g;   // per sink
  const std::int64_t total = static_cast<std::int64_t>(n) * m / g;

  std::vector<std::int64_t> supply(n, unit_supply), demand(m, unit_demand);
  Matrix flow(n, m);  // integer-valued, stored as doubles
  std::vector<double> pot(n + m, 0.0);
  const double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> dist(n + m);
  std::vector<int> prev(n + m);
  std::vector<char> done(n + m);

  std::int64_t shipped = 0;
  while (shipped < total) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < n; ++i)
      if (supply[i] > 0) dist[i] = 0.0;

    int target = -1;
    for (int rounds = 0; rounds < n + m; ++rounds) {
      int u = -1;
      double best = kInf;
      for (int v = 0; v < n + m; ++v)
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u < 0) break;
      done[u] = 1;
      if (u >= n && demand[u - n] > 0) {
        target = u - n;
        break;  // nearest sink with spare demand is final
      }
      if (u < n) {
        const double* cu = c.row(u);
        const double base = dist[u] + pot[u];
        for (int j = 0; j < m; ++j) {
          const double rc = std::max(cu[j] + base - pot[n + j], dist[u]);
          if (rc < dist[n + j]) {
            dist[n + j] = rc;
            prev[n + j] = u;
          }
        }
      } else {
        const int j = u - n;
        const double base = dist[u] + pot[u];
        for (int i = 0; i < n; ++i) {
          if (flow(i, j) <= 0.0) continue;
          const double rc = std::max(base - c(i, j) - pot[i], dist[u]);
          if (rc < dist[i]) {
            dist[i] = rc;
            prev[i] = u;
          }
        }
      }
    }
    if (target < 0) throw std::runtime_error("emd_exact: no augmenting path (internal error)");

    const double dt = dist[n + target];
    for (int v = 0; v < n + m; ++v) pot[v] += std::min(dist[v], dt);

    // Trace the path to find the bottleneck, then push.
    std::int64_t bottleneck = demand[target];
    int v = n + target;
    while (prev[v] != -1) {
      const int u = prev[v];
      if (v < n) bottleneck = std::min(bottleneck, static_cast<std::int64_t>(flow(v, u - n)));
      v = u;
    }
    bottleneck = std::min(bottleneck, supply[v]);

    v = n + target;
    while (prev[v] != -1) {
      const int u = prev[v];
      if (v >= n)
        flow(u, v - n) += static_cast<double>(bottleneck);
      else
        flow(v, u - n) -= static_cast<double>(bottleneck);
      v = u;
    }
    supply[v] -= bottleneck;
    demand[target] -= bottleneck;
    shipped += bottleneck;
  }

  OTResult out;
  out.plan.coupling = Matrix(n, m);
  double cost = 0.0;
  const double scale = static_cast<double>(g) / (static_cast<double>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double p = flow(i, j) * scale;
      out.plan.coupling(i, j) = p;
      cost += p * c(i, j);
    }
  out.distance = std::sqrt(std::max(cost, 0.0));
  out.marginal_error = out.plan.marginal_violation();
  return out;
}

struct SinkhornParams {
  double eps = 0.0;          // 0 means auto: eps_factor * max cost entry
  double eps_factor = 0.005;
  int max_iters = 20000;
  double tol = 1e-7;         // L1 marginal error target
};

// Entropic OT in the log domain with an epsilon-scaling warm start.
// Returns the transport cost of the entropic plan (no debiasing).
inline OTResult sinkhorn(const EmpiricalDist& a, const EmpiricalDist& b,
                         const SinkhornParams& params = {}) {
  const int n = a.n(), m = b.n();
  const Matrix c = cost_matrix(a, b);
  double cmax = 0.0;
  for (double v : c.data) cmax = std::max(cmax, v);
  double eps_target = params.eps > 0.0 ? params.eps : params.eps_factor * cmax;
  if (eps_target <= 0.0) eps_target = 1e-9;  // degenerate all-zero cost

  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  std::vector<double> f(n, 0.0), gpot(m, 0.0);

  auto lse_row = [&](int i, double eps) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, (gpot[j] - c(i, j)) / eps);
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += std::exp((gpot[j] - c(i, j)) / eps - mx);
    return mx + std::log(s);
  };
  auto lse_col = [&](int j, double eps) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mx = std::max(mx, (f[i] - c(i, j)) / eps);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp((f[i] - c(i, j)) / eps - mx);
    return mx + std::log(s);
  };

  auto marginal_error = [&](double eps) {
    // After a g-update the column marginals are exact; measure rows.
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += std::exp((f[i] + gpot[j] - c(i, j)) / eps);
      err += std::abs(s - 1.0 / n);
    }
    return err;
  };

  OTResult out;
  int used = 0;
  double err = std::numeric_limits<double>::infinity();
  const double schedule[] = {8.0, 4.0, 2.0, 1.0};
  for (double level : schedule) {
    const double eps = eps_target * level;
    const bool last = level == 1.0;
    const int budget = last ? params.max_iters - used : std::min(200, params.max_iters / 8);
    for (int it = 0; it < budget; ++it) {
      for (int i = 0; i < n; ++i) f[i] = eps * (log_a - lse_row(i, eps));
      for (int j = 0; j < m; ++j) gpot[j] = eps * (log_b - lse_col(j, eps));
      ++used;
      if (last && it % 10 == 9) {
        err = marginal_error(eps);
        if (err < params.tol) break;
      }
    }
  }
  err = marginal_error(eps_target);

  out.plan.coupling = Matrix(n, m);
  double cost = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double p = std::exp((f[i] + gpot[j] - c(i, j)) / eps_target);
      out.plan.coupling(i, j) = p;
      cost += p * c(i, j);
    }
  out.distance = std::sqrt(std::max(cost, 0.0));
  out.marginal_error = err;
  out.converged = err < params.tol;
  out.iterations = used;
  return out;
}

// Deterministic evenly spaced subsample down to k points.
inline EmpiricalDist subsample_evenly(const EmpiricalDist& d, int k) {
  if (d.n() <= k) return d;
  EmpiricalDist out;
  out.points = Matrix(k, d.dim());
  for (int i = 0; i < k; ++i) {
    const int src = static_cast<int>(static_cast<std::int64_t>(i) * d.n() / k);
    for (int j = 0; j < d.dim(); ++j) out.points(i, j) = d.points(src, j);
  }
  return out;
}

// W2 distance with the production solver choice: exact when the instance is
// small enough, Sinkhorn otherwise. Sample counts are equalized first by
// evenly spaced subsampling of the larger set.
inline double wasserstein(const EmpiricalDist& a, const EmpiricalDist& b) {
  const int k = std::min(a.n(), b.n());
  const EmpiricalDist as = subsample_evenly(a, k);
  const EmpiricalDist bs = subsample_evenly(b, k);
  if (static_cast<std::int64_t>(k) * k <= kExactSizeLimit) return emd_exact(as, bs).distance;
  return sinkhorn(as, bs).distance;
}

// Fitness of a candidate: negative W2 against the demonstrations, so that
// higher is better.
inline double ot_fitness(const EmpiricalDist& policy_samples, const EmpiricalDist& demo_samples) {
  if (policy_samples.n() < 1 || demo_samples.n() < 1)
    throw std::invalid_argument("ot_fitness: empty distribution");
  return -wasserstein(policy_samples, demo_samples);
}

}  // namespace ail
