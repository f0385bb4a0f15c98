#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ail/matrix.hpp"
#include "ail/net.hpp"
#include "ail/ra.hpp"
#include "ail/rng.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// Binary classifier over (s, a) feature vectors. Its logit estimates the log
// density ratio of expert vs. policy visitation; training maximizes the
// binary cross-entropy objective (expert = positive class), optionally
// regularized by a gradient penalty on expert/policy interpolates.
// ---------------------------------------------------------------------------

struct DiscConfig {
  int hidden_width = 64;
  int hidden_layers = 1;
  double lr = 3e-4;
  double gp_weight = 0.1;
  int epochs = 1;
  int minibatches = 8;
  double max_grad_norm = 1e9;      // effectively unclipped by default
  bool zero_centered_gp = false;   // ablation: ||grad||^2 instead of (||grad||-1)^2
};

struct DiscState {
  DenseNet net;  // input = obs dim + action count, output = 1 logit
  AdamState adam;
  DiscConfig cfg;
};

inline DiscState init_disc(int feature_dim, const DiscConfig& cfg, std::uint64_t seed) {
  if (cfg.gp_weight < 0.0) throw std::invalid_argument("init_disc: gp_weight must be >= 0");
  std::vector<int> widths;
  widths.push_back(feature_dim);
  for (int i = 0; i < cfg.hidden_layers; ++i) widths.push_back(cfg.hidden_width);
  widths.push_back(1);
  DiscState d;
  d.net = init_net(widths, seed);
  d.adam = init_adam(d.net, cfg.lr);
  d.cfg = cfg;
  return d;
}

inline std::vector<double> disc_logits(const DiscState& disc, const Matrix& pairs) {
  if (pairs.rows == 0) return {};
  const Matrix out = forward(disc.net, pairs);
  std::vector<double> l(out.rows);
  for (int i = 0; i < out.rows; ++i) l[i] = out(i, 0);
  return l;
}

struct LossGrads {
  double loss = 0.0;
  GradBundle grads;
};

// Mean-of-means negated BCE:
//   L = 0.5 * ( mean_E softplus(-l) + mean_P softplus(l) )
// Descending L ascends the likelihood objective; each side's mean carries
// equal weight regardless of buffer sizes.
inline LossGrads bce_grads(const DiscState& disc, const Matrix& expert_batch,
                           const Matrix& policy_batch) {
  if (expert_batch.rows == 0 || policy_batch.rows == 0)
    throw std::invalid_argument("bce_grads: both batches must be nonempty");

  LossGrads out;
  out.grads = GradBundle::zeros_like(disc.net, expert_batch.rows);

  ForwardCache cache;
  Matrix lo = forward(disc.net, expert_batch, &cache);
  Matrix og(expert_batch.rows, 1);
  for (int i = 0; i < expert_batch.rows; ++i) {
    const double l = lo(i, 0);
    out.loss += 0.5 * stable_softplus(-l) / expert_batch.rows;
    og(i, 0) = 0.5 * (stable_sigmoid(l) - 1.0) / expert_batch.rows;
  }
  out.grads = backward(disc.net, cache, og);

  Matrix lp = forward(disc.net, policy_batch, &cache);
  Matrix ogp(policy_batch.rows, 1);
  for (int i = 0; i < policy_batch.rows; ++i) {
    const double l = lp(i, 0);
    out.loss += 0.5 * stable_softplus(l) / policy_batch.rows;
    ogp(i, 0) = 0.5 * stable_sigmoid(l) / policy_batch.rows;
  }
  out.grads.add_scaled(backward(disc.net, cache, ogp), 1.0);
  return out;
}

// Uniform per-pair mixing of expert and policy features; batches are
// truncated to the smaller size.
inline Matrix interpolate_pairs(const Matrix& expert_batch, const Matrix& policy_batch, Rng& rng) {
  const int n = std::min(expert_batch.rows, policy_batch.rows);
  Matrix pts(n, expert_batch.cols);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    for (int j = 0; j < expert_batch.cols; ++j)
      pts(i, j) = u * expert_batch(i, j) + (1.0 - u) * policy_batch(i, j);
  }
  return pts;
}

// Penalty mean_i (||grad_x l(x_i)|| - 1)^2 at the given points, with exact
// parameter gradients. Relu masks are piecewise constant, so the input
// gradient is a product of masked weight matrices; differentiating the
// penalty through that product gives the recursion below (bias gradients
// vanish identically).
inline LossGrads gradient_penalty_at(const DiscState& disc, const Matrix& points,
                                     bool zero_centered = false) {
  const int n = points.rows;
  const int layers = disc.net.num_layers();
  LossGrads out;
  out.grads = GradBundle::zeros_like(disc.net, n);
  if (n == 0) return out;

  ForwardCache cache;
  forward(disc.net, points, &cache);

  // Per-sample backward chain: delta[L-1] = 1, delta[k-1] = relu'(z_k) W_k^T delta[k].
  std::vector<Matrix> delta(layers);  // delta[k]: n x widths[k+1]
  delta[layers - 1] = Matrix(n, 1, 1.0);
  for (int k = layers - 1; k >= 1; --k) {
    const Matrix& w = disc.net.weights[k];
    Matrix d(n, w.cols);
    for (int i = 0; i < n; ++i) {
      const double* di = delta[k].row(i);
      double* out_row = d.row(i);
      for (int o = 0; o < w.rows; ++o) {
        const double dv = di[o];
        if (dv == 0.0) continue;
        const double* wo = w.row(o);
        for (int j = 0; j < w.cols; ++j) out_row[j] += dv * wo[j];
      }
      const double* z = cache.pre[k - 1].row(i);
      for (int j = 0; j < w.cols; ++j)
        if (z[j] <= 0.0) out_row[j] = 0.0;
    }
    delta[k - 1] = std::move(d);
  }

  // Input gradient g_i = W_1^T delta[0]_i and the penalty value.
  const Matrix& w1 = disc.net.weights[0];
  Matrix g(n, w1.cols);
  for (int i = 0; i < n; ++i) {
    const double* di = delta[0].row(i);
    double* gi = g.row(i);
    for (int o = 0; o < w1.rows; ++o) {
      const double dv = di[o];
      if (dv == 0.0) continue;
      const double* wo = w1.row(o);
      for (int j = 0; j < w1.cols; ++j) gi[j] += dv * wo[j];
    }
  }

  Matrix u(n, w1.cols);  // dP/dg per sample
  for (int i = 0; i < n; ++i) {
    double norm2 = 0.0;
    const double* gi = g.row(i);
    for (int j = 0; j < w1.cols; ++j) norm2 += gi[j] * gi[j];
    const double norm = std::sqrt(norm2);
    double* ui = u.row(i);
    if (zero_centered) {
      out.loss += norm2 / n;
      for (int j = 0; j < w1.cols; ++j) ui[j] = 2.0 * gi[j] / n;
    } else {
      const double dev = norm - 1.0;
      out.loss += dev * dev / n;
      if (norm > 1e-12) {
        const double s = 2.0 * dev / (norm * n);
        for (int j = 0; j < w1.cols; ++j) ui[j] = s * gi[j];
      }
      // norm == 0: keep the zero subgradient
    }
  }

  // Forward adjoint chain: m_0 = u, m_k = relu'(z_k) (W_k m_{k-1});
  // dP/dW_k = sum_i delta[k-1]_i m_{k-1,i}^T.
  Matrix m = std::move(u);
  for (int k = 0; k < layers; ++k) {
    const Matrix& w = disc.net.weights[k];
    Matrix& dw = out.grads.dweights[k];
    for (int i = 0; i < n; ++i) {
      const double* di = delta[k].row(i);
      const double* mi = m.row(i);
      for (int o = 0; o < w.rows; ++o) {
        const double dv = di[o];
        if (dv == 0.0) continue;
        double* dwo = dw.row(o);
        for (int j = 0; j < w.cols; ++j) dwo[j] += dv * mi[j];
      }
    }
    if (k + 1 < layers) {
      Matrix next(n, w.rows);
      for (int i = 0; i < n; ++i) {
        const double* mi = m.row(i);
        double* ni = next.row(i);
        for (int o = 0; o < w.rows; ++o) ni[o] = dot(w.row(o), mi, w.cols);
        const double* z = cache.pre[k].row(i);
        for (int o = 0; o < w.rows; ++o)
          if (z[o] <= 0.0) ni[o] = 0.0;
      }
      m = std::move(next);
    }
  }
  return out;
}

inline LossGrads gradient_penalty(const DiscState& disc, const Matrix& expert_batch,
                                  const Matrix& policy_batch, Rng& rng) {
  return gradient_penalty_at(disc, interpolate_pairs(expert_batch, policy_batch, rng),
                             disc.cfg.zero_centered_gp);
}

struct DiscTrainStats {
  double mean_loss = 0.0;
  double mean_penalty = 0.0;
  int steps = 0;
};

namespace disc_detail {

inline Matrix take_rows(const Matrix& src, const std::vector<int>& idx, int begin, int end) {
  Matrix out(end - begin, src.cols);
  for (int i = begin; i < end; ++i)
    for (int j = 0; j < src.cols; ++j) out(i - begin, j) = src(idx[i], j);
  return out;
}

}  // namespace disc_detail

// epochs x minibatches Adam steps on negated BCE + gp_weight * penalty.
// Policy samples are the current iteration's rollout only. When gp_weight is
// zero the penalty path is skipped entirely (the rng is not consumed).
inline DiscTrainStats train_disc(DiscState& disc, const Matrix& expert_set,
                                 const Matrix& policy_set, int epochs, int minibatches, Rng& rng) {
  if (epochs < 0 || minibatches < 1)
    throw std::invalid_argument("train_disc: bad epochs/minibatches");
  DiscTrainStats stats;
  if (epochs == 0) return stats;
  if (expert_set.rows == 0 || policy_set.rows == 0)
    throw std::invalid_argument("train_disc: both sets must be nonempty");

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto eidx = shuffled_indices(expert_set.rows, rng);
    const auto pidx = shuffled_indices(policy_set.rows, rng);
    for (int mb = 0; mb < minibatches; ++mb) {
      const int e0 = static_cast<int>(static_cast<std::int64_t>(mb) * expert_set.rows / minibatches);
      const int e1 =
          static_cast<int>(static_cast<std::int64_t>(mb + 1) * expert_set.rows / minibatches);
      const int p0 = static_cast<int>(static_cast<std::int64_t>(mb) * policy_set.rows / minibatches);
      const int p1 =
          static_cast<int>(static_cast<std::int64_t>(mb + 1) * policy_set.rows / minibatches);
      if (e1 == e0 || p1 == p0) continue;
      const Matrix ebatch = disc_detail::take_rows(expert_set, eidx, e0, e1);
      const Matrix pbatch = disc_detail::take_rows(policy_set, pidx, p0, p1);

      LossGrads lg = bce_grads(disc, ebatch, pbatch);
      if (disc.cfg.gp_weight != 0.0) {
        const LossGrads pen = gradient_penalty(disc, ebatch, pbatch, rng);
        lg.loss += disc.cfg.gp_weight * pen.loss;
        lg.grads.add_scaled(pen.grads, disc.cfg.gp_weight);
        stats.mean_penalty += pen.loss;
      }
      adam_step(disc.net, disc.adam, std::move(lg.grads), disc.cfg.max_grad_norm);
      stats.mean_loss += lg.loss;
      ++stats.steps;
    }
  }
  if (stats.steps > 0) {
    stats.mean_loss /= stats.steps;
    stats.mean_penalty /= stats.steps;
  }
  return stats;
}

}  // namespace ail
