#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ail/envs.hpp"
#include "ail/matrix.hpp"
#include "ail/net.hpp"
#include "ail/rng.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// On-policy optimization for categorical policies: PPO with the clipped
// surrogate and a single-pass A2C. Rewards arrive already assigned by the
// imitation loop; this module never touches environment rewards.
// ---------------------------------------------------------------------------

struct PPOConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  int epochs = 4;
  int minibatches = 8;
  double lr = 5e-3;
  bool anneal_lr = true;
  int steps_per_env = 128;
  int num_envs = 8;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
};

struct A2CConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double vf_coef = 5.0;
  double ent_coef = 0.01;
  int minibatches = 8;
  double lr = 5e-3;
  bool anneal_lr = true;
  int steps_per_env = 16;
  int num_envs = 64;
  double max_grad_norm = 10.0;
};

struct PolicyState {
  DenseNet actor;   // obs -> action logits
  DenseNet critic;  // obs -> scalar value
  AdamState actor_adam;
  AdamState critic_adam;
};

inline PolicyState init_policy(int obs_dim, int n_actions, int hidden_width, int hidden_layers,
                               double lr, std::uint64_t seed) {
  std::vector<int> actor_w{obs_dim};
  std::vector<int> critic_w{obs_dim};
  for (int i = 0; i < hidden_layers; ++i) {
    actor_w.push_back(hidden_width);
    critic_w.push_back(hidden_width);
  }
  actor_w.push_back(n_actions);
  critic_w.push_back(1);
  PolicyState ps;
  ps.actor = init_net(actor_w, derive_seed(seed, 1));
  ps.critic = init_net(critic_w, derive_seed(seed, 2));
  ps.actor_adam = init_adam(ps.actor, lr);
  ps.critic_adam = init_adam(ps.critic, lr);
  return ps;
}

// log-softmax of one logits row.
inline void log_softmax_row(const double* logits, int n, double* out) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(logits[i] - mx);
  const double lse = mx + std::log(s);
  for (int i = 0; i < n; ++i) out[i] = logits[i] - lse;
}

inline double entropy_from_logp(const double* logp, int n) {
  double h = 0.0;
  for (int i = 0; i < n; ++i) h -= std::exp(logp[i]) * logp[i];
  return h;
}

// Sampling policy callable for rollout(); draws from the categorical
// distribution and reports behavior log-prob and the critic value.
inline auto policy_sampler(const PolicyState& ps) {
  return [&ps](std::span<const double> obs, Rng& rng) {
    const auto logits = forward_one(ps.actor, obs);
    std::vector<double> logp(logits.size());
    log_softmax_row(logits.data(), static_cast<int>(logits.size()), logp.data());
    const double u = rng.uniform();
    double acc = 0.0;
    int action = static_cast<int>(logits.size()) - 1;
    for (std::size_t i = 0; i < logp.size(); ++i) {
      acc += std::exp(logp[i]);
      if (u < acc) {
        action = static_cast<int>(i);
        break;
      }
    }
    ActionSample a;
    a.action = action;
    a.log_prob = logp[action];
    a.value = forward_one(ps.critic, obs)[0];
    return a;
  };
}

// Greedy (argmax) policy callable.
inline auto policy_greedy(const PolicyState& ps) {
  return [&ps](std::span<const double> obs, Rng&) {
    const auto logits = forward_one(ps.actor, obs);
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = static_cast<int>(i);
    ActionSample a;
    a.action = best;
    a.log_prob = 0.0;
    a.value = 0.0;
    return a;
  };
}

// ---------------------------------------------------------------------------
// Generalized advantage estimation (backward recursion).
// ---------------------------------------------------------------------------

struct GAEResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

inline GAEResult gae(std::span<const double> rewards, std::span<const double> values,
                     std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                     double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw std::invalid_argument("gae: sequence lengths differ");
  GAEResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double gae_acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double nonterminal = dones[i] ? 0.0 : 1.0;
    const double next_value = (i + 1 == n) ? bootstrap_value : values[i + 1];
    const double delta = rewards[i] + gamma * nonterminal * next_value - values[i];
    gae_acc = delta + gamma * lambda * nonterminal * gae_acc;
    out.advantages[i] = gae_acc;
    out.returns[i] = gae_acc + values[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Updates.
// ---------------------------------------------------------------------------

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double total_loss = 0.0;
};

struct NonFiniteSignal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace policy_detail {

struct BatchView {
  Matrix states;
  std::vector<int> actions;
  std::vector<double> old_logp;
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline BatchView gather(std::span<const Transition> batch, std::span<const double> advantages,
                        std::span<const double> returns, const std::vector<int>& idx, int begin,
                        int end) {
  BatchView v;
  const int n = end - begin;
  const int d = static_cast<int>(batch[0].state.size());
  v.states = Matrix(n, d);
  v.actions.resize(n);
  v.old_logp.resize(n);
  v.advantages.resize(n);
  v.returns.resize(n);
  for (int i = begin; i < end; ++i) {
    const int src = idx[i];
    const auto& tr = batch[src];
    for (int j = 0; j < d; ++j) v.states(i - begin, j) = tr.state[j];
    v.actions[i - begin] = tr.action;
    v.old_logp[i - begin] = tr.log_prob;
    v.advantages[i - begin] = advantages[src];
    v.returns[i - begin] = returns[src];
  }
  return v;
}

// Mean 0, std 1 with an epsilon guard; an all-zero batch maps to all zeros.
inline std::vector<double> normalize(std::span<const double> a) {
  std::vector<double> out(a.begin(), a.end());
  if (out.empty()) return out;
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= out.size();
  double var = 0.0;
  for (double v : out) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / out.size());
  for (double& v : out) v = (v - mean) / (std_dev + 1e-8);
  return out;
}

inline void joint_clip(GradBundle& a, GradBundle& b, double max_norm) {
  const double na = global_grad_norm(a);
  const double nb = global_grad_norm(b);
  const double norm = std::sqrt(na * na + nb * nb);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& w : a.dweights)
    for (double& v : w.data) v *= s;
  for (auto& bb : a.dbiases)
    for (double& v : bb) v *= s;
  for (auto& w : b.dweights)
    for (double& v : w.data) v *= s;
  for (auto& bb : b.dbiases)
    for (double& v : bb) v *= s;
}

struct MinibatchGrads {
  GradBundle actor;
  GradBundle critic;
  UpdateStats stats;
};

// Gradients of the PPO (or, with clip disabled, vanilla PG) objective on one
// minibatch. When `clip` <= 0 the unclipped advantage-weighted log-prob loss
// is used, which is the A2C path.
inline MinibatchGrads policy_grads(const PolicyState& ps, const BatchView& v, double clip,
                                   double vf_coef, double ent_coef) {
  const int n = v.states.rows;
  const int n_actions = ps.actor.output_dim();
  MinibatchGrads out;

  ForwardCache actor_cache;
  const Matrix logits = forward(ps.actor, v.states, &actor_cache);
  ForwardCache critic_cache;
  const Matrix values = forward(ps.critic, v.states, &critic_cache);

  Matrix actor_og(n, n_actions);
  Matrix critic_og(n, 1);
  std::vector<double> logp(n_actions);

  for (int i = 0; i < n; ++i) {
    log_softmax_row(logits.row(i), n_actions, logp.data());
    const int a = v.actions[i];
    const double adv = v.advantages[i];
    const double ent = entropy_from_logp(logp.data(), n_actions);
    out.stats.entropy += ent / n;

    double pg_coeff;  // d(policy objective)/d logpi(a), per sample
    if (clip > 0.0) {
      const double ratio = std::exp(logp[a] - v.old_logp[i]);
      const double clipped = std::min(std::max(ratio, 1.0 - clip), 1.0 + clip);
      const double unclipped_obj = ratio * adv;
      const double clipped_obj = clipped * adv;
      if (std::abs(ratio - 1.0) > clip) out.stats.clip_fraction += 1.0 / n;
      // Subgradient of min(unclipped, clipped): flows through the ratio
      // unless the clipped branch is strictly smaller and active.
      if (unclipped_obj <= clipped_obj)
        pg_coeff = ratio * adv;
      else
        pg_coeff = (ratio >= 1.0 - clip && ratio <= 1.0 + clip) ? ratio * adv : 0.0;
      out.stats.policy_loss += -std::min(unclipped_obj, clipped_obj) / n;
    } else {
      pg_coeff = adv;
      out.stats.policy_loss += -logp[a] * adv / n;
    }

    for (int k = 0; k < n_actions; ++k) {
      const double p = std::exp(logp[k]);
      const double indicator = (k == a) ? 1.0 : 0.0;
      // -(pg objective) + entropy bonus, both in gradient form:
      actor_og(i, k) = (-pg_coeff * (indicator - p) + ent_coef * p * (logp[k] + ent)) / n;
    }

    const double verr = values(i, 0) - v.returns[i];
    out.stats.value_loss += vf_coef * verr * verr / n;
    critic_og(i, 0) = 2.0 * vf_coef * verr / n;
  }
  out.stats.total_loss =
      out.stats.policy_loss + out.stats.value_loss - ent_coef * out.stats.entropy;
  if (!std::isfinite(out.stats.total_loss))
    throw NonFiniteSignal("policy update: non-finite loss (policy=" +
                          std::to_string(out.stats.policy_loss) +
                          ", value=" + std::to_string(out.stats.value_loss) + ")");

  out.actor = backward(ps.actor, actor_cache, actor_og);
  out.critic = backward(ps.critic, critic_cache, critic_og);
  return out;
}

}  // namespace policy_detail

// PPO update: epochs x minibatches Adam steps on the clipped surrogate plus
// value and entropy terms. Advantages are normalized over the whole batch
// (all-zero batches stay zero). lr_scale implements linear annealing.
inline UpdateStats ppo_update(PolicyState& ps, std::span<const Transition> batch,
                              std::span<const double> advantages, std::span<const double> returns,
                              const PPOConfig& cfg, Rng& rng, double lr_scale = 1.0) {
  if (batch.empty()) throw std::invalid_argument("ppo_update: empty batch");
  const int n = static_cast<int>(batch.size());
  const std::vector<double> adv =
      cfg.normalize_advantages ? policy_detail::normalize(advantages)
                               : std::vector<double>(advantages.begin(), advantages.end());

  ps.actor_adam.lr = cfg.lr * lr_scale;
  ps.critic_adam.lr = cfg.lr * lr_scale;

  UpdateStats acc;
  int steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto idx = shuffled_indices(n, rng);
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      const int b0 = static_cast<int>(static_cast<std::int64_t>(mb) * n / cfg.minibatches);
      const int b1 = static_cast<int>(static_cast<std::int64_t>(mb + 1) * n / cfg.minibatches);
      if (b1 == b0) continue;
      const auto view = policy_detail::gather(batch, adv, returns, idx, b0, b1);
      auto g = policy_detail::policy_grads(ps, view, cfg.clip, cfg.vf_coef, cfg.ent_coef);
      policy_detail::joint_clip(g.actor, g.critic, cfg.max_grad_norm);
      adam_step(ps.actor, ps.actor_adam, std::move(g.actor), 1e18);
      adam_step(ps.critic, ps.critic_adam, std::move(g.critic), 1e18);
      acc.policy_loss += g.stats.policy_loss;
      acc.value_loss += g.stats.value_loss;
      acc.entropy += g.stats.entropy;
      acc.clip_fraction += g.stats.clip_fraction;
      acc.total_loss += g.stats.total_loss;
      ++steps;
    }
  }
  if (steps > 0) {
    acc.policy_loss /= steps;
    acc.value_loss /= steps;
    acc.entropy /= steps;
    acc.clip_fraction /= steps;
    acc.total_loss /= steps;
  }
  return acc;
}

// A2C update: one pass of advantage-weighted log-prob loss + value loss +
// entropy bonus over the minibatches. Advantages are used raw.
inline UpdateStats a2c_update(PolicyState& ps, std::span<const Transition> batch,
                              std::span<const double> advantages, std::span<const double> returns,
                              const A2CConfig& cfg, Rng& rng, double lr_scale = 1.0) {
  if (batch.empty()) throw std::invalid_argument("a2c_update: empty batch");
  const int n = static_cast<int>(batch.size());
  ps.actor_adam.lr = cfg.lr * lr_scale;
  ps.critic_adam.lr = cfg.lr * lr_scale;

  UpdateStats acc;
  int steps = 0;
  const auto idx = shuffled_indices(n, rng);
  for (int mb = 0; mb < cfg.minibatches; ++mb) {
    const int b0 = static_cast<int>(static_cast<std::int64_t>(mb) * n / cfg.minibatches);
    const int b1 = static_cast<int>(static_cast<std::int64_t>(mb + 1) * n / cfg.minibatches);
    if (b1 == b0) continue;
    const auto view = policy_detail::gather(batch, advantages, returns, idx, b0, b1);
    auto g = policy_detail::policy_grads(ps, view, /*clip=*/0.0, cfg.vf_coef, cfg.ent_coef);
    policy_detail::joint_clip(g.actor, g.critic, cfg.max_grad_norm);
    adam_step(ps.actor, ps.actor_adam, std::move(g.actor), 1e18);
    adam_step(ps.critic, ps.critic_adam, std::move(g.critic), 1e18);
    acc.policy_loss += g.stats.policy_loss;
    acc.value_loss += g.stats.value_loss;
    acc.entropy += g.stats.entropy;
    acc.total_loss += g.stats.total_loss;
    ++steps;
  }
  if (steps > 0) {
    acc.policy_loss /= steps;
    acc.value_loss /= steps;
    acc.entropy /= steps;
    acc.total_loss /= steps;
  }
  return acc;
}

// Mean categorical entropy of pi(.|s) over a state batch, in nats.
inline double policy_entropy(const PolicyState& ps, const Matrix& states) {
  if (states.rows == 0) throw std::invalid_argument("policy_entropy: empty state batch");
  const Matrix logits = forward(ps.actor, states);
  const int n_actions = logits.cols;
  std::vector<double> logp(n_actions);
  double h = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    log_softmax_row(logits.row(i), n_actions, logp.data());
    h += entropy_from_logp(logp.data(), n_actions);
  }
  return h / logits.rows;
}

}  // namespace ail
