#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ail/discriminator.hpp"
#include "ail/envs.hpp"
#include "ail/matrix.hpp"
#include "ail/ot.hpp"
#include "ail/policy.hpp"
#include "ail/ra.hpp"
#include "ail/rng.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// The adversarial imitation loop: per iteration, roll out the current policy,
// update the discriminator on demos vs. the fresh rollout, assign rewards to
// the rollout from the updated discriminator's logits through the reward-
// assignment function, then improve the policy on those rewards. Environment
// rewards are recorded for reporting only; the learner never reads them.
// After the final iteration the policy's pooled (s, a) samples are scored by
// the Wasserstein distance to the demonstration pairs.
// ---------------------------------------------------------------------------

struct AILConfig {
  AnyEnv env = GridWorld{};
  RAFunction ra = named_ra("gail");
  std::variant<PPOConfig, A2CConfig> optim = PPOConfig{};
  DiscConfig disc;
  int iterations = 100;               // T
  int eval_episodes = 16;
  int eval_subsample = 256;           // cap on pooled eval (s,a) points
  std::optional<bool> fixed_length;   // override the env default
  int policy_hidden_width = 64;
  int policy_hidden_layers = 2;
};

struct IterationMetrics {
  int iteration = 0;
  std::int64_t env_steps = 0;
  double mean_return = 0.0;      // env-reward returns of episodes finished this iteration
  double entropy = 0.0;
  double disc_loss = 0.0;
  double reward_mean = 0.0;      // assigned rewards
  double reward_min = 0.0;
  double reward_max = 0.0;
  double logit_mean = 0.0;
  double logit_std = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

struct AILResult {
  PolicyState policy;
  DiscState disc;
  double wasserstein = 0.0;
  std::vector<IterationMetrics> metrics;
  std::vector<double> final_logit_snapshot;  // logits over the eval rollout pairs
  double final_mean_return = 0.0;            // env-reward eval returns
  double final_success_rate = 0.0;
  double final_entropy = 0.0;
};

struct TrainingAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// (ret - random) / (expert - random); min-max scaling between the random and
// expert baselines. May leave [0, 1].
inline double normalized_return(double ret, double random_ret, double expert_ret) {
  if (expert_ret == random_ret)
    throw std::invalid_argument("normalized_return: degenerate baselines (expert == random)");
  return (ret - random_ret) / (expert_ret - random_ret);
}

inline std::vector<double> assign_rewards(const RAFunction& ra, std::span<const double> logits,
                                          GuardStats* gs = nullptr) {
  return eval_ra(ra, logits, gs);
}

namespace ail_detail {

// Persistent vectorized rollout streams; env states survive across
// iterations so long-horizon behavior is observable within short segments.
template <typename Env>
class VecRunner {
 public:
  VecRunner(const Env& env, int num_envs, std::uint64_t seed) : env_(env) {
    for (int e = 0; e < num_envs; ++e) {
      rngs_.emplace_back(derive_seed(seed, 1000 + e));
      states_.push_back(env_.reset(rngs_.back()));
      obs_.push_back(env_.obs(states_.back(), rngs_.back()));
      episode_returns_.push_back(0.0);
    }
  }

  struct Segment {
    std::vector<Transition> steps;          // env-major: env0 steps, env1 steps, ...
    std::vector<std::vector<double>> bootstrap_obs;  // per env
    std::vector<double> finished_returns;   // env-reward returns of episodes completed
    int steps_per_env = 0;
  };

  template <typename Policy>
  Segment collect(Policy&& policy, int steps_per_env) {
    Segment seg;
    seg.steps_per_env = steps_per_env;
    seg.steps.reserve(static_cast<std::size_t>(steps_per_env) * rngs_.size());
    for (std::size_t e = 0; e < rngs_.size(); ++e) {
      Rng& rng = rngs_[e];
      for (int t = 0; t < steps_per_env; ++t) {
        const ActionSample a = policy(std::span<const double>(obs_[e]), rng);
        const auto sr = env_.step(states_[e], a.action, rng);
        Transition tr;
        tr.state = obs_[e];
        tr.action = a.action;
        tr.env_reward = sr.reward;
        tr.done = sr.done;
        tr.log_prob = a.log_prob;
        tr.value = a.value;
        seg.steps.push_back(std::move(tr));
        episode_returns_[e] += sr.reward;
        if (sr.done) {
          seg.finished_returns.push_back(episode_returns_[e]);
          episode_returns_[e] = 0.0;
          states_[e] = env_.reset(rng);
        } else {
          states_[e] = sr.next;
        }
        obs_[e] = env_.obs(states_[e], rng);
      }
      seg.bootstrap_obs.push_back(obs_[e]);
    }
    return seg;
  }

 private:
  Env env_;
  std::vector<Rng> rngs_;
  std::vector<typename Env::State> states_;
  std::vector<std::vector<double>> obs_;
  std::vector<double> episode_returns_;
};

inline Matrix features_of(std::span<const Transition> steps, int n_actions) {
  const int d = static_cast<int>(steps[0].state.size()) + n_actions;
  Matrix f(static_cast<int>(steps.size()), d);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto row = sa_features(steps[i].state, steps[i].action, n_actions);
    std::copy(row.begin(), row.end(), f.row(static_cast<int>(i)));
  }
  return f;
}

inline Matrix demo_features(const DemoSet& demos, int n_actions) {
  const int d = static_cast<int>(demos.states[0].size()) + n_actions;
  Matrix f(static_cast<int>(demos.size()), d);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto row = sa_features(demos.states[i], demos.actions[i], n_actions);
    std::copy(row.begin(), row.end(), f.row(static_cast<int>(i)));
  }
  return f;
}

template <typename Env>
AILResult run_fail_impl(Env env, const AILConfig& cfg, const DemoSet& demos, std::uint64_t seed) {
  if (cfg.iterations < 1) throw std::invalid_argument("run_fail: iterations must be >= 1");
  if (demos.size() == 0) throw std::invalid_argument("run_fail: empty demo set");
  if (cfg.fixed_length) env.fixed_length = *cfg.fixed_length;

  const int n_actions = env.action_count();
  const int obs_dim = env.obs_dim();
  if (static_cast<int>(demos.states[0].size()) != obs_dim)
    throw std::invalid_argument("run_fail: demo feature dim " +
                                std::to_string(demos.states[0].size()) +
                                " does not match env obs dim " + std::to_string(obs_dim));

  const bool use_ppo = std::holds_alternative<PPOConfig>(cfg.optim);
  const PPOConfig ppo = use_ppo ? std::get<PPOConfig>(cfg.optim) : PPOConfig{};
  const A2CConfig a2c = use_ppo ? A2CConfig{} : std::get<A2CConfig>(cfg.optim);
  const int num_envs = use_ppo ? ppo.num_envs : a2c.num_envs;
  const int steps_per_env = use_ppo ? ppo.steps_per_env : a2c.steps_per_env;
  const double lr = use_ppo ? ppo.lr : a2c.lr;
  const bool anneal = use_ppo ? ppo.anneal_lr : a2c.anneal_lr;
  const double gamma = use_ppo ? ppo.gamma : a2c.gamma;
  const double lambda = use_ppo ? ppo.gae_lambda : a2c.gae_lambda;

  AILResult result;
  result.policy = init_policy(obs_dim, n_actions, cfg.policy_hidden_width,
                              cfg.policy_hidden_layers, lr, derive_seed(seed, 1));
  result.disc = init_disc(obs_dim + n_actions, cfg.disc, derive_seed(seed, 2));

  const Matrix expert_features = demo_features(demos, n_actions);
  VecRunner<Env> runner(env, num_envs, derive_seed(seed, 3));
  Rng train_rng(derive_seed(seed, 4));

  double last_return = 0.0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    // 1. rollout with the current policy
    auto segment = runner.collect(policy_sampler(result.policy), steps_per_env);

    // 2. discriminator update on demos vs. this rollout
    const Matrix policy_features = features_of(segment.steps, n_actions);
    const auto disc_stats = train_disc(result.disc, expert_features, policy_features,
                                       cfg.disc.epochs, cfg.disc.minibatches, train_rng);

    // 3. reward assignment from the updated discriminator
    const std::vector<double> logits = disc_logits(result.disc, policy_features);
    const std::vector<double> rewards = assign_rewards(cfg.ra, logits);
    for (double r : rewards)
      if (!std::isfinite(r))
        throw TrainingAborted("run_fail: non-finite assigned reward at iteration " +
                              std::to_string(iter));

    // 4. advantage estimation per env stream
    const int n = static_cast<int>(segment.steps.size());
    std::vector<double> advantages(n), returns(n);
    for (int e = 0; e < num_envs; ++e) {
      const int b = e * steps_per_env;
      std::vector<double> seg_r(rewards.begin() + b, rewards.begin() + b + steps_per_env);
      std::vector<double> seg_v(steps_per_env);
      std::vector<std::uint8_t> seg_d(steps_per_env);
      for (int t = 0; t < steps_per_env; ++t) {
        seg_v[t] = segment.steps[b + t].value;
        seg_d[t] = segment.steps[b + t].done ? 1 : 0;
      }
      const double bootstrap =
          segment.steps[b + steps_per_env - 1].done
              ? 0.0
              : forward_one(result.policy.critic, segment.bootstrap_obs[e])[0];
      const auto g = gae(seg_r, seg_v, seg_d, bootstrap, gamma, lambda);
      std::copy(g.advantages.begin(), g.advantages.end(), advantages.begin() + b);
      std::copy(g.returns.begin(), g.returns.end(), returns.begin() + b);
    }

    // 5. policy improvement
    const double lr_scale = anneal ? 1.0 - static_cast<double>(iter) / cfg.iterations : 1.0;
    UpdateStats stats;
    try {
      if (use_ppo)
        stats = ppo_update(result.policy, segment.steps, advantages, returns, ppo, train_rng,
                           lr_scale);
      else
        stats = a2c_update(result.policy, segment.steps, advantages, returns, a2c, train_rng,
                           lr_scale);
    } catch (const NonFiniteSignal& e) {
      throw TrainingAborted("run_fail: aborted at iteration " + std::to_string(iter) + ": " +
                            e.what());
    }

    IterationMetrics m;
    m.iteration = iter;
    m.env_steps = static_cast<std::int64_t>(iter + 1) * n;
    if (!segment.finished_returns.empty()) {
      double s = 0.0;
      for (double r : segment.finished_returns) s += r;
      last_return = s / segment.finished_returns.size();
    }
    m.mean_return = last_return;
    m.entropy = stats.entropy;
    m.disc_loss = disc_stats.mean_loss;
    m.reward_mean = 0.0;
    m.reward_min = rewards[0];
    m.reward_max = rewards[0];
    for (double r : rewards) {
      m.reward_mean += r / n;
      m.reward_min = std::min(m.reward_min, r);
      m.reward_max = std::max(m.reward_max, r);
    }
    double lm = 0.0, lv = 0.0;
    for (double l : logits) lm += l / n;
    for (double l : logits) lv += (l - lm) * (l - lm) / n;
    m.logit_mean = lm;
    m.logit_std = std::sqrt(lv);
    m.clip_fraction = stats.clip_fraction;
    m.policy_loss = stats.policy_loss;
    m.value_loss = stats.value_loss;
    if (!std::isfinite(m.entropy + m.disc_loss + m.reward_mean))
      throw TrainingAborted("run_fail: non-finite metrics at iteration " + std::to_string(iter));
    result.metrics.push_back(m);
  }

  // Final evaluation: pooled (s, a) samples vs. demos (Wasserstein), plus
  // env-reward returns for reporting.
  Rng eval_rng(derive_seed(seed, 5));
  std::vector<Transition> eval_steps;
  std::vector<double> eval_returns;
  int successes = 0;
  auto sampler = policy_sampler(result.policy);
  for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
    auto state = env.reset(eval_rng);
    double ret = 0.0;
    bool success = false;
    for (int t = 0; t < env.max_steps; ++t) {
      std::vector<double> o = env.obs(state, eval_rng);
      const ActionSample a = sampler(std::span<const double>(o), eval_rng);
      const auto sr = env.step(state, a.action, eval_rng);
      Transition tr;
      tr.state = std::move(o);
      tr.action = a.action;
      eval_steps.push_back(std::move(tr));
      ret += sr.reward;
      if constexpr (std::is_same_v<Env, GridWorld>) {
        if (env.is_goal(sr.next.row, sr.next.col)) success = true;
      } else {
        if (sr.next.x >= env.goal_x) success = true;
      }
      if (sr.done) break;
      state = sr.next;
    }
    eval_returns.push_back(ret);
    if (success) ++successes;
  }
  for (double r : eval_returns) result.final_mean_return += r / eval_returns.size();
  result.final_success_rate = static_cast<double>(successes) / cfg.eval_episodes;

  Matrix eval_features = features_of(eval_steps, n_actions);
  // Uniform random subsample down to the eval cap, seeded.
  if (eval_features.rows > cfg.eval_subsample) {
    const auto idx = shuffled_indices(eval_features.rows, eval_rng);
    Matrix sub(cfg.eval_subsample, eval_features.cols);
    for (int i = 0; i < cfg.eval_subsample; ++i)
      for (int j = 0; j < eval_features.cols; ++j) sub(i, j) = eval_features(idx[i], j);
    eval_features = std::move(sub);
  }
  result.final_logit_snapshot = disc_logits(result.disc, eval_features);
  {
    Matrix states(static_cast<int>(eval_steps.size()), obs_dim);
    for (std::size_t i = 0; i < eval_steps.size(); ++i)
      std::copy(eval_steps[i].state.begin(), eval_steps[i].state.end(),
                states.row(static_cast<int>(i)));
    result.final_entropy = policy_entropy(result.policy, states);
  }

  EmpiricalDist policy_cloud{eval_features};
  EmpiricalDist demo_cloud{expert_features};
  result.wasserstein = wasserstein(policy_cloud, demo_cloud);
  return result;
}

}  // namespace ail_detail

inline AILResult run_fail(const AILConfig& cfg, const DemoSet& demos, std::uint64_t seed) {
  return std::visit(
      [&](const auto& env) { return ail_detail::run_fail_impl(env, cfg, demos, seed); }, cfg.env);
}

}  // namespace ail
