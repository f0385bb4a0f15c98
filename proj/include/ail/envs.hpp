#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ail/rng.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// Native toy MDPs with value-iteration experts. Environments are cheap value
// types; concurrent rollouts get independent RNG streams via derive_seed.
// ---------------------------------------------------------------------------

struct Transition {
  std::vector<double> state;     // observation features
  int action = 0;
  double env_reward = 0.0;       // never visible to the learner
  double assigned_reward = 0.0;  // r_f(logit), filled by the imitation loop
  bool done = false;
  double log_prob = 0.0;         // behavior log-prob
  double value = 0.0;            // critic estimate at collection time
};

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

// ---------------------------------------------------------------------------
// GridWorld: slippery N x N grid, one-hot observations, four actions.
// Reaching the goal pays +1 and ends the episode (unless fixed_length);
// every other step pays the step penalty. Walls absorb.
// ---------------------------------------------------------------------------

struct GridWorld {
  int rows = 7, cols = 7;
  int start_row = 0, start_col = 0;
  int goal_row = 6, goal_col = 6;
  double p_slip = 0.1;
  double step_reward = -0.01;
  double goal_reward = 1.0;
  double gamma = 0.99;
  int max_steps = 100;
  bool fixed_length = false;

  static constexpr int kActions = 4;  // up, down, left, right

  struct State {
    int row = 0, col = 0, t = 0;
  };

  int cell_count() const { return rows * cols; }
  int obs_dim() const { return cell_count(); }
  int action_count() const { return kActions; }
  int cell_index(int r, int c) const { return r * cols + c; }
  bool is_goal(int r, int c) const { return r == goal_row && c == goal_col; }

  State reset(Rng&) const {
    if (start_row == goal_row && start_col == goal_col)
      throw std::invalid_argument("GridWorld: start must differ from goal");
    return State{start_row, start_col, 0};
  }

  std::vector<double> obs(const State& s, Rng&) const {
    std::vector<double> o(cell_count(), 0.0);
    o[cell_index(s.row, s.col)] = 1.0;
    return o;
  }

  // Deterministic move for an executed action; walls absorb.
  void move(int r, int c, int action, int& nr, int& nc) const {
    nr = r;
    nc = c;
    switch (action) {
      case 0: nr = r - 1; break;
      case 1: nr = r + 1; break;
      case 2: nc = c - 1; break;
      case 3: nc = c + 1; break;
      default: throw std::invalid_argument("GridWorld: invalid action " + std::to_string(action));
    }
    if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
      nr = r;
      nc = c;
    }
  }

  struct StepResult {
    State next;
    double reward = 0.0;
    bool done = false;
  };

  StepResult step(const State& s, int action, Rng& rng) const {
    if (action < 0 || action >= kActions)
      throw std::invalid_argument("GridWorld: invalid action " + std::to_string(action));
    int executed = action;
    if (p_slip > 0.0 && rng.uniform() < p_slip) {
      // A uniformly random *other* action is executed.
      int pick = rng.uniform_int(kActions - 1);
      executed = pick >= action ? pick + 1 : pick;
    }
    StepResult r;
    move(s.row, s.col, executed, r.next.row, r.next.col);
    r.next.t = s.t + 1;
    const bool at_goal = is_goal(r.next.row, r.next.col);
    r.reward = at_goal ? goal_reward : step_reward;
    if (fixed_length)
      r.done = r.next.t >= max_steps;
    else
      r.done = at_goal || r.next.t >= max_steps;
    return r;
  }
};

// ---------------------------------------------------------------------------
// NoisyChain: position x in [0,1] plus a pure-noise feature; three actions
// move x left / keep / right. Reward 1 per step spent at x >= goal_x.
// Fixed-length episodes by default.
// ---------------------------------------------------------------------------

struct NoisyChain {
  double step_size = 0.05;
  double noise_sigma = 0.05;
  double goal_x = 0.95;
  double gamma = 0.99;
  int max_steps = 200;
  bool fixed_length = true;

  static constexpr int kActions = 3;  // left, stay, right

  struct State {
    double x = 0.0;
    int t = 0;
  };

  int obs_dim() const { return 2; }
  int action_count() const { return kActions; }

  State reset(Rng&) const { return State{0.0, 0}; }

  std::vector<double> obs(const State& s, Rng& rng) const {
    return {s.x, rng.normal(0.0, noise_sigma)};
  }

  struct StepResult {
    State next;
    double reward = 0.0;
    bool done = false;
  };

  StepResult step(const State& s, int action, Rng&) const {
    if (action < 0 || action >= kActions)
      throw std::invalid_argument("NoisyChain: invalid action " + std::to_string(action));
    StepResult r;
    const double delta = (action == 0) ? -step_size : (action == 2 ? step_size : 0.0);
    r.next.x = std::min(1.0, std::max(0.0, s.x + delta));
    r.next.t = s.t + 1;
    r.reward = r.next.x >= goal_x ? 1.0 : 0.0;
    if (fixed_length)
      r.done = r.next.t >= max_steps;
    else
      r.done = r.next.x >= goal_x || r.next.t >= max_steps;
    return r;
  }
};

// ---------------------------------------------------------------------------
// Env registry for the CLI and config layer.
// ---------------------------------------------------------------------------

using AnyEnv = std::variant<GridWorld, NoisyChain>;

inline AnyEnv make_env(const std::string& id) {
  if (id == "grid7") return GridWorld{};
  if (id == "grid5") {
    GridWorld g;
    g.rows = g.cols = 5;
    g.goal_row = g.goal_col = 4;
    return g;
  }
  if (id == "chain") return NoisyChain{};
  throw std::invalid_argument("unknown env '" + id + "' (valid: grid7, grid5, chain)");
}

inline int env_obs_dim(const AnyEnv& e) {
  return std::visit([](const auto& env) { return env.obs_dim(); }, e);
}
inline int env_action_count(const AnyEnv& e) {
  return std::visit([](const auto& env) { return env.action_count(); }, e);
}

// State features concatenated with a one-hot action; the shared input for
// the discriminator and the transport distance.
inline std::vector<double> sa_features(std::span<const double> obs, int action, int n_actions) {
  std::vector<double> f(obs.size() + static_cast<std::size_t>(n_actions), 0.0);
  std::copy(obs.begin(), obs.end(), f.begin());
  f[obs.size() + static_cast<std::size_t>(action)] = 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Value-iteration expert for tabular GridWorld.
// ---------------------------------------------------------------------------

struct ValueIterationResult {
  std::vector<double> values;   // per cell
  std::vector<int> policy;      // greedy action per cell, ties to lowest index
  double residual = 0.0;
  int sweeps = 0;
};

inline ValueIterationResult value_iteration_expert(const GridWorld& env, double tol = 1e-8) {
  const int n = env.cell_count();
  ValueIterationResult out;
  out.values.assign(n, 0.0);
  out.policy.assign(n, 0);

  auto q_value = [&](int r, int c, int action, const std::vector<double>& v) {
    double q = 0.0;
    for (int executed = 0; executed < GridWorld::kActions; ++executed) {
      double p;
      if (executed == action)
        p = 1.0 - env.p_slip;
      else
        p = env.p_slip / (GridWorld::kActions - 1);
      if (p == 0.0) continue;
      int nr, nc;
      env.move(r, c, executed, nr, nc);
      const bool goal = env.is_goal(nr, nc);
      const double reward = goal ? env.goal_reward : env.step_reward;
      q += p * (reward + (goal ? 0.0 : env.gamma * v[env.cell_index(nr, nc)]));
    }
    return q;
  };

  const int max_sweeps = 100000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double residual = 0.0;
    std::vector<double> next(n, 0.0);
    for (int r = 0; r < env.rows; ++r)
      for (int c = 0; c < env.cols; ++c) {
        const int idx = env.cell_index(r, c);
        if (env.is_goal(r, c)) {
          next[idx] = 0.0;  // absorbing terminal
          continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < GridWorld::kActions; ++a) {
          const double q = q_value(r, c, a, out.values);
          if (q > best + 1e-15) {
            best = q;
            best_a = a;
          }
        }
        next[idx] = best;
        out.policy[idx] = best_a;
        residual = std::max(residual, std::abs(best - out.values[idx]));
      }
    out.values = std::move(next);
    out.residual = residual;
    out.sweeps = sweep + 1;
    if (residual < tol) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rollout collection.
// ---------------------------------------------------------------------------

struct Rollout {
  std::vector<Transition> steps;
  std::vector<double> bootstrap_obs;  // observation after the last transition
};

// Collects exactly n_steps transitions, auto-resetting on done. The policy is
// any callable (obs, rng) -> ActionSample.
template <typename Env, typename Policy>
Rollout rollout(Env env, Policy&& policy, int n_steps, bool fixed_length, Rng& rng) {
  env.fixed_length = fixed_length;
  Rollout out;
  out.steps.reserve(n_steps);
  auto state = env.reset(rng);
  std::vector<double> o = env.obs(state, rng);
  for (int i = 0; i < n_steps; ++i) {
    const ActionSample a = policy(std::span<const double>(o), rng);
    const auto sr = env.step(state, a.action, rng);
    Transition tr;
    tr.state = o;
    tr.action = a.action;
    tr.env_reward = sr.reward;
    tr.done = sr.done;
    tr.log_prob = a.log_prob;
    tr.value = a.value;
    out.steps.push_back(std::move(tr));
    if (sr.done) {
      state = env.reset(rng);
    } else {
      state = sr.next;
    }
    o = env.obs(state, rng);
  }
  out.bootstrap_obs = std::move(o);
  return out;
}

struct EvalStats {
  double mean_return = 0.0;
  std::vector<double> episode_returns;
  double success_rate = 0.0;
};

// Undiscounted episodic returns for a policy; the common yardstick for
// normalized returns and expert/random baselines.
template <typename Env, typename Policy>
EvalStats evaluate_policy(const Env& env, Policy&& policy, int episodes, Rng& rng) {
  EvalStats stats;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    auto state = env.reset(rng);
    double ret = 0.0;
    bool success = false;
    for (int t = 0; t < env.max_steps; ++t) {
      std::vector<double> o = env.obs(state, rng);
      const ActionSample a = policy(std::span<const double>(o), rng);
      const auto sr = env.step(state, a.action, rng);
      ret += sr.reward;
      if constexpr (std::is_same_v<Env, GridWorld>) {
        if (env.is_goal(sr.next.row, sr.next.col)) success = true;
      } else {
        if (sr.next.x >= env.goal_x) success = true;
      }
      if (sr.done) break;
      state = sr.next;
    }
    stats.episode_returns.push_back(ret);
    if (success) ++successes;
  }
  for (double r : stats.episode_returns) stats.mean_return += r;
  stats.mean_return /= std::max<std::size_t>(1, stats.episode_returns.size());
  stats.success_rate = static_cast<double>(successes) / std::max(1, episodes);
  return stats;
}

// Uniform random policy over n actions.
inline auto uniform_policy(int n_actions) {
  return [n_actions](std::span<const double>, Rng& rng) {
    ActionSample a;
    a.action = rng.uniform_int(n_actions);
    a.log_prob = -std::log(static_cast<double>(n_actions));
    a.value = 0.0;
    return a;
  };
}

// ---------------------------------------------------------------------------
// Expert demonstrations.
// ---------------------------------------------------------------------------

struct DemoSet {
  std::vector<std::vector<double>> states;
  std::vector<int> actions;
  std::string env_id;
  int stride = 1;
  double source_return = 0.0;  // mean undiscounted return of the source episodes
  std::uint64_t seed = 0;
  int n_demos = 0;

  std::size_t size() const { return actions.size(); }
};

struct DemoCollectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rolls out successful expert episodes and keeps every stride-th (s, a) pair
// of the pooled transition stream. Success means reaching the goal cell
// (GridWorld) or the goal position (NoisyChain) within the step limit.
template <typename Env, typename ExpertAction>
DemoSet collect_demos(const Env& env, ExpertAction&& expert, const std::string& env_id,
                      int n_demos, int stride, std::uint64_t seed) {
  if (stride < 1) throw std::invalid_argument("collect_demos: stride must be >= 1");
  if (n_demos < 1) throw std::invalid_argument("collect_demos: n_demos must be >= 1");
  DemoSet demos;
  demos.env_id = env_id;
  demos.stride = stride;
  demos.seed = seed;
  demos.n_demos = n_demos;
  Rng rng(derive_seed(seed, 0xDE305ull));

  std::vector<std::vector<double>> pooled_states;
  std::vector<int> pooled_actions;
  double total_return = 0.0;

  int collected = 0;
  int attempts = 0;
  const int max_attempts = 100 + n_demos;
  while (collected < n_demos) {
    if (++attempts > max_attempts)
      throw DemoCollectionError("collect_demos: expert failed to produce " +
                                std::to_string(n_demos) + " successful episodes in " +
                                std::to_string(max_attempts) + " attempts");
    auto state = env.reset(rng);
    std::vector<std::vector<double>> ep_states;
    std::vector<int> ep_actions;
    double ep_return = 0.0;
    bool success = false;
    for (int t = 0; t < env.max_steps; ++t) {
      std::vector<double> o = env.obs(state, rng);
      const int a = expert(state);
      ep_states.push_back(std::move(o));
      ep_actions.push_back(a);
      const auto sr = env.step(state, a, rng);
      ep_return += sr.reward;
      if constexpr (std::is_same_v<Env, GridWorld>) {
        if (env.is_goal(sr.next.row, sr.next.col)) success = true;
      } else {
        if (sr.next.x >= env.goal_x) success = true;
      }
      if (sr.done) break;
      state = sr.next;
    }
    if (!success) continue;
    ++collected;
    total_return += ep_return;
    for (std::size_t i = 0; i < ep_actions.size(); ++i) {
      pooled_states.push_back(std::move(ep_states[i]));
      pooled_actions.push_back(ep_actions[i]);
    }
  }
  demos.source_return = total_return / n_demos;
  for (std::size_t i = 0; i < pooled_actions.size(); i += stride) {
    demos.states.push_back(std::move(pooled_states[i]));
    demos.actions.push_back(pooled_actions[i]);
  }
  if (demos.size() == 0) throw DemoCollectionError("collect_demos: empty demo set");
  return demos;
}

// Greedy expert callable from a value-iteration policy.
inline auto grid_expert(const GridWorld& env, const ValueIterationResult& vi) {
  return [&env, policy = vi.policy](const GridWorld::State& s) {
    return policy[env.cell_index(s.row, s.col)];
  };
}

inline auto chain_expert() {
  return [](const NoisyChain::State&) { return 2; };  // always right
}

// ---------------------------------------------------------------------------
// Demo persistence: JSON-lines, header line with metadata then one
// {"state": [...], "action": k} record per pair.
// ---------------------------------------------------------------------------

inline void save_demos(const DemoSet& demos, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_demos: cannot open " + path);
  nlohmann::json header;
  header["kind"] = "ail-demoset";
  header["version"] = 1;
  header["env"] = demos.env_id;
  header["stride"] = demos.stride;
  header["source_return"] = demos.source_return;
  header["seed"] = demos.seed;
  header["n_demos"] = demos.n_demos;
  out << header.dump() << "\n";
  for (std::size_t i = 0; i < demos.size(); ++i) {
    nlohmann::json row;
    row["state"] = demos.states[i];
    row["action"] = demos.actions[i];
    out << row.dump() << "\n";
  }
}

inline DemoSet load_demos(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_demos: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_demos: empty file " + path);
  const auto header = nlohmann::json::parse(line);
  if (header.value("kind", "") != "ail-demoset")
    throw std::runtime_error("load_demos: " + path + " is not a demo set");
  DemoSet demos;
  demos.env_id = header.value("env", "");
  demos.stride = header.value("stride", 1);
  demos.source_return = header.value("source_return", 0.0);
  demos.seed = header.value("seed", std::uint64_t{0});
  demos.n_demos = header.value("n_demos", 0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    demos.states.push_back(row.at("state").get<std::vector<double>>());
    demos.actions.push_back(row.at("action").get<int>());
  }
  if (demos.size() == 0) throw std::runtime_error("load_demos: no demonstration pairs in " + path);
  return demos;
}

}  // namespace ail
