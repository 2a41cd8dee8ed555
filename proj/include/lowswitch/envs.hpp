#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lowswitch/linalg.hpp"
#include "lowswitch/link.hpp"
#include "lowswitch/rng.hpp"

namespace lowswitch {

// Layers are 0-based throughout the library (layer 0 is the first step);
// episodes are 1-based.

struct Transition {
  std::size_t next = 0;
  double prob = 0.0;
};

// Raw tables for a finite episodic MDP. Indexing is [layer][state][action].
struct EnvTables {
  std::string family;
  std::size_t horizon = 0;
  std::size_t num_states = 0;
  std::size_t initial_state = 0;
  std::vector<std::size_t> dims;                                 // d_h per layer
  std::vector<std::vector<std::vector<Vec>>> features;           // phi_h(s,a)
  std::vector<std::vector<std::vector<double>>> mean_reward;     // r_h(s,a)
  std::vector<std::vector<std::vector<std::vector<Transition>>>> transitions;
  double noise_std = 0.0;
  double ibe = 0.0;
};

// Immutable finite-horizon MDP with layer-indexed features. Safe to share
// between threads; all randomness comes from caller-owned streams.
class EpisodicEnv {
 public:
  explicit EpisodicEnv(EnvTables tables);

  const std::string& family() const { return t_.family; }
  std::size_t horizon() const { return t_.horizon; }
  std::size_t num_states() const { return t_.num_states; }
  std::size_t initial_state() const { return t_.initial_state; }
  const std::vector<std::size_t>& dims() const { return t_.dims; }
  std::size_t dim(std::size_t h) const { return t_.dims.at(h); }
  std::size_t num_actions(std::size_t h, std::size_t s) const {
    return t_.features[h][s].size();
  }
  const Vec& feature(std::size_t h, std::size_t s, std::size_t a) const {
    return t_.features[h][s][a];
  }
  double mean_reward(std::size_t h, std::size_t s, std::size_t a) const {
    return t_.mean_reward[h][s][a];
  }
  std::span<const Transition> transitions(std::size_t h, std::size_t s, std::size_t a) const {
    return t_.transitions[h][s][a];
  }
  double noise_std() const { return t_.noise_std; }
  double ibe() const { return t_.ibe; }
  const EnvTables& tables() const { return t_; }

  std::size_t sample_next(std::size_t h, std::size_t s, std::size_t a, Stream& rng) const;
  // Mean plus zero-mean noise truncated symmetrically to stay in [0, 1].
  double sample_reward(std::size_t h, std::size_t s, std::size_t a, Stream& rng) const;

 private:
  EnvTables t_;
};

struct Step {
  std::size_t layer = 0;
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
};

using Trajectory = std::vector<Step>;
using PolicyFn = std::function<std::size_t(std::size_t layer, std::size_t state)>;

// Deterministic tabular policy: action[layer][state].
struct TabularPolicy {
  std::vector<std::vector<std::size_t>> action;

  std::size_t operator()(std::size_t layer, std::size_t state) const {
    return action[layer][state];
  }
  bool operator==(const TabularPolicy&) const = default;
};

// One episode. `rng_seed`/`episode` key the transition and reward streams.
// The running reward total is clamped to [0, 1].
Trajectory run_policy(const EpisodicEnv& env, const PolicyFn& policy, std::uint64_t rng_seed,
                      std::uint64_t episode);

// Exact dynamic programming.
double optimal_value(const EpisodicEnv& env);
// Q*[layer][state][action]
std::vector<std::vector<std::vector<double>>> optimal_q(const EpisodicEnv& env);
TabularPolicy optimal_policy(const EpisodicEnv& env);
double policy_value(const EpisodicEnv& env, const TabularPolicy& policy);

// (T_h V)(s, a) = r_h(s,a) + E_{s'} V(s') for a given next-layer value vector.
std::vector<std::vector<double>> bellman_backup(const EpisodicEnv& env, std::size_t layer,
                                                std::span<const double> next_values);

// ---- generators -------------------------------------------------------

using RewardTable = std::vector<std::vector<std::vector<double>>>;                  // [h][s][a]
using TransitionTable = std::vector<std::vector<std::vector<std::vector<double>>>>;  // [h][s][a][s']

// Tabular MDP with one-hot features, d_h = S*A, inherent Bellman error 0.
EpisodicEnv make_linear_mdp_onehot(std::size_t num_states, std::size_t num_actions,
                                   std::size_t horizon, const RewardTable& rewards,
                                   const TransitionTable& transitions, double noise_std = 0.0);

// Random tables: Dirichlet(1) transitions, rewards uniform on [0, 1/H].
std::pair<RewardTable, TransitionTable> random_onehot_tables(std::size_t num_states,
                                                             std::size_t num_actions,
                                                             std::size_t horizon,
                                                             std::uint64_t seed);

// Keys are 1-based (layer, action index i) with 2 <= i <= d_h - 1.
using HardRewards = std::map<std::pair<std::size_t, std::size_t>, double>;

// Two-state instance with an absorbing state. At s1 (state 0) in layer h the
// actions are a_1..a_{d_h-1} (action id i-1); a_1 stays, a_i (i >= 2) exits
// to s2 (state 1) collecting r_{h,i}. s2 offers only a_0.
EpisodicEnv make_hard_instance(std::span<const std::size_t> dims, const HardRewards& rewards);
HardRewards sample_hard_rewards(std::span<const std::size_t> dims, std::uint64_t seed);
std::size_t informative_arm_count(std::span<const std::size_t> dims);

// H = 1 linear bandit: one state, one action per arm, mean reward arm^T theta*.
EpisodicEnv make_linear_bandit(const Vec& theta_star, std::span<const Vec> arms,
                               double noise_std);

// Identity link returns `base` unchanged. Other links need a single-layer
// base and theta*, and rewrite the mean rewards to f(phi^T theta*).
EpisodicEnv make_glm_env(const EpisodicEnv& base, const LinkFunction& link,
                         const std::optional<Vec>& theta_star = std::nullopt);

}  // namespace lowswitch
