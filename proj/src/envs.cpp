#include "lowswitch/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lowswitch/errors.hpp"

namespace lowswitch {

namespace {

constexpr double kStochasticTol = 1e-9;
constexpr double kNormTol = 1e-12;

std::string where(std::size_t h, std::size_t s, std::size_t a) {
  return "(layer " + std::to_string(h) + ", state " + std::to_string(s) + ", action " +
         std::to_string(a) + ")";
}

// Largest total of mean rewards along any trajectory with positive probability.
double max_mean_return(const EnvTables& t) {
  std::vector<double> next(t.num_states, 0.0);
  for (std::size_t h = t.horizon; h-- > 0;) {
    std::vector<double> cur(t.num_states, 0.0);
    for (std::size_t s = 0; s < t.num_states; ++s) {
      double best = 0.0;
      for (std::size_t a = 0; a < t.features[h][s].size(); ++a) {
        double tail = 0.0;
        for (const auto& tr : t.transitions[h][s][a]) {
          if (tr.prob > 0.0) tail = std::max(tail, next[tr.next]);
        }
        best = std::max(best, t.mean_reward[h][s][a] + tail);
      }
      cur[s] = best;
    }
    next = std::move(cur);
  }
  return next[t.initial_state];
}

}  // namespace

EpisodicEnv::EpisodicEnv(EnvTables tables) : t_(std::move(tables)) {
  if (t_.horizon == 0) throw InvalidArgument("env: horizon must be positive");
  if (t_.num_states == 0) throw InvalidArgument("env: no states");
  if (t_.initial_state >= t_.num_states) throw InvalidArgument("env: bad initial state");
  if (t_.dims.size() != t_.horizon || t_.features.size() != t_.horizon ||
      t_.mean_reward.size() != t_.horizon || t_.transitions.size() != t_.horizon) {
    throw InvalidArgument("env: per-layer tables must have length H");
  }
  if (t_.noise_std < 0.0) throw InvalidArgument("env: negative noise_std");
  if (t_.ibe < 0.0) throw InvalidArgument("env: negative inherent Bellman error");
  for (std::size_t h = 0; h < t_.horizon; ++h) {
    if (t_.dims[h] == 0 || t_.dims[h] > kMaxDim) {
      throw InvalidArgument("env: feature dimension out of range at layer " + std::to_string(h));
    }
    if (t_.features[h].size() != t_.num_states || t_.mean_reward[h].size() != t_.num_states ||
        t_.transitions[h].size() != t_.num_states) {
      throw InvalidArgument("env: per-state tables must have length S");
    }
    for (std::size_t s = 0; s < t_.num_states; ++s) {
      const std::size_t na = t_.features[h][s].size();
      if (na == 0) throw InvalidArgument("env: state without actions " + where(h, s, 0));
      if (t_.mean_reward[h][s].size() != na || t_.transitions[h][s].size() != na) {
        throw InvalidArgument("env: action tables disagree " + where(h, s, 0));
      }
      for (std::size_t a = 0; a < na; ++a) {
        const Vec& phi = t_.features[h][s][a];
        if (static_cast<std::size_t>(phi.size()) != t_.dims[h]) {
          throw InvalidArgument("env: feature has wrong dimension " + where(h, s, a));
        }
        if (phi.norm() > 1.0 + kNormTol) {
          throw InvalidArgument("env: feature norm exceeds 1 " + where(h, s, a));
        }
        const double r = t_.mean_reward[h][s][a];
        if (!(r >= 0.0 && r <= 1.0)) {
          throw InvalidArgument("env: mean reward outside [0, 1] " + where(h, s, a));
        }
        double total = 0.0;
        for (const auto& tr : t_.transitions[h][s][a]) {
          if (tr.next >= t_.num_states || tr.prob < 0.0) {
            throw InvalidArgument("env: invalid transition " + where(h, s, a));
          }
          total += tr.prob;
        }
        if (std::abs(total - 1.0) > kStochasticTol) {
          throw InvalidArgument("env: transition row does not sum to 1 " + where(h, s, a));
        }
      }
    }
  }
  if (max_mean_return(t_) > 1.0 + kStochasticTol) {
    throw InvalidArgument("env: mean rewards along some trajectory sum above 1");
  }
}

std::size_t EpisodicEnv::sample_next(std::size_t h, std::size_t s, std::size_t a,
                                     Stream& rng) const {
  const auto row = transitions(h, s, a);
  if (row.size() == 1) return row.front().next;
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& tr : row) {
    acc += tr.prob;
    if (u < acc) return tr.next;
  }
  // Round-off in the cumulative sum: fall back to the last positive entry.
  for (auto it = row.rbegin(); it != row.rend(); ++it) {
    if (it->prob > 0.0) return it->next;
  }
  return row.back().next;
}

double EpisodicEnv::sample_reward(std::size_t h, std::size_t s, std::size_t a,
                                  Stream& rng) const {
  const double mean = mean_reward(h, s, a);
  if (t_.noise_std == 0.0) return mean;
  const double width = std::min(mean, 1.0 - mean);
  const double eps = std::clamp(t_.noise_std * rng.normal(), -width, width);
  return mean + eps;
}

Trajectory run_policy(const EpisodicEnv& env, const PolicyFn& policy, std::uint64_t rng_seed,
                      std::uint64_t episode) {
  Trajectory traj;
  traj.reserve(env.horizon());
  std::size_t s = env.initial_state();
  double total = 0.0;
  for (std::size_t h = 0; h < env.horizon(); ++h) {
    const std::size_t a = policy(h, s);
    if (a >= env.num_actions(h, s)) {
      throw InvalidAction("policy chose invalid action " + std::to_string(a) + " at " +
                          where(h, s, a));
    }
    Stream reward_rng(rng_seed, episode, h, StreamTag::kReward);
    Stream trans_rng(rng_seed, episode, h, StreamTag::kTransition);
    double r = env.sample_reward(h, s, a, reward_rng);
    r = std::clamp(r, 0.0, std::max(0.0, 1.0 - total));
    total += r;
    const std::size_t next = env.sample_next(h, s, a, trans_rng);
    traj.push_back({h, s, a, r, next});
    s = next;
  }
  return traj;
}

std::vector<std::vector<double>> bellman_backup(const EpisodicEnv& env, std::size_t layer,
                                                std::span<const double> next_values) {
  if (next_values.size() != env.num_states()) {
    throw InvalidArgument("bellman_backup: value vector must have one entry per state");
  }
  std::vector<std::vector<double>> q(env.num_states());
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    q[s].resize(env.num_actions(layer, s));
    for (std::size_t a = 0; a < q[s].size(); ++a) {
      double v = env.mean_reward(layer, s, a);
      for (const auto& tr : env.transitions(layer, s, a)) v += tr.prob * next_values[tr.next];
      q[s][a] = v;
    }
  }
  return q;
}

std::vector<std::vector<std::vector<double>>> optimal_q(const EpisodicEnv& env) {
  const std::size_t H = env.horizon();
  std::vector<std::vector<std::vector<double>>> q(H);
  std::vector<double> next(env.num_states(), 0.0);
  for (std::size_t h = H; h-- > 0;) {
    q[h] = bellman_backup(env, h, next);
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      next[s] = *std::max_element(q[h][s].begin(), q[h][s].end());
    }
  }
  return q;
}

double optimal_value(const EpisodicEnv& env) {
  const auto q = optimal_q(env);
  const auto& row = q[0][env.initial_state()];
  return *std::max_element(row.begin(), row.end());
}

TabularPolicy optimal_policy(const EpisodicEnv& env) {
  const auto q = optimal_q(env);
  TabularPolicy pi;
  pi.action.resize(env.horizon());
  for (std::size_t h = 0; h < env.horizon(); ++h) {
    pi.action[h].resize(env.num_states());
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      const auto& row = q[h][s];
      pi.action[h][s] = static_cast<std::size_t>(
          std::distance(row.begin(), std::max_element(row.begin(), row.end())));
    }
  }
  return pi;
}

double policy_value(const EpisodicEnv& env, const TabularPolicy& policy) {
  if (policy.action.size() != env.horizon()) {
    throw InvalidArgument("policy_value: policy horizon mismatch");
  }
  std::vector<double> dist(env.num_states(), 0.0);
  dist[env.initial_state()] = 1.0;
  double value = 0.0;
  for (std::size_t h = 0; h < env.horizon(); ++h) {
    std::vector<double> next(env.num_states(), 0.0);
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      if (dist[s] == 0.0) continue;
      const std::size_t a = policy(h, s);
      if (a >= env.num_actions(h, s)) {
        throw InvalidAction("policy_value: invalid action at " + where(h, s, a));
      }
      value += dist[s] * env.mean_reward(h, s, a);
      for (const auto& tr : env.transitions(h, s, a)) next[tr.next] += dist[s] * tr.prob;
    }
    dist = std::move(next);
  }
  return value;
}

EpisodicEnv make_linear_mdp_onehot(std::size_t num_states, std::size_t num_actions,
                                   std::size_t horizon, const RewardTable& rewards,
                                   const TransitionTable& transitions, double noise_std) {
  if (num_states == 0 || num_actions == 0 || horizon == 0) {
    throw InvalidArgument("make_linear_mdp_onehot: S, A, H must be positive");
  }
  const std::size_t d = num_states * num_actions;
  if (rewards.size() != horizon || transitions.size() != horizon) {
    throw InvalidArgument("make_linear_mdp_onehot: tables must have H layers");
  }
  EnvTables t;
  t.family = "onehot";
  t.horizon = horizon;
  t.num_states = num_states;
  t.initial_state = 0;
  t.dims.assign(horizon, d);
  t.noise_std = noise_std;
  t.ibe = 0.0;
  t.features.resize(horizon);
  t.mean_reward.resize(horizon);
  t.transitions.resize(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    if (rewards[h].size() != num_states || transitions[h].size() != num_states) {
      throw InvalidArgument("make_linear_mdp_onehot: tables must have S rows per layer");
    }
    t.features[h].resize(num_states);
    t.mean_reward[h].resize(num_states);
    t.transitions[h].resize(num_states);
    for (std::size_t s = 0; s < num_states; ++s) {
      if (rewards[h][s].size() != num_actions || transitions[h][s].size() != num_actions) {
        throw InvalidArgument("make_linear_mdp_onehot: tables must have A entries per state");
      }
      for (std::size_t a = 0; a < num_actions; ++a) {
        Vec phi = Vec::Zero(static_cast<Eigen::Index>(d));
        phi(static_cast<Eigen::Index>(s * num_actions + a)) = 1.0;
        t.features[h][s].push_back(std::move(phi));
        t.mean_reward[h][s].push_back(rewards[h][s][a]);
        const auto& row = transitions[h][s][a];
        if (row.size() != num_states) {
          throw InvalidArgument("make_linear_mdp_onehot: transition row must have S entries " +
                                where(h, s, a));
        }
        double total = 0.0;
        std::vector<Transition> sparse;
        for (std::size_t n = 0; n < num_states; ++n) {
          if (row[n] < 0.0) {
            throw InvalidArgument("make_linear_mdp_onehot: negative probability " + where(h, s, a));
          }
          total += row[n];
          if (row[n] > 0.0) sparse.push_back({n, row[n]});
        }
        if (std::abs(total - 1.0) > kStochasticTol) {
          throw InvalidArgument("make_linear_mdp_onehot: non-stochastic transition row " +
                                where(h, s, a));
        }
        t.transitions[h][s].push_back(std::move(sparse));
      }
    }
  }
  return EpisodicEnv(std::move(t));
}

std::pair<RewardTable, TransitionTable> random_onehot_tables(std::size_t num_states,
                                                             std::size_t num_actions,
                                                             std::size_t horizon,
                                                             std::uint64_t seed) {
  Stream rng(seed, 0, 0, StreamTag::kEnvGen);
  RewardTable rewards(horizon, std::vector<std::vector<double>>(
                                   num_states, std::vector<double>(num_actions, 0.0)));
  TransitionTable trans(horizon,
                        std::vector<std::vector<std::vector<double>>>(
                            num_states, std::vector<std::vector<double>>(
                                            num_actions, std::vector<double>(num_states, 0.0))));
  const double cap = 1.0 / static_cast<double>(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t s = 0; s < num_states; ++s) {
      for (std::size_t a = 0; a < num_actions; ++a) {
        rewards[h][s][a] = cap * rng.uniform();
        auto& row = trans[h][s][a];
        double total = 0.0;
        for (auto& p : row) {
          double u = rng.uniform();
          while (u <= 0.0) u = rng.uniform();
          p = -std::log(u);
          total += p;
        }
        for (auto& p : row) p /= total;
      }
    }
  }
  return {std::move(rewards), std::move(trans)};
}

std::size_t informative_arm_count(std::span<const std::size_t> dims) {
  std::size_t n = 0;
  for (auto d : dims) n += d >= 2 ? d - 2 : 0;
  return n;
}

EpisodicEnv make_hard_instance(std::span<const std::size_t> dims, const HardRewards& rewards) {
  if (dims.empty()) throw InvalidArgument("make_hard_instance: empty dims");
  for (auto d : dims) {
    if (d < 3) throw InvalidArgument("make_hard_instance: every d_h must be at least 3");
  }
  const std::size_t H = dims.size();
  for (const auto& [key, r] : rewards) {
    const auto [h, i] = key;
    if (h < 1 || h > H || i < 2 || i > dims[h - 1] - 1) {
      throw InvalidArgument("make_hard_instance: reward key (" + std::to_string(h) + ", " +
                            std::to_string(i) + ") is not an informative arm");
    }
    if (!(r >= 0.0 && r <= 1.0)) {
      throw InvalidArgument("make_hard_instance: rewards must lie in [0, 1]");
    }
  }
  constexpr std::size_t s1 = 0;
  constexpr std::size_t s2 = 1;
  EnvTables t;
  t.family = "hard";
  t.horizon = H;
  t.num_states = 2;
  t.initial_state = s1;
  t.dims.assign(dims.begin(), dims.end());
  t.features.resize(H);
  t.mean_reward.resize(H);
  t.transitions.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    const auto d = static_cast<Eigen::Index>(dims[h]);
    t.features[h].resize(2);
    t.mean_reward[h].resize(2);
    t.transitions[h].resize(2);
    // s1: action id j is a_{j+1}, feature e_{j+1}.
    for (std::size_t j = 0; j + 1 < dims[h]; ++j) {
      Vec phi = Vec::Zero(d);
      phi(static_cast<Eigen::Index>(j + 1)) = 1.0;
      t.features[h][s1].push_back(std::move(phi));
      if (j == 0) {
        t.mean_reward[h][s1].push_back(0.0);
        t.transitions[h][s1].push_back({{s1, 1.0}});
      } else {
        const auto it = rewards.find({h + 1, j + 1});
        t.mean_reward[h][s1].push_back(it == rewards.end() ? 0.0 : it->second);
        t.transitions[h][s1].push_back({{s2, 1.0}});
      }
    }
    // s2: only a_0, feature e_0, absorbing, no reward.
    Vec phi0 = Vec::Zero(d);
    phi0(0) = 1.0;
    t.features[h][s2].push_back(std::move(phi0));
    t.mean_reward[h][s2].push_back(0.0);
    t.transitions[h][s2].push_back({{s2, 1.0}});
  }
  return EpisodicEnv(std::move(t));
}

HardRewards sample_hard_rewards(std::span<const std::size_t> dims, std::uint64_t seed) {
  Stream rng(seed, 0, 1, StreamTag::kEnvGen);
  HardRewards out;
  for (std::size_t h = 0; h < dims.size(); ++h) {
    for (std::size_t i = 2; i + 1 <= dims[h]; ++i) {
      out[{h + 1, i}] = rng.uniform(0.1, 0.9);
    }
  }
  return out;
}

EpisodicEnv make_linear_bandit(const Vec& theta_star, std::span<const Vec> arms,
                               double noise_std) {
  if (arms.empty()) throw InvalidArgument("make_linear_bandit: no arms");
  const auto d = theta_star.size();
  if (d == 0) throw InvalidArgument("make_linear_bandit: empty theta*");
  EnvTables t;
  t.family = "linear_bandit";
  t.horizon = 1;
  t.num_states = 1;
  t.initial_state = 0;
  t.dims = {static_cast<std::size_t>(d)};
  t.noise_std = noise_std;
  t.features.assign(1, std::vector<std::vector<Vec>>(1));
  t.mean_reward.assign(1, std::vector<std::vector<double>>(1));
  t.transitions.assign(1, std::vector<std::vector<std::vector<Transition>>>(1));
  for (const auto& arm : arms) {
    if (arm.size() != d) throw InvalidArgument("make_linear_bandit: arm dimension mismatch");
    if (arm.norm() > 1.0 + kNormTol) throw InvalidArgument("make_linear_bandit: arm norm > 1");
    const double mean = arm.dot(theta_star);
    if (!(mean >= 0.0 && mean <= 1.0)) {
      throw InvalidArgument("make_linear_bandit: arm mean reward outside [0, 1]");
    }
    t.features[0][0].push_back(arm);
    t.mean_reward[0][0].push_back(mean);
    t.transitions[0][0].push_back({{0, 1.0}});
  }
  return EpisodicEnv(std::move(t));
}

EpisodicEnv make_glm_env(const EpisodicEnv& base, const LinkFunction& link,
                         const std::optional<Vec>& theta_star) {
  if (link.is_identity()) return base;
  if (base.horizon() != 1) {
    throw InvalidArgument("make_glm_env: non-identity links need a single-layer base");
  }
  if (!theta_star || static_cast<std::size_t>(theta_star->size()) != base.dim(0)) {
    throw InvalidArgument("make_glm_env: theta* of dimension d_1 required");
  }
  if (theta_star->norm() > 1.0 + kNormTol) {
    throw InvalidArgument("make_glm_env: theta* must lie in the unit ball");
  }
  EnvTables t = base.tables();
  t.family = base.family() + "+" + link.name();
  for (std::size_t s = 0; s < t.num_states; ++s) {
    for (std::size_t a = 0; a < t.features[0][s].size(); ++a) {
      t.mean_reward[0][s][a] = link(t.features[0][s][a].dot(*theta_star));
    }
  }
  return EpisodicEnv(std::move(t));
}

}  // namespace lowswitch
