#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lowswitch/envs.hpp"
#include "lowswitch/switching.hpp"

namespace lowswitch {

// Exact per-episode regret V*_1(s_1) - V^{pi_k}_1(s_1).
struct RegretRecord {
  double optimal_value = 0.0;
  std::vector<double> instant;
  std::vector<double> cumulative;
  std::vector<std::size_t> policy_episode;  // b_k: episode at which pi_k was computed

  void push(double policy_val, std::size_t b_k) {
    const double r = optimal_value - policy_val;
    instant.push_back(r);
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + r);
    policy_episode.push_back(b_k);
  }
  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

struct EleanorSwitchDiag {
  std::size_t episode = 0;
  double planned_value = 0.0;
  double optimal_value = 0.0;
  std::vector<double> xi_norms;  // ||xi_h||_{Sigma_h}
  std::vector<double> alphas;
  std::size_t restarts = 0;
  bool degraded = false;
  // |Qbar_h - T_h Qbar_{h+1}| <= I + 2 ||phi||_{Sigma^-1} sqrt(alpha) at every grid point.
  bool bellman_ok = true;
};

struct GlmSwitchDiag {
  std::size_t episode = 0;
  double planned_value = 0.0;   // max_a Q_1(s_1, a)
  double q_at_optimal = 0.0;    // Q_1(s_1, pi*(s_1))
  double q_star = 0.0;          // Q*_1(s_1, pi*(s_1))
  std::vector<double> fit_loss;
  std::vector<std::size_t> fit_iterations;
  std::vector<std::size_t> fit_restart;
};

struct RunResult {
  RegretRecord regret;
  SwitchLog switches;
  std::vector<std::uint8_t> switched;              // per episode
  std::vector<std::vector<double>> logdets;        // per episode, at the gate check
  std::vector<EleanorSwitchDiag> eleanor_diag;
  std::vector<GlmSwitchDiag> glm_diag;
  std::vector<Trajectory> trajectories;            // only when requested
  std::size_t policy_changes = 0;                  // episodes whose policy differs from the previous one
  double bonus_sum = 0.0;                          // GLM: sum_k sum_h gamma ||phi||_{(Sigma^{b_k})^-1}
  double bonus_bound = 0.0;                        // H gamma sqrt(4 K d ln(1 + K))
};

}  // namespace lowswitch
