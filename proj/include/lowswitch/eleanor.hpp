#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lowswitch/envs.hpp"
#include "lowswitch/history.hpp"
#include "lowswitch/linalg.hpp"
#include "lowswitch/run_record.hpp"

namespace lowswitch {

// Confidence radii for the global-optimism planner. Layers are 0-based here;
// the last layer's successor dimension is taken as 1.
class ConfidenceSchedule {
 public:
  ConfidenceSchedule(std::size_t episodes, double delta, double ibe, std::vector<std::size_t> dims);

  // sqrt(beta) = sqrt(d_h ln(1 + k/d_h) + 2 d_{h+1} ln(1 + 4 sqrt(k d_h)) + ln(2KH/delta)) + 1
  double beta(std::size_t layer, std::size_t k) const;
  // sqrt(alpha) = sqrt(beta) + sqrt(k) I + sqrt(d_h)
  double alpha(std::size_t layer, std::size_t k) const;

  std::size_t episodes() const { return episodes_; }
  std::size_t horizon() const { return dims_.size(); }
  double delta() const { return delta_; }
  double ibe() const { return ibe_; }

 private:
  double sqrt_beta(std::size_t layer, std::size_t k) const;
  void check(std::size_t layer, std::size_t k) const;

  std::size_t episodes_;
  double delta_;
  double ibe_;
  std::vector<std::size_t> dims_;
};

struct PlanParams {
  std::vector<Vec> theta_hat;
  std::vector<Vec> xi;
  std::vector<Vec> theta_bar;
  double planned_value = 0.0;    // max_a phi_1(s_1, a)^T theta_bar_1
  double ellipsoid_value = 0.0;  // optimum before the feasibility clip
  bool degraded = false;
  std::size_t restarts = 0;
  std::vector<double> value_trace;  // accepted objective values of the winning restart
};

enum class Solver { kAuto, kBanditExact, kAlternating };

struct PlannerOptions {
  std::size_t restarts = 8;
  std::size_t iters = 200;
  double tol = 1e-8;
};

// V_h(theta)(s) = max_a phi_h(s,a)^T theta for every state.
std::vector<double> state_values(const EpisodicEnv& env, std::size_t layer, const Vec& theta);

// Ridge backup of r + next_values(s') onto layer features.
Vec lsvi_backup(const EpisodicEnv& env, const LayerHistory& history,
                const CovarianceAccumulator& acc, std::span<const double> next_values);

// Largest t in [0, 1] with base + t * dir inside the feasible set
//   |phi^T theta| <= 1 on the layer grid,  ||theta||_2 <= sqrt(d_h).
// Negative when `base` itself is infeasible.
double feasible_step(const EpisodicEnv& env, std::size_t layer, const Vec& base, const Vec& dir);
bool theta_feasible(const EpisodicEnv& env, std::size_t layer, const Vec& theta, double tol);

struct UcbChoice {
  std::size_t arm = 0;
  double value = 0.0;
  Vec xi;
};

// argmax_a phi_a^T theta_hat + sqrt(alpha) ||phi_a||_{Sigma^-1}, lowest index on ties,
// with the xi on the ellipsoid boundary that attains it.
UcbChoice bandit_ucb_optimum(std::span<const Vec> arms, const CovarianceAccumulator& acc,
                             const Vec& theta_hat, double alpha);

// Exact single-layer planner.
PlanParams plan_bandit_exact(const EpisodicEnv& env, const CovarianceAccumulator& acc,
                             const LayerHistory& history, double alpha);

// Backward LSVI with fixed perturbations: theta_bar_h = theta_hat_h + xi_h,
// each layer clipped radially toward theta_hat_h into the feasible set.
PlanParams evaluate_perturbations(const EpisodicEnv& env,
                                  std::span<const CovarianceAccumulator> accs,
                                  std::span<const LayerHistory> histories,
                                  std::span<const Vec> xis);

// Multi-start coordinate ascent over (xi_H, ..., xi_1).
PlanParams plan_alternating(const EpisodicEnv& env, std::span<const CovarianceAccumulator> accs,
                            std::span<const LayerHistory> histories,
                            std::span<const double> alphas, const PlannerOptions& options,
                            std::uint64_t seed, std::uint64_t episode);

// argmax_a phi_h(s,a)^T theta_bar_h, lowest index on ties.
TabularPolicy greedy_policy(const PlanParams& plan, const EpisodicEnv& env);

// Every structural invariant of a returned plan.
bool plan_invariants_hold(const PlanParams& plan, const EpisodicEnv& env,
                          std::span<const CovarianceAccumulator> accs,
                          std::span<const double> alphas);

struct EleanorOptions {
  std::size_t episodes = 1;
  double delta = 0.05;
  bool gated = true;
  Solver solver = Solver::kAuto;
  PlannerOptions planner;
  std::uint64_t seed = 0;
  bool record_trajectories = false;
};

RunResult run_eleanor(const EpisodicEnv& env, const EleanorOptions& options);

}  // namespace lowswitch
