#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lowswitch/envs.hpp"
#include "lowswitch/history.hpp"
#include "lowswitch/linalg.hpp"
#include "lowswitch/link.hpp"
#include "lowswitch/run_record.hpp"

namespace lowswitch {

// Gamma := d ln(1 + K) unless overridden.
double default_gamma_cap(std::size_t dim, std::size_t episodes);

// gamma = C kappa2 / kappa1 * sqrt(1 + M + kappa2 + d^2 ln((1 + kappa2 + Gamma) / delta))
double gamma_value(std::size_t dim, std::size_t episodes, double delta, const LinkFunction& link,
                   double c, double gamma_cap);
double gamma_value(std::size_t dim, std::size_t episodes, double delta, const LinkFunction& link,
                   double c);

// `weight` copies of phi whose targets sum to target_sum (squares to target_sq_sum).
struct GlmSample {
  Vec phi;
  double weight = 0.0;
  double target_sum = 0.0;
  double target_sq_sum = 0.0;
};

enum class FitMetric {
  kGaussNewton,  // steps and projection in the Gauss-Newton metric
  kEuclidean,    // plain projected gradient
};

struct GlmFitOptions {
  double tol = 1e-8;
  std::size_t max_iters = 500;
  std::size_t random_restarts = 4;  // used for non-identity links only
  FitMetric metric = FitMetric::kGaussNewton;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

struct GlmFitResult {
  Vec theta;
  double loss = 0.0;
  std::size_t iterations = 0;
  std::size_t restart_index = 0;
  std::vector<double> loss_trace;  // of the chosen start
};

// argmin_{||theta|| <= 1} sum_tau (f(phi_tau^T theta) - y_tau)^2 by projected
// descent with Armijo backtracking (c = 1e-4, halving).
GlmFitResult glm_fit(std::span<const GlmSample> samples, const LinkFunction& link,
                     const GlmFitOptions& options = {});
GlmFitResult glm_fit(std::span<const Vec> features, std::span<const double> targets,
                     const LinkFunction& link, const GlmFitOptions& options = {});

double glm_loss(std::span<const GlmSample> samples, const LinkFunction& link, const Vec& theta);

// Per-layer estimates plus the covariance inverses frozen at the solve.
struct GlmPlan {
  std::vector<Vec> theta;
  std::vector<Mat> frozen_inverse;
  double gamma = 0.0;
  std::vector<GlmFitResult> fits;
};

// min{1, f(phi^T theta_h) + gamma ||phi||_{Sigma_h^-1}}
double q_value(const GlmPlan& plan, const LinkFunction& link, std::size_t layer, const Vec& phi);
double bonus(const GlmPlan& plan, std::size_t layer, const Vec& phi);

// Q_h(s, .) for every state and action of a layer.
std::vector<std::vector<double>> q_table(const GlmPlan& plan, const LinkFunction& link,
                                         const EpisodicEnv& env, std::size_t layer);

GlmPlan backward_solve(const EpisodicEnv& env, std::span<const LayerHistory> histories,
                       std::span<const CovarianceAccumulator> accs, const LinkFunction& link,
                       double gamma, const GlmFitOptions& fit_options);

TabularPolicy greedy_q_policy(const GlmPlan& plan, const LinkFunction& link,
                              const EpisodicEnv& env);

struct GlmOptions {
  std::size_t episodes = 1;
  double delta = 0.05;
  double c = 1.0;
  double gamma_cap = -1.0;  // negative: d ln(1 + K)
  bool gated = true;
  GlmFitOptions fit;
  std::uint64_t seed = 0;
  bool record_trajectories = false;
};

RunResult run_glm(const EpisodicEnv& env, const LinkFunction& link, const GlmOptions& options);

}  // namespace lowswitch
