#include "lowswitch/eleanor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lowswitch/errors.hpp"
#include "lowswitch/rng.hpp"
#include "lowswitch/switching.hpp"

namespace lowswitch {

// ---- confidence schedule ----------------------------------------------

ConfidenceSchedule::ConfidenceSchedule(std::size_t episodes, double delta, double ibe,
                                       std::vector<std::size_t> dims)
    : episodes_(episodes), delta_(delta), ibe_(ibe), dims_(std::move(dims)) {
  if (episodes_ == 0) throw InvalidArgument("schedule: K must be positive");
  if (!(delta_ > 0.0 && delta_ < 1.0)) throw InvalidArgument("schedule: delta must be in (0, 1)");
  if (ibe_ < 0.0) throw InvalidArgument("schedule: inherent Bellman error must be >= 0");
  if (dims_.empty()) throw InvalidArgument("schedule: empty dims");
}

void ConfidenceSchedule::check(std::size_t layer, std::size_t k) const {
  if (layer >= dims_.size()) {
    throw InvalidArgument("schedule: layer " + std::to_string(layer) + " out of range");
  }
  if (k < 1 || k > episodes_) {
    throw InvalidArgument("schedule: episode " + std::to_string(k) + " out of range");
  }
}

double ConfidenceSchedule::sqrt_beta(std::size_t layer, std::size_t k) const {
  check(layer, k);
  const double d = static_cast<double>(dims_[layer]);
  const double d_next = layer + 1 < dims_.size() ? static_cast<double>(dims_[layer + 1]) : 1.0;
  const double kk = static_cast<double>(k);
  const double H = static_cast<double>(dims_.size());
  const double inner = d * std::log(1.0 + kk / d) +
                       2.0 * d_next * std::log(1.0 + 4.0 * std::sqrt(kk * d)) +
                       std::log(2.0 * static_cast<double>(episodes_) * H / delta_);
  return std::sqrt(inner) + 1.0;
}

double ConfidenceSchedule::beta(std::size_t layer, std::size_t k) const {
  const double s = sqrt_beta(layer, k);
  return s * s;
}

double ConfidenceSchedule::alpha(std::size_t layer, std::size_t k) const {
  const double s = sqrt_beta(layer, k) + std::sqrt(static_cast<double>(k)) * ibe_ +
                   std::sqrt(static_cast<double>(dims_[layer]));
  return s * s;
}

// ---- building blocks --------------------------------------------------

std::vector<double> state_values(const EpisodicEnv& env, std::size_t layer, const Vec& theta) {
  std::vector<double> v(env.num_states());
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < env.num_actions(layer, s); ++a) {
      best = std::max(best, env.feature(layer, s, a).dot(theta));
    }
    v[s] = best;
  }
  return v;
}

Vec lsvi_backup(const EpisodicEnv& env, const LayerHistory& history,
                const CovarianceAccumulator& acc, std::span<const double> next_values) {
  const std::size_t h = history.layer();
  if (next_values.size() != env.num_states()) {
    throw InvalidArgument("lsvi_backup: next values must cover every state");
  }
  std::vector<WeightedRidgeTerm> terms;
  for (std::size_t s = 0; s < history.num_states(); ++s) {
    for (std::size_t a = 0; a < history.num_actions(s); ++a) {
      const auto& c = history.cell(s, a);
      if (c.count == 0.0) continue;
      double y = c.reward_sum;
      for (std::size_t n = 0; n < c.next_count.size(); ++n) y += c.next_count[n] * next_values[n];
      terms.push_back({env.feature(h, s, a), c.count, y});
    }
  }
  return ridge_solve(acc, terms);
}

bool theta_feasible(const EpisodicEnv& env, std::size_t layer, const Vec& theta, double tol) {
  if (theta.norm() > std::sqrt(static_cast<double>(env.dim(layer))) + tol) return false;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    for (std::size_t a = 0; a < env.num_actions(layer, s); ++a) {
      if (std::abs(env.feature(layer, s, a).dot(theta)) > 1.0 + tol) return false;
    }
  }
  return true;
}

double feasible_step(const EpisodicEnv& env, std::size_t layer, const Vec& base, const Vec& dir) {
  constexpr double kTol = 1e-12;
  if (!theta_feasible(env, layer, base, kTol)) return -1.0;
  double t = 1.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    for (std::size_t a = 0; a < env.num_actions(layer, s); ++a) {
      const Vec& phi = env.feature(layer, s, a);
      const double c = std::clamp(phi.dot(base), -1.0, 1.0);
      const double g = phi.dot(dir);
      if (g > 0.0) t = std::min(t, (1.0 - c) / g);
      if (g < 0.0) t = std::min(t, (1.0 + c) / -g);
    }
  }
  const double cap = static_cast<double>(env.dim(layer));
  if ((base + t * dir).squaredNorm() > cap) {
    const double qa = dir.squaredNorm();
    const double qb = base.dot(dir);
    const double qc = std::min(0.0, base.squaredNorm() - cap);
    const double root = (-qb + std::sqrt(std::max(0.0, qb * qb - qa * qc))) / qa;
    t = std::min(t, root);
  }
  return std::clamp(t, 0.0, 1.0);
}

namespace {

// Dykstra's alternating projection onto {|phi^T theta| <= 1 on the grid} and
// the sqrt(d) ball, followed by a radial shrink that makes the result
// exactly feasible.
Vec project_feasible(const EpisodicEnv& env, std::size_t layer, const Vec& theta) {
  std::vector<const Vec*> slabs;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    for (std::size_t a = 0; a < env.num_actions(layer, s); ++a) {
      const Vec& phi = env.feature(layer, s, a);
      if (phi.squaredNorm() > 0.0) slabs.push_back(&phi);
    }
  }
  const double radius = std::sqrt(static_cast<double>(env.dim(layer)));
  std::vector<Vec> corr(slabs.size() + 1, Vec::Zero(theta.size()));
  Vec x = theta;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    const Vec before = x;
    for (std::size_t i = 0; i < slabs.size(); ++i) {
      const Vec z = x + corr[i];
      const Vec& phi = *slabs[i];
      const double c = phi.dot(z);
      Vec y = z;
      if (std::abs(c) > 1.0) y -= (c - std::copysign(1.0, c)) / phi.squaredNorm() * phi;
      corr[i] = z - y;
      x = y;
    }
    const Vec z = x + corr.back();
    const double n = z.norm();
    const Vec y = n > radius ? Vec(z * (radius / n)) : z;
    corr.back() = z - y;
    x = y;
    if ((x - before).lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  const double t = feasible_step(env, layer, Vec::Zero(theta.size()), x);
  return t * x;
}

struct ClipResult {
  Vec theta_bar;
  Vec xi;
};

// theta_hat + xi pulled back toward the feasible anchor (theta_hat itself when
// feasible) until it satisfies the layer's feasibility constraints.
ClipResult clip_to_feasible(const EpisodicEnv& env, std::size_t layer, const Vec& theta_hat,
                            const Vec& xi) {
  Vec anchor = theta_hat;
  if (!theta_feasible(env, layer, theta_hat, 1e-12)) {
    anchor = project_feasible(env, layer, theta_hat);
  }
  const Vec dir = theta_hat + xi - anchor;
  const double t = std::max(0.0, feasible_step(env, layer, anchor, dir));
  ClipResult out;
  out.theta_bar = anchor + t * dir;
  out.xi = out.theta_bar - theta_hat;
  return out;
}

double sigma_norm(const CovarianceAccumulator& acc, const Vec& xi) {
  return std::sqrt(std::max(0.0, xi.dot(acc.matrix() * xi)));
}

std::size_t argmax_action(const EpisodicEnv& env, std::size_t layer, std::size_t s,
                          const Vec& theta) {
  std::size_t best = 0;
  double best_v = env.feature(layer, s, 0).dot(theta);
  for (std::size_t a = 1; a < env.num_actions(layer, s); ++a) {
    const double v = env.feature(layer, s, a).dot(theta);
    if (v > best_v) {
      best_v = v;
      best = a;
    }
  }
  return best;
}

void mark_degraded(PlanParams& plan, std::span<const CovarianceAccumulator> accs,
                   std::span<const double> alphas) {
  for (std::size_t h = 0; h < plan.xi.size(); ++h) {
    if (sigma_norm(accs[h], plan.xi[h]) > std::sqrt(alphas[h]) + 1e-9) plan.degraded = true;
  }
}

// d(planned value)/d(theta_bar_h) for every layer, holding the argmax
// actions of the current plan fixed.
std::vector<Vec> sensitivities(const EpisodicEnv& env, std::span<const CovarianceAccumulator> accs,
                               std::span<const LayerHistory> histories, const PlanParams& plan) {
  const std::size_t H = env.horizon();
  std::vector<Vec> g(H);
  const std::size_t s1 = env.initial_state();
  g[0] = env.feature(0, s1, argmax_action(env, 0, s1, plan.theta_bar[0]));
  for (std::size_t h = 0; h + 1 < H; ++h) {
    const Vec w = accs[h].inverse() * g[h];
    std::vector<double> mass(env.num_states(), 0.0);
    const auto& hist = histories[h];
    for (std::size_t s = 0; s < hist.num_states(); ++s) {
      for (std::size_t a = 0; a < hist.num_actions(s); ++a) {
        const auto& c = hist.cell(s, a);
        if (c.count == 0.0) continue;
        const double coef = env.feature(h, s, a).dot(w);
        for (std::size_t n = 0; n < mass.size(); ++n) mass[n] += coef * c.next_count[n];
      }
    }
    g[h + 1] = Vec::Zero(static_cast<Eigen::Index>(env.dim(h + 1)));
    for (std::size_t n = 0; n < mass.size(); ++n) {
      if (mass[n] == 0.0) continue;
      g[h + 1] += mass[n] * env.feature(h + 1, n, argmax_action(env, h + 1, n, plan.theta_bar[h + 1]));
    }
  }
  return g;
}

// Radial projection onto {||xi||_Sigma <= r}; exact in the Sigma metric.
Vec project_ellipsoid(const CovarianceAccumulator& acc, const Vec& xi, double radius) {
  const double n = sigma_norm(acc, xi);
  if (n <= radius || n == 0.0) return xi;
  return xi * (radius / n);
}

// Uniform draw from {||xi||_Sigma <= r}.
Vec sample_ellipsoid(const CovarianceAccumulator& acc, double radius, Stream& rng) {
  const auto d = static_cast<Eigen::Index>(acc.dim());
  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  const double zn = z.norm();
  if (zn == 0.0) return Vec::Zero(d);
  z *= std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / zn;
  // Sigma = L L^T; xi = r L^{-T} z has ||xi||_Sigma = r ||z||.
  Eigen::LLT<Mat> llt(acc.matrix());
  return radius * llt.matrixU().solve(z);
}

}  // namespace

UcbChoice bandit_ucb_optimum(std::span<const Vec> arms, const CovarianceAccumulator& acc,
                             const Vec& theta_hat, double alpha) {
  if (arms.empty()) throw InvalidArgument("bandit planner: empty arm set");
  const double radius = std::sqrt(alpha);
  UcbChoice best;
  best.value = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const double v = arms[a].dot(theta_hat) + radius * acc.mahalanobis_inv(arms[a]);
    if (v > best.value) {
      best.value = v;
      best.arm = a;
    }
  }
  const Vec& phi = arms[best.arm];
  const double n = acc.mahalanobis_inv(phi);
  best.xi = n > 0.0 ? Vec(radius * (acc.inverse() * phi) / n) : Vec(Vec::Zero(phi.size()));
  return best;
}

PlanParams plan_bandit_exact(const EpisodicEnv& env, const CovarianceAccumulator& acc,
                             const LayerHistory& history, double alpha) {
  if (env.horizon() != 1) throw InvalidArgument("bandit planner: requires H = 1");
  const std::vector<double> zero(env.num_states(), 0.0);
  const Vec theta_hat = lsvi_backup(env, history, acc, zero);
  const std::size_t s1 = env.initial_state();
  std::vector<Vec> arms;
  for (std::size_t a = 0; a < env.num_actions(0, s1); ++a) arms.push_back(env.feature(0, s1, a));
  const UcbChoice choice = bandit_ucb_optimum(arms, acc, theta_hat, alpha);
  const ClipResult clipped = clip_to_feasible(env, 0, theta_hat, choice.xi);

  PlanParams plan;
  plan.theta_hat = {theta_hat};
  plan.xi = {clipped.xi};
  plan.theta_bar = {clipped.theta_bar};
  plan.ellipsoid_value = choice.value;
  plan.planned_value = state_values(env, 0, clipped.theta_bar)[s1];
  plan.value_trace = {plan.planned_value};
  const double a[1] = {alpha};
  mark_degraded(plan, std::span<const CovarianceAccumulator>(&acc, 1), a);
  return plan;
}

PlanParams evaluate_perturbations(const EpisodicEnv& env,
                                  std::span<const CovarianceAccumulator> accs,
                                  std::span<const LayerHistory> histories,
                                  std::span<const Vec> xis) {
  const std::size_t H = env.horizon();
  if (accs.size() != H || histories.size() != H || xis.size() != H) {
    throw InvalidArgument("evaluate_perturbations: need one accumulator, history, xi per layer");
  }
  PlanParams plan;
  plan.theta_hat.resize(H);
  plan.xi.resize(H);
  plan.theta_bar.resize(H);
  std::vector<double> next(env.num_states(), 0.0);
  for (std::size_t h = H; h-- > 0;) {
    plan.theta_hat[h] = lsvi_backup(env, histories[h], accs[h], next);
    ClipResult c = clip_to_feasible(env, h, plan.theta_hat[h], xis[h]);
    plan.theta_bar[h] = std::move(c.theta_bar);
    plan.xi[h] = std::move(c.xi);
    next = state_values(env, h, plan.theta_bar[h]);
  }
  plan.planned_value = next[env.initial_state()];
  plan.ellipsoid_value = plan.planned_value;
  return plan;
}

PlanParams plan_alternating(const EpisodicEnv& env, std::span<const CovarianceAccumulator> accs,
                            std::span<const LayerHistory> histories,
                            std::span<const double> alphas, const PlannerOptions& options,
                            std::uint64_t seed, std::uint64_t episode) {
  const std::size_t H = env.horizon();
  if (alphas.size() != H) throw InvalidArgument("plan_alternating: one alpha per layer");
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);

  PlanParams best;
  bool have_best = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    Stream rng(seed, episode, r, StreamTag::kPlanner);
    std::vector<Vec> xis(H);
    for (std::size_t h = 0; h < H; ++h) {
      xis[h] = r == 0 ? Vec(Vec::Zero(static_cast<Eigen::Index>(env.dim(h))))
                      : sample_ellipsoid(accs[h], std::sqrt(alphas[h]), rng);
    }
    PlanParams cur = evaluate_perturbations(env, accs, histories, xis);
    xis = cur.xi;
    cur.value_trace = {cur.planned_value};

    for (std::size_t it = 0; it < options.iters; ++it) {
      const double sweep_start = cur.planned_value;
      for (std::size_t h = H; h-- > 0;) {
        const Vec g = sensitivities(env, accs, histories, cur)[h];
        const Vec dir = accs[h].inverse() * g;
        const double gn = std::sqrt(std::max(0.0, g.dot(dir)));
        const double radius = std::sqrt(alphas[h]);
        if (gn == 0.0 || radius == 0.0) continue;
        const double reach = 2.0 * radius / gn;
        for (double t = 1.0; t > 0x1.0p-30; t *= 0.5) {
          std::vector<Vec> cand = xis;
          cand[h] = project_ellipsoid(accs[h], xis[h] + (t * reach) * dir, radius);
          PlanParams next = evaluate_perturbations(env, accs, histories, cand);
          if (next.planned_value > cur.planned_value + options.tol) {
            next.value_trace = std::move(cur.value_trace);
            next.value_trace.push_back(next.planned_value);
            cur = std::move(next);
            xis = cur.xi;
            break;
          }
        }
      }
      if (cur.planned_value <= sweep_start + options.tol) break;
    }
    if (!have_best || cur.planned_value > best.planned_value) {
      best = std::move(cur);
      have_best = true;
    }
  }
  best.restarts = restarts;
  mark_degraded(best, accs, alphas);
  return best;
}

TabularPolicy greedy_policy(const PlanParams& plan, const EpisodicEnv& env) {
  TabularPolicy pi;
  pi.action.resize(env.horizon());
  for (std::size_t h = 0; h < env.horizon(); ++h) {
    pi.action[h].resize(env.num_states());
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      pi.action[h][s] = argmax_action(env, h, s, plan.theta_bar[h]);
    }
  }
  return pi;
}

bool plan_invariants_hold(const PlanParams& plan, const EpisodicEnv& env,
                          std::span<const CovarianceAccumulator> accs,
                          std::span<const double> alphas) {
  const std::size_t H = env.horizon();
  if (plan.theta_bar.size() != H || plan.theta_hat.size() != H || plan.xi.size() != H) return false;
  for (std::size_t h = 0; h < H; ++h) {
    if ((plan.theta_bar[h] - (plan.theta_hat[h] + plan.xi[h])).lpNorm<Eigen::Infinity>() > 1e-12) {
      return false;
    }
    if (sigma_norm(accs[h], plan.xi[h]) > std::sqrt(alphas[h]) + 1e-9) return false;
    if (!theta_feasible(env, h, plan.theta_bar[h], 1e-9)) return false;
  }
  const double v = state_values(env, 0, plan.theta_bar[0])[env.initial_state()];
  return std::abs(v - plan.planned_value) <= 1e-12;
}

// ---- the learning loop --------------------------------------------------

namespace {

bool bellman_envelope_holds(const EpisodicEnv& env, const PlanParams& plan,
                            std::span<const CovarianceAccumulator> accs,
                            std::span<const double> alphas) {
  const std::size_t H = env.horizon();
  for (std::size_t h = 0; h < H; ++h) {
    const std::vector<double> next = h + 1 < H ? state_values(env, h + 1, plan.theta_bar[h + 1])
                                               : std::vector<double>(env.num_states(), 0.0);
    const auto backup = bellman_backup(env, h, next);
    const double radius = std::sqrt(alphas[h]);
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      for (std::size_t a = 0; a < env.num_actions(h, s); ++a) {
        const Vec& phi = env.feature(h, s, a);
        const double err = std::abs(phi.dot(plan.theta_bar[h]) - backup[s][a]);
        const double bound = env.ibe() + 2.0 * accs[h].mahalanobis_inv(phi) * radius;
        if (err > bound + 1e-9) return false;
      }
    }
  }
  return true;
}

std::size_t count_changes(const TabularPolicy& a, const TabularPolicy& b) {
  return a == b ? 0 : 1;
}

}  // namespace

RunResult run_eleanor(const EpisodicEnv& env, const EleanorOptions& options) {
  const std::size_t H = env.horizon();
  const std::size_t K = options.episodes;
  Solver solver = options.solver;
  if (solver == Solver::kAuto) solver = H == 1 ? Solver::kBanditExact : Solver::kAlternating;
  if (solver == Solver::kBanditExact && H != 1) {
    throw InvalidArgument("run_eleanor: the exact bandit planner needs H = 1");
  }
  const ConfidenceSchedule schedule(K, options.delta, env.ibe(), env.dims());

  std::vector<CovarianceAccumulator> accs;
  std::vector<LayerHistory> hists;
  for (std::size_t h = 0; h < H; ++h) {
    accs.emplace_back(env.dim(h), 1.0);
    hists.emplace_back(env, h);
  }
  SwitchController gate(env.dims(), 1.0);

  RunResult out;
  out.regret.optimal_value = optimal_value(env);
  TabularPolicy policy;
  double policy_val = 0.0;
  std::size_t b_k = 0;

  std::vector<double> logdets(H);
  for (std::size_t k = 1; k <= K; ++k) {
    for (std::size_t h = 0; h < H; ++h) logdets[h] = accs[h].logdet();
    const bool update = k == 1 || !options.gated || gate.should_switch(logdets);
    if (update) {
      std::vector<double> alphas(H);
      for (std::size_t h = 0; h < H; ++h) alphas[h] = schedule.alpha(h, k);
      PlanParams plan = solver == Solver::kBanditExact
                            ? plan_bandit_exact(env, accs[0], hists[0], alphas[0])
                            : plan_alternating(env, accs, hists, alphas, options.planner,
                                               options.seed, k);
      TabularPolicy next = greedy_policy(plan, env);
      if (k > 1) out.policy_changes += count_changes(policy, next);
      policy = std::move(next);
      policy_val = policy_value(env, policy);
      b_k = k;
      gate.record_switch(k, logdets);

      EleanorSwitchDiag diag;
      diag.episode = k;
      diag.planned_value = plan.planned_value;
      diag.optimal_value = out.regret.optimal_value;
      diag.alphas = alphas;
      for (std::size_t h = 0; h < H; ++h) diag.xi_norms.push_back(sigma_norm(accs[h], plan.xi[h]));
      diag.restarts = plan.restarts;
      diag.degraded = plan.degraded;
      diag.bellman_ok = bellman_envelope_holds(env, plan, accs, alphas);
      out.eleanor_diag.push_back(std::move(diag));
    }
    out.switched.push_back(update ? 1 : 0);
    out.logdets.push_back(logdets);
    out.regret.push(policy_val, b_k);

    Trajectory traj = run_policy(env, policy, options.seed, k);
    for (const auto& step : traj) {
      accs[step.layer].update(env.feature(step.layer, step.state, step.action));
      hists[step.layer].add(step);
    }
    if (options.record_trajectories) out.trajectories.push_back(std::move(traj));
  }
  out.switches = gate.log();
  return out;
}

}  // namespace lowswitch
