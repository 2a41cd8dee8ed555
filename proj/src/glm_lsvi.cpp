#include "lowswitch/glm_lsvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lowswitch/errors.hpp"
#include "lowswitch/rng.hpp"
#include "lowswitch/switching.hpp"

namespace lowswitch {

double default_gamma_cap(std::size_t dim, std::size_t episodes) {
  return static_cast<double>(dim) * std::log(1.0 + static_cast<double>(episodes));
}

double gamma_value(std::size_t dim, std::size_t /*episodes*/, double delta,
                   const LinkFunction& link, double c, double gamma_cap) {
  if (!(c > 0.0)) throw InvalidArgument("gamma_value: C must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("gamma_value: delta must be in (0, 1]");
  const double k1 = link.kappa1();
  const double k2 = link.kappa2();
  const double d = static_cast<double>(dim);
  const double inner =
      1.0 + link.curvature_bound() + k2 + d * d * std::log((1.0 + k2 + gamma_cap) / delta);
  return c * k2 / k1 * std::sqrt(inner);
}

double gamma_value(std::size_t dim, std::size_t episodes, double delta, const LinkFunction& link,
                   double c) {
  return gamma_value(dim, episodes, delta, link, c, default_gamma_cap(dim, episodes));
}

// ---- constrained GLM fit ------------------------------------------------

namespace {

struct Eval {
  double loss = 0.0;
  Vec grad;
  Mat gauss_newton;
};

Eval evaluate(std::span<const GlmSample> samples, const LinkFunction& link, const Vec& theta,
              bool want_curvature) {
  const auto d = theta.size();
  Eval e;
  e.grad = Vec::Zero(d);
  if (want_curvature) e.gauss_newton = Mat::Zero(d, d);
  for (const auto& s : samples) {
    const double z = s.phi.dot(theta);
    const double fz = link(z);
    const double fp = link.derivative(z);
    e.loss += s.weight * fz * fz - 2.0 * fz * s.target_sum + s.target_sq_sum;
    e.grad += (2.0 * fp * (s.weight * fz - s.target_sum)) * s.phi;
    if (want_curvature) e.gauss_newton.noalias() += (2.0 * s.weight * fp * fp) * s.phi * s.phi.transpose();
  }
  if (!std::isfinite(e.loss)) throw InternalError("glm_fit: non-finite loss");
  return e;
}

Vec project_ball(const Vec& v) {
  const double n = v.norm();
  return n > 1.0 ? Vec(v / n) : v;
}

// argmin_{||x|| <= 1} (x - v)^T G (x - v), G symmetric positive definite.
Vec project_ball_metric(const Mat& g, const Vec& v) {
  if (v.norm() <= 1.0) return v;
  Eigen::SelfAdjointEigenSolver<Mat> eig(g);
  const Vec lambda = eig.eigenvalues();
  const Vec b = lambda.cwiseProduct(eig.eigenvectors().transpose() * v);
  auto norm_at = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double c = b(i) / (lambda(i) + mu);
      s += c * c;
    }
    return std::sqrt(s);
  };
  double lo = 0.0;
  double hi = std::max(b.norm(), 1e-300);
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (norm_at(mid) > 1.0 ? lo : hi) = mid;
  }
  Vec coeffs(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) coeffs(i) = b(i) / (lambda(i) + hi);
  return project_ball(eig.eigenvectors() * coeffs);
}

GlmFitResult fit_from(std::span<const GlmSample> samples, const LinkFunction& link,
                      const GlmFitOptions& options, Vec theta) {
  constexpr double kArmijo = 1e-4;
  const bool newton = options.metric == FitMetric::kGaussNewton;
  GlmFitResult out;
  Eval cur = evaluate(samples, link, theta, newton);
  out.loss_trace.push_back(cur.loss);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < options.max_iters; ++it) {
    const double pg = (theta - project_ball(theta - cur.grad)).norm();
    if (pg <= options.tol) break;

    Vec direction;
    bool use_arc = true;  // Euclidean: backtrack along the projection arc
    if (newton) {
      const auto d = theta.size();
      const double scale = cur.gauss_newton.trace() / static_cast<double>(d);
      const Mat g = cur.gauss_newton + (1e-13 * scale + 1e-15) * Mat::Identity(d, d);
      const Vec v = theta - g.ldlt().solve(cur.grad);
      direction = project_ball_metric(g, v) - theta;
      use_arc = !(cur.grad.dot(direction) < 0.0);
    }

    bool accepted = false;
    Vec next;
    Eval next_eval;
    double t = use_arc ? std::min(1.0, 2.0 * step) : 1.0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      next = use_arc ? project_ball(theta - t * cur.grad) : Vec(theta + t * direction);
      next_eval = evaluate(samples, link, next, newton);
      const double decrease = cur.grad.dot(next - theta);
      // Strict decrease: at the floating-point floor no step qualifies and the
      // fit stops instead of cycling on equal losses.
      if (next_eval.loss < cur.loss && next_eval.loss <= cur.loss + kArmijo * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no representable decrease left
    if (use_arc) step = t;
    theta = std::move(next);
    cur = std::move(next_eval);
    out.loss_trace.push_back(cur.loss);
  }
  out.theta = std::move(theta);
  out.loss = cur.loss;
  out.iterations = it;
  return out;
}

Vec random_in_ball(Eigen::Index d, Stream& rng) {
  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  const double n = z.norm();
  if (n == 0.0) return Vec::Zero(d);
  return z * (std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / n);
}

}  // namespace

double glm_loss(std::span<const GlmSample> samples, const LinkFunction& link, const Vec& theta) {
  return evaluate(samples, link, theta, false).loss;
}

GlmFitResult glm_fit(std::span<const GlmSample> samples, const LinkFunction& link,
                     const GlmFitOptions& options) {
  if (samples.empty()) {
    GlmFitResult out;
    out.theta = Vec::Zero(0);
    return out;
  }
  const auto d = samples.front().phi.size();
  for (const auto& s : samples) {
    if (s.phi.size() != d) throw InvalidArgument("glm_fit: ragged features");
    if (s.phi.norm() > 1.0 + 1e-12) throw InvalidArgument("glm_fit: feature norm exceeds 1");
  }
  GlmFitResult best = fit_from(samples, link, options, Vec::Zero(d));
  if (!link.is_identity()) {
    for (std::size_t r = 1; r <= options.random_restarts; ++r) {
      Stream rng(options.seed, options.stream, r, StreamTag::kGlmRestart);
      GlmFitResult cand = fit_from(samples, link, options, random_in_ball(d, rng));
      if (cand.loss < best.loss) {
        best = std::move(cand);
        best.restart_index = r;
      }
    }
  }
  return best;
}

GlmFitResult glm_fit(std::span<const Vec> features, std::span<const double> targets,
                     const LinkFunction& link, const GlmFitOptions& options) {
  if (features.size() != targets.size()) {
    throw InvalidArgument("glm_fit: features and targets differ in length");
  }
  std::vector<GlmSample> samples;
  samples.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    samples.push_back({features[i], 1.0, targets[i], targets[i] * targets[i]});
  }
  GlmFitResult out = glm_fit(samples, link, options);
  if (samples.empty() && !features.empty()) out.theta = Vec::Zero(features.front().size());
  return out;
}

// ---- optimistic Q ---------------------------------------------------------

double bonus(const GlmPlan& plan, std::size_t layer, const Vec& phi) {
  return plan.gamma * std::sqrt(std::max(0.0, phi.dot(plan.frozen_inverse[layer] * phi)));
}

double q_value(const GlmPlan& plan, const LinkFunction& link, std::size_t layer, const Vec& phi) {
  return std::min(1.0, link(phi.dot(plan.theta[layer])) + bonus(plan, layer, phi));
}

std::vector<std::vector<double>> q_table(const GlmPlan& plan, const LinkFunction& link,
                                         const EpisodicEnv& env, std::size_t layer) {
  std::vector<std::vector<double>> q(env.num_states());
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    for (std::size_t a = 0; a < env.num_actions(layer, s); ++a) {
      q[s].push_back(q_value(plan, link, layer, env.feature(layer, s, a)));
    }
  }
  return q;
}

GlmPlan backward_solve(const EpisodicEnv& env, std::span<const LayerHistory> histories,
                       std::span<const CovarianceAccumulator> accs, const LinkFunction& link,
                       double gamma, const GlmFitOptions& fit_options) {
  const std::size_t H = env.horizon();
  if (histories.size() != H || accs.size() != H) {
    throw InvalidArgument("backward_solve: need one history and accumulator per layer");
  }
  GlmPlan plan;
  plan.gamma = gamma;
  plan.theta.resize(H);
  plan.frozen_inverse.resize(H);
  plan.fits.resize(H);
  std::vector<double> next(env.num_states(), 0.0);  // max_a Q_{h+1}(s', a)
  for (std::size_t h = H; h-- > 0;) {
    const auto& hist = histories[h];
    std::vector<GlmSample> samples;
    for (std::size_t s = 0; s < hist.num_states(); ++s) {
      for (std::size_t a = 0; a < hist.num_actions(s); ++a) {
        const auto& c = hist.cell(s, a);
        if (c.count == 0.0) continue;
        double sum = c.reward_sum;
        double sq = c.reward_sq_sum;
        for (std::size_t n = 0; n < next.size(); ++n) {
          sum += c.next_count[n] * next[n];
          sq += 2.0 * c.next_reward_sum[n] * next[n] + c.next_count[n] * next[n] * next[n];
        }
        samples.push_back({env.feature(h, s, a), c.count, sum, sq});
      }
    }
    GlmFitOptions opts = fit_options;
    opts.stream = fit_options.stream * 64 + h;
    GlmFitResult fit = glm_fit(samples, link, opts);
    if (fit.theta.size() == 0) fit.theta = Vec::Zero(static_cast<Eigen::Index>(env.dim(h)));
    plan.theta[h] = fit.theta;
    plan.frozen_inverse[h] = accs[h].inverse();
    plan.fits[h] = std::move(fit);

    const auto q = q_table(plan, link, env, h);
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      next[s] = *std::max_element(q[s].begin(), q[s].end());
    }
  }
  return plan;
}

TabularPolicy greedy_q_policy(const GlmPlan& plan, const LinkFunction& link,
                              const EpisodicEnv& env) {
  TabularPolicy pi;
  pi.action.resize(env.horizon());
  for (std::size_t h = 0; h < env.horizon(); ++h) {
    const auto q = q_table(plan, link, env, h);
    pi.action[h].resize(env.num_states());
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      std::size_t best = 0;
      for (std::size_t a = 1; a < q[s].size(); ++a) {
        if (q[s][a] > q[s][best]) best = a;
      }
      pi.action[h][s] = best;
    }
  }
  return pi;
}

RunResult run_glm(const EpisodicEnv& env, const LinkFunction& link, const GlmOptions& options) {
  const std::size_t H = env.horizon();
  const std::size_t K = options.episodes;
  if (K == 0) throw InvalidArgument("run_glm: K must be positive");
  const std::size_t d = env.dim(0);
  for (auto dh : env.dims()) {
    if (dh != d) throw InvalidArgument("run_glm: every layer must share one feature dimension");
  }
  const double cap = options.gamma_cap >= 0.0 ? options.gamma_cap : default_gamma_cap(d, K);
  const double gamma = gamma_value(d, K, options.delta, link, options.c, cap);

  std::vector<CovarianceAccumulator> accs;
  std::vector<LayerHistory> hists;
  for (std::size_t h = 0; h < H; ++h) {
    accs.emplace_back(d, 1.0);
    hists.emplace_back(env, h);
  }
  SwitchController gate(env.dims(), 1.0);

  RunResult out;
  out.regret.optimal_value = optimal_value(env);
  const auto qstar = optimal_q(env);
  const std::size_t s1 = env.initial_state();
  const std::size_t best_first = optimal_policy(env)(0, s1);

  GlmPlan plan;
  TabularPolicy policy;
  double policy_val = 0.0;
  std::size_t b_k = 0;
  std::vector<double> logdets(H);
  for (std::size_t k = 1; k <= K; ++k) {
    for (std::size_t h = 0; h < H; ++h) logdets[h] = accs[h].logdet();
    const bool update = k == 1 || !options.gated || gate.should_switch(logdets);
    if (update) {
      GlmFitOptions fit = options.fit;
      fit.seed = options.seed;
      fit.stream = k;
      plan = backward_solve(env, hists, accs, link, gamma, fit);
      TabularPolicy next = greedy_q_policy(plan, link, env);
      if (k > 1 && !(next == policy)) ++out.policy_changes;
      policy = std::move(next);
      policy_val = policy_value(env, policy);
      b_k = k;
      gate.record_switch(k, logdets);

      GlmSwitchDiag diag;
      diag.episode = k;
      const auto q1 = q_table(plan, link, env, 0);
      diag.planned_value = *std::max_element(q1[s1].begin(), q1[s1].end());
      diag.q_at_optimal = q1[s1][best_first];
      diag.q_star = qstar[0][s1][best_first];
      for (const auto& f : plan.fits) {
        diag.fit_loss.push_back(f.loss);
        diag.fit_iterations.push_back(f.iterations);
        diag.fit_restart.push_back(f.restart_index);
      }
      out.glm_diag.push_back(std::move(diag));
    }
    out.switched.push_back(update ? 1 : 0);
    out.logdets.push_back(logdets);
    out.regret.push(policy_val, b_k);

    Trajectory traj = run_policy(env, policy, options.seed, k);
    for (const auto& step : traj) {
      const Vec& phi = env.feature(step.layer, step.state, step.action);
      out.bonus_sum += bonus(plan, step.layer, phi);
      accs[step.layer].update(phi);
      hists[step.layer].add(step);
    }
    if (options.record_trajectories) out.trajectories.push_back(std::move(traj));
  }
  const double kk = static_cast<double>(K);
  out.bonus_bound = static_cast<double>(H) * gamma *
                    std::sqrt(4.0 * kk * static_cast<double>(d) * std::log(1.0 + kk));
  out.switches = gate.log();
  return out;
}

}  // namespace lowswitch
