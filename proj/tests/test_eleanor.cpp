#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lowswitch/eleanor.hpp"
#include "lowswitch/errors.hpp"
#include "lowswitch/history.hpp"
#include "lowswitch/switching.hpp"
#include "oracles.hpp"

using namespace lowswitch;

namespace {

EpisodicEnv orthogonal_bandit(std::vector<double> means) {
  const auto d = static_cast<Eigen::Index>(means.size());
  std::vector<Vec> arms;
  for (Eigen::Index i = 0; i < d; ++i) arms.push_back(Vec::Unit(d, i));
  return make_linear_bandit(Eigen::Map<Vec>(means.data(), d), arms, 0.0);
}

// H = 2 with scalar features, two states and two actions per state.
EpisodicEnv scalar_two_layer_env() {
  EnvTables t;
  t.family = "scalar";
  t.horizon = 2;
  t.num_states = 2;
  t.dims = {1, 1};
  auto f = [](double x) { return Vec::Constant(1, x); };
  t.features = {{{f(1.0), f(-0.5)}, {f(0.7), f(-1.0)}}, {{f(0.8), f(-0.6)}, {f(0.3), f(-1.0)}}};
  t.mean_reward = {{{0.2, 0.1}, {0.0, 0.3}}, {{0.4, 0.1}, {0.2, 0.5}}};
  t.transitions = {{{{{0, 0.7}, {1, 0.3}}, {{1, 1.0}}}, {{{0, 1.0}}, {{1, 1.0}}}},
                   {{{{0, 1.0}}, {{0, 1.0}}}, {{{1, 1.0}}, {{1, 1.0}}}}};
  return EpisodicEnv(std::move(t));
}

void feed(const EpisodicEnv& env, std::vector<CovarianceAccumulator>& accs,
          std::vector<LayerHistory>& hists, std::size_t episodes, std::uint64_t seed) {
  Stream rng(seed, 0, 0, StreamTag::kPolicy);
  for (std::size_t k = 1; k <= episodes; ++k) {
    TabularPolicy pi;
    pi.action.resize(env.horizon());
    for (std::size_t h = 0; h < env.horizon(); ++h) {
      for (std::size_t s = 0; s < env.num_states(); ++s) {
        pi.action[h].push_back(rng.uniform_int(env.num_actions(h, s)));
      }
    }
    for (const auto& st : run_policy(env, pi, seed, k)) {
      accs[st.layer].update(env.feature(st.layer, st.state, st.action));
      hists[st.layer].add(st);
    }
  }
}

}  // namespace

TEST_CASE("confidence radius example") {
  const ConfidenceSchedule s(1, 0.1, 0.0, {1});
  const double expected = std::sqrt(std::log(2.0) + 2.0 * std::log(5.0) + std::log(20.0)) + 1.0;
  CHECK(std::sqrt(s.beta(0, 1)) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::sqrt(s.beta(0, 1)) == doctest::Approx(3.6283).epsilon(1e-4));
  CHECK(std::sqrt(s.alpha(0, 1)) == doctest::Approx(expected + 1.0).epsilon(1e-14));
}

TEST_CASE("confidence radius monotonicity and range checks") {
  const ConfidenceSchedule s(1000, 0.05, 0.1, {3, 2});
  CHECK(s.beta(0, 20) > s.beta(0, 10));
  CHECK(s.alpha(1, 20) >= s.alpha(1, 10));
  const ConfidenceSchedule tight(1000, 0.01, 0.1, {3, 2});
  CHECK(tight.beta(0, 10) > s.beta(0, 10));
  // sqrt(100) * 0.1 = 1.
  CHECK(std::sqrt(s.alpha(0, 100)) ==
        doctest::Approx(std::sqrt(s.beta(0, 100)) + 1.0 + std::sqrt(3.0)).epsilon(1e-14));
  CHECK_THROWS_AS(s.beta(2, 1), InvalidArgument);
  CHECK_THROWS_AS(s.beta(0, 0), InvalidArgument);
  CHECK_THROWS_AS(s.beta(0, 1001), InvalidArgument);
  CHECK_THROWS_AS(ConfidenceSchedule(10, 1.0, 0.0, {1}), InvalidArgument);
}

TEST_CASE("lsvi backup: no data and scalar shrinkage") {
  const auto env = make_linear_bandit(Vec::Constant(1, 0.6), std::vector<Vec>{Vec::Ones(1)}, 0.0);
  CovarianceAccumulator acc(1, 1.0);
  LayerHistory hist(env, 0);
  const std::vector<double> zero{0.0};
  CHECK(lsvi_backup(env, hist, acc, zero).norm() == 0.0);
  for (std::uint64_t k = 1; k <= 10; ++k) {
    for (const auto& st : run_policy(env, [](std::size_t, std::size_t) { return std::size_t{0}; }, 1, k)) {
      acc.update(env.feature(0, st.state, st.action));
      hist.add(st);
    }
  }
  CHECK(lsvi_backup(env, hist, acc, zero)(0) == doctest::Approx(10.0 * 0.6 / 11.0).epsilon(1e-14));
}

TEST_CASE("bandit optimum: symmetric start picks the lowest index") {
  CovarianceAccumulator acc(3, 1.0);
  const std::vector<Vec> arms{Vec::Unit(3, 0), Vec::Unit(3, 1), Vec::Unit(3, 2)};
  const auto c = bandit_ucb_optimum(arms, acc, Vec::Zero(3), 4.0);
  CHECK(c.arm == 0);
  CHECK(c.value == doctest::Approx(2.0));
  CHECK(c.xi.isApprox(Vec::Unit(3, 0) * 2.0));
}

TEST_CASE("bandit optimum: scalar evaluation") {
  CovarianceAccumulator acc(1, 1.0);
  acc.update(Vec::Ones(1));
  const std::vector<Vec> arms{Vec::Ones(1)};
  const auto c = bandit_ucb_optimum(arms, acc, Vec::Constant(1, 0.5), 1.0);
  CHECK(c.value == doctest::Approx(0.5 + 1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(bandit_ucb_optimum(std::vector<Vec>{}, acc, Vec::Zero(1), 1.0), InvalidArgument);
}

TEST_CASE("bandit optimum dominates Monte-Carlo ellipsoid samples") {
  Stream rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t d = 2 + trial % 3;
    CovarianceAccumulator acc(d, 1.0);
    std::vector<Vec> arms;
    for (std::size_t i = 0; i < 6; ++i) {
      Vec v(static_cast<Eigen::Index>(d));
      for (auto& x : v) x = rng.normal();
      arms.push_back(v / v.norm() * rng.uniform(0.3, 1.0));
    }
    for (int i = 0; i < 40; ++i) acc.update(arms[rng.uniform_int(arms.size())]);
    Vec theta(static_cast<Eigen::Index>(d));
    for (auto& x : theta) x = rng.uniform(-0.5, 0.5);
    const double alpha = rng.uniform(0.5, 4.0);
    const auto c = bandit_ucb_optimum(arms, acc, theta, alpha);
    const double mc = oracle::monte_carlo_ellipsoid(arms, acc.matrix(), theta, alpha, 100000, rng);
    CHECK(c.value >= mc - 1e-9);
    CHECK(c.value == doctest::Approx(oracle::ellipsoid_support(arms, acc.matrix(), theta, alpha))
                         .epsilon(1e-12));
    // The reported xi sits on the boundary and attains the value.
    CHECK((c.xi.dot(acc.matrix() * c.xi)) == doctest::Approx(alpha).epsilon(1e-9));
    CHECK(arms[c.arm].dot(theta + c.xi) == doctest::Approx(c.value).epsilon(1e-12));
  }
}

TEST_CASE("exact bandit plan satisfies every invariant") {
  const auto env = orthogonal_bandit({0.9, 0.1, 0.1, 0.1});
  std::vector<CovarianceAccumulator> accs{CovarianceAccumulator(4, 1.0)};
  std::vector<LayerHistory> hists{LayerHistory(env, 0)};
  feed(env, accs, hists, 30, 3);
  const double alpha = ConfidenceSchedule(100, 0.05, 0.0, {4}).alpha(0, 31);
  const PlanParams plan = plan_bandit_exact(env, accs[0], hists[0], alpha);
  const double alphas[] = {alpha};
  CHECK(plan_invariants_hold(plan, env, accs, alphas));
  CHECK_FALSE(plan.degraded);
}

TEST_CASE("alternating planner with zero radius is plain backward LSVI") {
  auto [r, p] = random_onehot_tables(2, 2, 3, 5);
  const auto env = make_linear_mdp_onehot(2, 2, 3, r, p);
  std::vector<CovarianceAccumulator> accs;
  std::vector<LayerHistory> hists;
  for (std::size_t h = 0; h < 3; ++h) {
    accs.emplace_back(4, 1.0);
    hists.emplace_back(env, h);
  }
  feed(env, accs, hists, 50, 2);
  const std::vector<double> alphas(3, 0.0);
  const PlanParams plan = plan_alternating(env, accs, hists, alphas, {}, 1, 1);
  for (const auto& xi : plan.xi) CHECK(xi.norm() == 0.0);
  // Independent backward LSVI through the normal equations on raw samples.
  std::vector<double> next(2, 0.0);
  for (std::size_t h = 3; h-- > 0;) {
    std::vector<Vec> xs;
    std::vector<double> ys;
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t a = 0; a < 2; ++a) {
        const auto& c = hists[h].cell(s, a);
        double total = c.reward_sum;
        for (std::size_t n = 0; n < 2; ++n) total += c.next_count[n] * next[n];
        // A cell of n samples with summed target y is n copies of (phi, y / n).
        for (int i = 0; i < static_cast<int>(c.count); ++i) {
          xs.push_back(env.feature(h, s, a));
          ys.push_back(total / c.count);
        }
      }
    }
    const Vec ref = oracle::normal_equations(xs, ys, 1.0);
    CHECK((plan.theta_hat[h] - ref).cwiseAbs().maxCoeff() <= 1e-9);
    for (std::size_t s = 0; s < 2; ++s) {
      next[s] = std::max(env.feature(h, s, 0).dot(plan.theta_bar[h]),
                         env.feature(h, s, 1).dot(plan.theta_bar[h]));
    }
  }
}

TEST_CASE("alternating planner matches an exhaustive perturbation grid") {
  const auto env = scalar_two_layer_env();
  std::vector<CovarianceAccumulator> accs{CovarianceAccumulator(1, 1.0), CovarianceAccumulator(1, 1.0)};
  std::vector<LayerHistory> hists{LayerHistory(env, 0), LayerHistory(env, 1)};
  feed(env, accs, hists, 12, 4);
  const std::vector<double> alphas{0.8, 1.5};

  // Independent evaluation: scalar ridge fits, feasible interval [-1, 1].
  auto ridge = [&](std::size_t h, const std::vector<double>& next) {
    double num = 0.0;
    double den = 1.0;
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t a = 0; a < 2; ++a) {
        const auto& c = hists[h].cell(s, a);
        const double phi = env.feature(h, s, a)(0);
        double y = c.reward_sum;
        for (std::size_t n = 0; n < 2; ++n) y += c.next_count[n] * next[n];
        num += phi * y;
        den += c.count * phi * phi;
      }
    }
    return num / den;
  };
  auto values = [&](std::size_t h, double theta) {
    std::vector<double> v(2);
    for (std::size_t s = 0; s < 2; ++s) {
      v[s] = std::max(env.feature(h, s, 0)(0) * theta, env.feature(h, s, 1)(0) * theta);
    }
    return v;
  };
  const double hat2 = ridge(1, {0.0, 0.0});
  const double r2 = std::sqrt(alphas[1] / accs[1].matrix()(0, 0));
  const double r1 = std::sqrt(alphas[0] / accs[0].matrix()(0, 0));
  constexpr int kGrid = 1001;
  double grid_best = -1e300;
  for (int i = 0; i < kGrid; ++i) {
    const double bar2 = std::clamp(hat2 - r2 + 2.0 * r2 * i / (kGrid - 1), -1.0, 1.0);
    const double hat1 = ridge(0, values(1, bar2));
    for (int j = 0; j < kGrid; ++j) {
      const double bar1 = std::clamp(hat1 - r1 + 2.0 * r1 * j / (kGrid - 1), -1.0, 1.0);
      grid_best = std::max(grid_best, values(0, bar1)[0]);
    }
  }
  const PlanParams plan = plan_alternating(env, accs, hists, alphas, {}, 7, 13);
  CHECK(std::abs(plan.planned_value - grid_best) <= 1e-3);
  CHECK(plan_invariants_hold(plan, env, accs, alphas));
  // Accepted steps never lower the objective.
  for (std::size_t i = 1; i < plan.value_trace.size(); ++i) {
    CHECK(plan.value_trace[i] >= plan.value_trace[i - 1]);
  }
}

TEST_CASE("greedy policy tie-breaking and argmax") {
  const std::vector<std::size_t> dims{4, 4};
  const auto env = make_hard_instance(dims, sample_hard_rewards(dims, 1));
  PlanParams zero;
  zero.theta_bar = {Vec::Zero(4), Vec::Zero(4)};
  const auto pi0 = greedy_policy(zero, env);
  for (const auto& layer : pi0.action) {
    for (auto a : layer) CHECK(a == 0);
  }
  PlanParams favor;
  favor.theta_bar = {Vec::Unit(4, 2) * 0.8, Vec::Zero(4)};
  const auto pi = greedy_policy(favor, env);
  CHECK(pi(0, 0) == 1);  // a_2 exits at the first layer
  const auto tr = run_policy(env, pi, 1, 1);
  CHECK(tr[0].next_state == 1);
  // Positive rescaling keeps the argmax.
  PlanParams scaled = favor;
  for (auto& t : scaled.theta_bar) t *= 3.7;
  CHECK(greedy_policy(scaled, env) == pi);
}

TEST_CASE("run_eleanor: single episode") {
  const auto env = orthogonal_bandit({0.7, 0.2});
  EleanorOptions o;
  o.episodes = 1;
  const auto r = run_eleanor(env, o);
  CHECK(r.switches.records().size() == 1);
  CHECK(r.switches.n_switch() == 0);
  CHECK(r.regret.instant.size() == 1);
  CHECK(r.regret.instant[0] >= 0.0);
}

TEST_CASE("run_eleanor: noiseless two-arm bandit locks in the optimal arm") {
  const auto env = orthogonal_bandit({0.75, 0.25});
  EleanorOptions o;
  o.episodes = 3000;
  o.seed = 4;
  const auto r = run_eleanor(env, o);
  const auto& inst = r.regret.instant;
  const double tail = std::accumulate(inst.end() - 500, inst.end(), 0.0);
  CHECK(tail == 0.0);
  CHECK(r.switches.n_switch() <= switch_budget(std::vector<std::size_t>{2}, 3000));
  CHECK(audit_switch_log(r.switches, std::vector<std::size_t>{2}, 3000).empty());
}

TEST_CASE("run_eleanor: optimism on noiseless bandits") {
  std::size_t optimistic = 0;
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto env = orthogonal_bandit({0.9, 0.5, 0.3, 0.1});
    EleanorOptions o;
    o.episodes = 500;
    o.seed = seed;
    const auto r = run_eleanor(env, o);
    for (const auto& d : r.eleanor_diag) {
      optimistic += d.planned_value >= d.optimal_value - 1e-12;
      ++total;
    }
  }
  CHECK(static_cast<double>(optimistic) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("run_eleanor: multi-layer runs keep plans feasible and within budget") {
  auto [r, p] = random_onehot_tables(2, 2, 2, 3);
  const auto env = make_linear_mdp_onehot(2, 2, 2, r, p);
  EleanorOptions o;
  o.episodes = 300;
  o.seed = 2;
  o.planner.restarts = 3;
  const auto res = run_eleanor(env, o);
  CHECK(res.switches.n_switch() <= switch_budget(env.dims(), 300));
  CHECK(audit_switch_log(res.switches, env.dims(), 300).empty());
  for (const auto& d : res.eleanor_diag) {
    for (std::size_t h = 0; h < 2; ++h) CHECK(d.xi_norms[h] <= std::sqrt(d.alphas[h]) + 1e-9);
  }
}

TEST_CASE("bandit solver requires a single layer") {
  auto [r, p] = random_onehot_tables(1, 2, 2, 3);
  const auto env = make_linear_mdp_onehot(1, 2, 2, r, p);
  EleanorOptions o;
  o.solver = Solver::kBanditExact;
  CHECK_THROWS_AS(run_eleanor(env, o), InvalidArgument);
}

TEST_CASE("gated and ungated runs agree until the first skipped update") {
  const auto env = orthogonal_bandit({0.6, 0.4, 0.2});
  EleanorOptions o;
  o.episodes = 200;
  o.seed = 12;
  o.record_trajectories = true;
  const auto gated = run_eleanor(env, o);
  o.gated = false;
  const auto always = run_eleanor(env, o);
  std::size_t first_skip = 0;
  for (std::size_t k = 0; k < gated.switched.size(); ++k) {
    if (!gated.switched[k]) {
      first_skip = k + 1;
      break;
    }
  }
  REQUIRE(first_skip > 1);
  for (std::size_t k = 0; k + 1 < first_skip; ++k) {
    REQUIRE(gated.trajectories[k].size() == always.trajectories[k].size());
    for (std::size_t h = 0; h < gated.trajectories[k].size(); ++h) {
      CHECK(gated.trajectories[k][h].action == always.trajectories[k][h].action);
      CHECK(gated.trajectories[k][h].reward == always.trajectories[k][h].reward);
    }
  }
  CHECK(always.switches.n_switch() == 199);
}
