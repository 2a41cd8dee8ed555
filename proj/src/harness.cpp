#include "lowswitch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lowswitch/linalg.hpp"
#include "lowswitch/link.hpp"
#include "lowswitch/rng.hpp"
#include "lowswitch/switching.hpp"

namespace lowswitch {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Collects problems while walking one JSON object; unknown keys are reported
// when the object is closed.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path, std::vector<std::string>& problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {
    if (!obj_.is_object()) fail("", "must be an object");
  }

  ~ObjectReader() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(key, "unknown key");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key);
  }

  const json* get(const std::string& key, bool required) {
    if (!has(key)) {
      if (required) fail(key, "is required");
      return nullptr;
    }
    return &obj_.at(key);
  }

  template <class T>
  std::optional<T> number(const std::string& key, bool required) {
    const json* v = get(key, required);
    if (!v) return std::nullopt;
    if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) return fail(key, "must be a number"), std::nullopt;
      return v->get<T>();
    } else {
      if (!v->is_number_unsigned()) return fail(key, "must be a non-negative integer"), std::nullopt;
      return v->get<T>();
    }
  }

  std::optional<std::string> string(const std::string& key, bool required) {
    const json* v = get(key, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) return fail(key, "must be a string"), std::nullopt;
    return v->get<std::string>();
  }

  std::optional<bool> boolean(const std::string& key, bool required) {
    const json* v = get(key, required);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) return fail(key, "must be a boolean"), std::nullopt;
    return v->get<bool>();
  }

  void fail(const std::string& key, const std::string& what) {
    const std::string where = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    problems_.push_back((where.empty() ? std::string("config") : where) + ": " + what);
  }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

// Nested numeric arrays of fixed depth.
bool numeric_array(const json& v, int depth) {
  if (depth == 0) return v.is_number();
  if (!v.is_array()) return false;
  return std::all_of(v.begin(), v.end(), [&](const json& e) { return numeric_array(e, depth - 1); });
}

void parse_env(const json& node, EnvDescriptor& env, std::vector<std::string>& problems) {
  ObjectReader r(node, "env", problems);
  if (!node.is_object()) return;
  env.family = r.string("family", true).value_or("");
  const std::string& f = env.family;
  auto positive = [&](const char* key, std::size_t& out) {
    if (auto v = r.number<std::size_t>(key, true)) {
      if (*v == 0) r.fail(key, "must be positive");
      out = *v;
    }
  };
  auto noise = [&] {
    if (auto v = r.number<double>("noise_std", false)) {
      if (!(*v >= 0.0) || !std::isfinite(*v)) r.fail("noise_std", "must be finite and >= 0");
      env.noise_std = *v;
    }
  };
  if (f == "onehot_random" || f == "onehot_table") {
    positive("num_states", env.num_states);
    positive("num_actions", env.num_actions);
    positive("horizon", env.horizon);
    noise();
    if (f == "onehot_random") {
      env.env_seed = r.number<std::uint64_t>("env_seed", false).value_or(0);
    } else {
      if (const json* v = r.get("rewards", true)) {
        if (!numeric_array(*v, 3)) {
          r.fail("rewards", "must be a [h][s][a] array of numbers");
        } else {
          env.rewards = v->get<RewardTable>();
        }
      }
      if (const json* v = r.get("transitions", true)) {
        if (!numeric_array(*v, 4)) {
          r.fail("transitions", "must be a [h][s][a][s'] array of numbers");
        } else {
          env.transitions = v->get<TransitionTable>();
        }
      }
    }
  } else if (f == "hard_instance") {
    if (const json* v = r.get("dims", true)) {
      if (!v->is_array() || v->empty() ||
          !std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_number_unsigned(); })) {
        r.fail("dims", "must be a non-empty array of non-negative integers");
      } else {
        env.dims = v->get<std::vector<std::size_t>>();
        for (auto d : env.dims) {
          if (d < 3) {
            r.fail("dims", "every entry must be at least 3");
            break;
          }
        }
      }
    }
    env.env_seed = r.number<std::uint64_t>("env_seed", false).value_or(0);
    if (const json* v = r.get("rewards", false)) {
      if (!v->is_array()) {
        r.fail("rewards", "must be an array of {h, i, r}");
      } else {
        HardRewards hr;
        for (std::size_t j = 0; j < v->size(); ++j) {
          ObjectReader e((*v)[j], r.path("rewards") + "[" + std::to_string(j) + "]", problems);
          auto h = e.number<std::size_t>("h", true);
          auto i = e.number<std::size_t>("i", true);
          auto rv = e.number<double>("r", true);
          if (h && i && rv) hr[{*h, *i}] = *rv;
        }
        env.hard_rewards = std::move(hr);
      }
    }
  } else if (f == "linear_bandit" || f == "logistic_bandit") {
    noise();
    if (const json* v = r.get("theta_star", true)) {
      if (!numeric_array(*v, 1) || v->empty()) {
        r.fail("theta_star", "must be a non-empty array of numbers");
      } else {
        env.theta_star = v->get<std::vector<double>>();
      }
    }
    env.orthogonal = r.boolean("orthogonal", false).value_or(false);
    if (const json* v = r.get("arms", !env.orthogonal)) {
      if (env.orthogonal) {
        r.fail("arms", "cannot be combined with orthogonal = true");
      } else if (!numeric_array(*v, 2) || v->empty()) {
        r.fail("arms", "must be a non-empty array of number arrays");
      } else {
        env.arms = v->get<std::vector<std::vector<double>>>();
      }
    }
  } else if (!f.empty()) {
    r.fail("family",
           "unknown family '" + f +
               "' (expected onehot_random, onehot_table, hard_instance, linear_bandit, "
               "logistic_bandit)");
  }
}

std::optional<Algorithm> algorithm_from(const std::string& s) {
  if (s == "eleanor") return Algorithm::kEleanor;
  if (s == "eleanor_always_switch") return Algorithm::kEleanorAlwaysSwitch;
  if (s == "glm") return Algorithm::kGlm;
  if (s == "glm_always_switch") return Algorithm::kGlmAlwaysSwitch;
  return std::nullopt;
}

const char* solver_name(Solver s) {
  switch (s) {
    case Solver::kAuto: return "auto";
    case Solver::kBanditExact: return "bandit_exact";
    case Solver::kAlternating: return "alternating";
  }
  return "auto";
}

void parse_solver(const json& node, SolverConfig& sc, std::vector<std::string>& problems) {
  ObjectReader r(node, "solver", problems);
  if (!node.is_object()) return;
  if (auto kind = r.string("kind", false)) {
    if (*kind == "auto") sc.kind = Solver::kAuto;
    else if (*kind == "bandit_exact") sc.kind = Solver::kBanditExact;
    else if (*kind == "alternating") sc.kind = Solver::kAlternating;
    else r.fail("kind", "must be auto, bandit_exact or alternating");
  }
  if (auto v = r.number<std::size_t>("restarts", false)) {
    if (*v == 0) r.fail("restarts", "must be positive");
    sc.planner.restarts = *v;
  }
  if (auto v = r.number<std::size_t>("iters", false)) sc.planner.iters = *v;
  if (auto v = r.number<double>("tol", false)) {
    if (!(*v > 0.0)) r.fail("tol", "must be positive");
    sc.planner.tol = *v;
  }
  if (auto m = r.string("fit_metric", false)) {
    if (*m == "gauss_newton") sc.fit_metric = FitMetric::kGaussNewton;
    else if (*m == "euclidean") sc.fit_metric = FitMetric::kEuclidean;
    else r.fail("fit_metric", "must be gauss_newton or euclidean");
  }
  if (auto v = r.number<double>("fit_tol", false)) {
    if (!(*v > 0.0)) r.fail("fit_tol", "must be positive");
    sc.fit.tol = *v;
  }
  if (auto v = r.number<std::size_t>("fit_max_iters", false)) sc.fit.max_iters = *v;
  if (auto v = r.number<std::size_t>("fit_restarts", false)) sc.fit.random_restarts = *v;
  sc.fit.metric = sc.fit_metric;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : InvalidArgument("invalid config:\n  " + join(problems, "\n  ")),
      problems_(std::move(problems)) {}

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kEleanor: return "eleanor";
    case Algorithm::kEleanorAlwaysSwitch: return "eleanor_always_switch";
    case Algorithm::kGlm: return "glm";
    case Algorithm::kGlmAlwaysSwitch: return "glm_always_switch";
  }
  return "eleanor";
}

bool is_gated(Algorithm a) { return a == Algorithm::kEleanor || a == Algorithm::kGlm; }
bool is_glm(Algorithm a) { return a == Algorithm::kGlm || a == Algorithm::kGlmAlwaysSwitch; }

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: not valid JSON: ") + e.what()});
  }
  std::vector<std::string> problems;
  ExperimentConfig c;
  {
    ObjectReader r(root, "", problems);
    if (!root.is_object()) throw ConfigError(problems);
    if (const json* env = r.get("env", true)) parse_env(*env, c.env, problems);
    if (auto a = r.string("algorithm", true)) {
      if (auto alg = algorithm_from(*a)) {
        c.algorithm = *alg;
      } else {
        r.fail("algorithm", "must be eleanor, eleanor_always_switch, glm or glm_always_switch");
      }
    }
    if (auto k = r.number<std::size_t>("K", true)) {
      if (*k == 0) r.fail("K", "must be positive");
      c.K = *k;
    }
    if (auto d = r.number<double>("delta", false)) {
      if (!(*d > 0.0 && *d < 1.0)) r.fail("delta", "must lie in (0, 1)");
      c.delta = *d;
    }
    if (const json* s = r.get("seeds", true)) {
      if (!s->is_array() || s->empty() ||
          !std::all_of(s->begin(), s->end(), [](const json& e) { return e.is_number_unsigned(); })) {
        r.fail("seeds", "must be a non-empty array of non-negative integers");
      } else {
        c.seeds = s->get<std::vector<std::uint64_t>>();
      }
    }
    if (const json* s = r.get("solver", false)) parse_solver(*s, c.solver, problems);
    if (auto l = r.string("link", false)) {
      try {
        (void)LinkFunction::by_name(*l);
        c.link = *l;
      } catch (const InvalidArgument&) {
        r.fail("link", "must be identity or logistic");
      }
    }
    if (auto v = r.number<double>("C", false)) {
      if (!(*v > 0.0) || !std::isfinite(*v)) r.fail("C", "must be positive and finite");
      c.C = *v;
    }
    if (auto o = r.string("out", false)) c.out = *o;
  }
  if (problems.empty()) {
    try {
      const EpisodicEnv env = build_env(c.env);
      if (is_glm(c.algorithm)) {
        const auto& dims = env.dims();
        if (std::adjacent_find(dims.begin(), dims.end(), std::not_equal_to<>()) != dims.end()) {
          problems.push_back("env: the glm algorithms need one feature dimension across layers");
        }
      } else if (c.solver.kind == Solver::kBanditExact && env.horizon() != 1) {
        problems.push_back("solver.kind: bandit_exact needs a horizon-1 env");
      }
    } catch (const InvalidArgument& e) {
      problems.push_back(std::string("env: ") + e.what());
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  nlohmann::ordered_json env;
  const auto& e = c.env;
  env["family"] = e.family;
  if (e.family == "onehot_random" || e.family == "onehot_table") {
    env["num_states"] = e.num_states;
    env["num_actions"] = e.num_actions;
    env["horizon"] = e.horizon;
    env["noise_std"] = e.noise_std;
    if (e.family == "onehot_random") {
      env["env_seed"] = e.env_seed;
    } else {
      env["rewards"] = e.rewards;
      env["transitions"] = e.transitions;
    }
  } else if (e.family == "hard_instance") {
    env["dims"] = e.dims;
    env["env_seed"] = e.env_seed;
    if (e.hard_rewards) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& [key, r] : *e.hard_rewards) {
        arr.push_back({{"h", key.first}, {"i", key.second}, {"r", r}});
      }
      env["rewards"] = arr;
    }
  } else {
    env["noise_std"] = e.noise_std;
    env["theta_star"] = e.theta_star;
    if (e.orthogonal) env["orthogonal"] = true;
    else env["arms"] = e.arms;
  }
  nlohmann::ordered_json root;
  root["env"] = env;
  root["algorithm"] = algorithm_name(c.algorithm);
  root["K"] = c.K;
  root["delta"] = c.delta;
  root["seeds"] = c.seeds;
  root["solver"] = {
      {"kind", solver_name(c.solver.kind)},
      {"restarts", c.solver.planner.restarts},
      {"iters", c.solver.planner.iters},
      {"tol", c.solver.planner.tol},
      {"fit_metric", c.solver.fit_metric == FitMetric::kGaussNewton ? "gauss_newton" : "euclidean"},
      {"fit_tol", c.solver.fit.tol},
      {"fit_max_iters", c.solver.fit.max_iters},
      {"fit_restarts", c.solver.fit.random_restarts},
  };
  root["link"] = c.link;
  root["C"] = c.C;
  root["out"] = c.out;
  return root.dump(2);
}

EpisodicEnv build_env(const EnvDescriptor& d) {
  if (d.family == "onehot_random") {
    auto [rewards, transitions] =
        random_onehot_tables(d.num_states, d.num_actions, d.horizon, d.env_seed);
    return make_linear_mdp_onehot(d.num_states, d.num_actions, d.horizon, rewards, transitions,
                                  d.noise_std);
  }
  if (d.family == "onehot_table") {
    return make_linear_mdp_onehot(d.num_states, d.num_actions, d.horizon, d.rewards,
                                  d.transitions, d.noise_std);
  }
  if (d.family == "hard_instance") {
    const HardRewards rewards = d.hard_rewards ? *d.hard_rewards
                                               : sample_hard_rewards(d.dims, d.env_seed);
    return make_hard_instance(d.dims, rewards);
  }
  if (d.family == "linear_bandit" || d.family == "logistic_bandit") {
    const Vec theta = Eigen::Map<const Vec>(d.theta_star.data(),
                                            static_cast<Eigen::Index>(d.theta_star.size()));
    std::vector<Vec> arms;
    if (d.orthogonal) {
      for (Eigen::Index i = 0; i < theta.size(); ++i) arms.push_back(Vec::Unit(theta.size(), i));
    } else {
      for (const auto& a : d.arms) {
        arms.push_back(Eigen::Map<const Vec>(a.data(), static_cast<Eigen::Index>(a.size())));
      }
    }
    if (d.family == "linear_bandit") return make_linear_bandit(theta, arms, d.noise_std);
    // The base carries zero means; the link rewrites them.
    const EpisodicEnv base = make_linear_bandit(Vec::Zero(theta.size()), arms, d.noise_std);
    return make_glm_env(base, LinkFunction::logistic(), theta);
  }
  throw InvalidArgument("unknown env family '" + d.family + "'");
}

RunResult run_single(const ExperimentConfig& config, const EpisodicEnv& env, std::uint64_t seed) {
  if (is_glm(config.algorithm)) {
    GlmOptions o;
    o.episodes = config.K;
    o.delta = config.delta;
    o.c = config.C;
    o.gated = is_gated(config.algorithm);
    o.fit = config.solver.fit;
    o.fit.metric = config.solver.fit_metric;
    o.seed = seed;
    return run_glm(env, LinkFunction::by_name(config.link), o);
  }
  EleanorOptions o;
  o.episodes = config.K;
  o.delta = config.delta;
  o.gated = is_gated(config.algorithm);
  o.solver = config.solver.kind;
  o.planner = config.solver.planner;
  o.seed = seed;
  return run_eleanor(env, o);
}

namespace {

std::size_t budget_or_zero(const std::vector<std::size_t>& dims, std::size_t k) {
  return k >= 2 ? switch_budget(dims, k) : 0;
}

std::size_t switches_up_to(const SwitchLog& log, std::size_t k) {
  std::size_t n = 0;
  for (const auto& r : log.records()) n += r.episode <= k;
  return n == 0 ? 0 : n - 1;
}

std::vector<std::string> run_violations(const ExperimentConfig& config,
                                        const std::vector<std::size_t>& dims, const SeedRun& run) {
  std::vector<std::string> out;
  const std::string tag = "seed " + std::to_string(run.seed) + ": ";
  if (is_gated(config.algorithm)) {
    for (auto& p : audit_switch_log(run.result.switches, dims, config.K)) out.push_back(tag + p);
  }
  if (is_glm(config.algorithm) && run.result.bonus_sum > run.result.bonus_bound) {
    out.push_back(tag + "bonus sum " + fmt17(run.result.bonus_sum) + " exceeds " +
                  fmt17(run.result.bonus_bound));
  }
  for (std::size_t k = 0; k < run.result.regret.instant.size(); ++k) {
    if (run.result.regret.instant[k] < -1e-10) {
      out.push_back(tag + "negative regret at episode " + std::to_string(k + 1));
      break;
    }
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, Execution mode) {
  if (config.seeds.empty()) throw ConfigError({"seeds: must be non-empty"});
  EpisodicEnv env = [&] {
    try {
      return build_env(config.env);
    } catch (const InvalidArgument& e) {
      throw ConfigError({std::string("env: ") + e.what()});
    }
  }();
  ExperimentResult result;
  result.dims = env.dims();
  result.horizon = env.horizon();
  const auto n = static_cast<long>(config.seeds.size());
  result.runs.resize(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());

  auto one = [&](long i) {
    try {
      result.runs[i].seed = config.seeds[i];
      result.runs[i].result = run_single(config, env, config.seeds[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (mode == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<std::string> violations;
  for (const auto& run : result.runs) {
    for (auto& v : run_violations(config, result.dims, run)) violations.push_back(std::move(v));
  }
  if (!violations.empty()) {
    throw InvariantViolation("invariant violation (" + std::string(algorithm_name(config.algorithm)) +
                             ", K=" + std::to_string(config.K) + "):\n  " + join(violations, "\n  "));
  }

  Summary& s = result.summary;
  s.budget = budget_or_zero(result.dims, config.K);
  s.min_regret = std::numeric_limits<double>::infinity();
  s.max_regret = -std::numeric_limits<double>::infinity();
  s.min_n_switch = std::numeric_limits<std::size_t>::max();
  for (const auto& run : result.runs) {
    const double r = run.result.regret.total();
    const std::size_t ns = run.result.switches.n_switch();
    s.mean_regret += r;
    s.min_regret = std::min(s.min_regret, r);
    s.max_regret = std::max(s.max_regret, r);
    s.mean_n_switch += static_cast<double>(ns);
    s.min_n_switch = std::min(s.min_n_switch, ns);
    s.max_n_switch = std::max(s.max_n_switch, ns);
  }
  s.mean_regret /= static_cast<double>(n);
  s.mean_n_switch /= static_cast<double>(n);
  return result;
}

// ---- comparison -------------------------------------------------------------

void check_comparable(const ExperimentConfig& a, const ExperimentConfig& b) {
  if (is_glm(a.algorithm) != is_glm(b.algorithm) || is_gated(a.algorithm) == is_gated(b.algorithm)) {
    throw InvalidArgument("compare: configs must pair one gated and one ungated run of the same algorithm");
  }
  ExperimentConfig x = a;
  ExperimentConfig y = b;
  y.algorithm = x.algorithm;
  y.out = x.out;
  if (dump_config(x) != dump_config(y)) {
    throw InvalidArgument("compare: configs differ in more than the switch gate");
  }
}

std::vector<ComparisonRow> comparison_rows(const ExperimentResult& a, const ExperimentResult& b,
                                           std::size_t episodes) {
  std::vector<std::size_t> checkpoints;
  for (std::size_t div : {8, 4, 2, 1}) {
    const std::size_t c = episodes / div;
    if (c > 0 && (checkpoints.empty() || checkpoints.back() != c)) checkpoints.push_back(c);
  }
  auto mean_at = [](const ExperimentResult& r, std::size_t c, bool regret) {
    double sum = 0.0;
    for (const auto& run : r.runs) {
      sum += regret ? run.result.regret.cumulative[c - 1]
                    : static_cast<double>(switches_up_to(run.result.switches, c));
    }
    return sum / static_cast<double>(r.runs.size());
  };
  std::vector<ComparisonRow> rows;
  for (auto c : checkpoints) {
    ComparisonRow row;
    row.checkpoint = c;
    row.regret_a = mean_at(a, c, true);
    row.regret_b = mean_at(b, c, true);
    row.n_switch_a = mean_at(a, c, false);
    row.n_switch_b = mean_at(b, c, false);
    row.ratio = row.regret_a / row.regret_b;
    row.budget = budget_or_zero(a.dims, c);
    rows.push_back(row);
  }
  return rows;
}

std::vector<ComparisonRow> compare_adaptivity(const ExperimentConfig& a, const ExperimentConfig& b,
                                              Execution mode) {
  check_comparable(a, b);
  const ExperimentResult ra = run_experiment(a, mode);
  const ExperimentResult rb = run_experiment(b, mode);
  return comparison_rows(ra, rb, a.K);
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "checkpoint,cum_regret_a,cum_regret_b,n_switch_a,n_switch_b,regret_ratio,budget\n";
  for (const auto& r : rows) {
    out << r.checkpoint << ',' << fmt17(r.regret_a) << ',' << fmt17(r.regret_b) << ','
        << fmt17(r.n_switch_a) << ',' << fmt17(r.n_switch_b) << ',' << fmt17(r.ratio) << ','
        << r.budget << '\n';
  }
}

// ---- CSV ---------------------------------------------------------------------

std::vector<EpisodeRow> episode_rows(std::uint64_t seed, const RunResult& run) {
  std::vector<EpisodeRow> rows;
  const std::size_t K = run.regret.instant.size();
  rows.reserve(K);
  std::size_t updates = 0;
  for (std::size_t k = 0; k < K; ++k) {
    EpisodeRow row;
    row.seed = seed;
    row.episode = k + 1;
    row.switched = run.switched.at(k) != 0;
    updates += row.switched;
    row.instant_regret = run.regret.instant[k];
    row.cum_regret = run.regret.cumulative[k];
    row.n_switch_so_far = updates == 0 ? 0 : updates - 1;
    row.logdets = run.logdets.at(k);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<EpisodeRow> episode_rows(const ExperimentResult& result) {
  std::vector<EpisodeRow> rows;
  for (const auto& run : result.runs) {
    auto part = episode_rows(run.seed, run.result);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  }
  return rows;
}

void write_csv(std::ostream& out, const std::vector<EpisodeRow>& rows, std::size_t horizon) {
  out << "seed,episode,switched,instant_regret,cum_regret,n_switch_so_far";
  for (std::size_t h = 1; h <= horizon; ++h) out << ",logdet_h" << h;
  out << '\n';
  for (const auto& r : rows) {
    if (r.logdets.size() != horizon) throw InvalidArgument("write_csv: row has wrong layer count");
    out << r.seed << ',' << r.episode << ',' << (r.switched ? 1 : 0) << ','
        << fmt17(r.instant_regret) << ',' << fmt17(r.cum_regret) << ',' << r.n_switch_so_far;
    for (double v : r.logdets) out << ',' << fmt17(v);
    out << '\n';
  }
}

void emit_csv(const std::vector<EpisodeRow>& rows, std::size_t horizon,
              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path.string() + " for writing");
  write_csv(out, rows, horizon);
  out.flush();
  if (!out) throw std::runtime_error("emit_csv: write failed for " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw InvalidArgument("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::uint64_t to_uint(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || s[0] == '-') {
    throw InvalidArgument("csv line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<EpisodeRow> parse_csv(std::istream& in, std::size_t* horizon) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: missing header");
  const auto header = split(line);
  static const char* fixed[] = {"seed", "episode", "switched", "instant_regret", "cum_regret",
                                "n_switch_so_far"};
  if (header.size() < 6) throw InvalidArgument("csv: header too short");
  for (std::size_t i = 0; i < 6; ++i) {
    if (header[i] != fixed[i]) throw InvalidArgument("csv: unexpected header column " + header[i]);
  }
  const std::size_t H = header.size() - 6;
  for (std::size_t h = 0; h < H; ++h) {
    if (header[6 + h] != "logdet_h" + std::to_string(h + 1)) {
      throw InvalidArgument("csv: unexpected header column " + header[6 + h]);
    }
  }
  if (horizon) *horizon = H;
  std::vector<EpisodeRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 6 + H) {
      throw InvalidArgument("csv line " + std::to_string(lineno) + ": expected " +
                            std::to_string(6 + H) + " fields");
    }
    EpisodeRow r;
    r.seed = to_uint(f[0], lineno);
    r.episode = to_uint(f[1], lineno);
    const auto sw = to_uint(f[2], lineno);
    if (sw > 1) throw InvalidArgument("csv line " + std::to_string(lineno) + ": switched not 0/1");
    r.switched = sw == 1;
    r.instant_regret = to_double(f[3], lineno);
    r.cum_regret = to_double(f[4], lineno);
    r.n_switch_so_far = to_uint(f[5], lineno);
    for (std::size_t h = 0; h < H; ++h) r.logdets.push_back(to_double(f[6 + h], lineno));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<EpisodeRow> read_csv_file(const std::filesystem::path& path, std::size_t* horizon) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  return parse_csv(in, horizon);
}

std::vector<std::string> audit_rows(const std::vector<EpisodeRow>& rows,
                                    const std::vector<std::size_t>& dims, bool gated) {
  std::vector<std::string> problems;
  std::size_t i = 0;
  while (i < rows.size()) {
    const std::uint64_t seed = rows[i].seed;
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    SwitchLog log;
    std::size_t updates = 0;
    double prev_cum = 0.0;
    std::size_t k = 0;
    for (; i < rows.size() && rows[i].seed == seed; ++i) {
      const auto& r = rows[i];
      ++k;
      const std::string at = tag + "episode " + std::to_string(r.episode) + ": ";
      if (r.episode != k) problems.push_back(at + "episodes not consecutive from 1");
      if (r.logdets.size() != dims.size()) problems.push_back(at + "wrong number of logdets");
      if (k == 1 && !r.switched) problems.push_back(at + "first episode must deploy a policy");
      if (r.instant_regret < -1e-10) problems.push_back(at + "negative instantaneous regret");
      if (r.cum_regret < prev_cum - 1e-10) problems.push_back(at + "cumulative regret decreased");
      if (std::abs(r.cum_regret - (prev_cum + r.instant_regret)) >
          1e-9 * std::max(1.0, std::abs(r.cum_regret))) {
        problems.push_back(at + "cumulative regret is not the running sum");
      }
      prev_cum = r.cum_regret;
      if (r.switched) {
        ++updates;
        try {
          log.append({r.episode, 0, r.logdets});
        } catch (const InvalidState& e) {
          problems.push_back(at + e.what());
        }
      }
      if (r.n_switch_so_far != (updates == 0 ? 0 : updates - 1)) {
        problems.push_back(at + "n_switch_so_far does not match the switched column");
      }
    }
    if (gated) {
      for (auto& p : audit_switch_log(log, dims, k)) problems.push_back(tag + p);
    }
  }
  return problems;
}

void write_diagnostics_csv(std::ostream& out, const RunResult& run) {
  const std::size_t H = run.logdets.empty() ? 0 : run.logdets.front().size();
  if (!run.glm_diag.empty()) {
    out << "episode,planned_value,q_at_optimal,q_star";
    for (std::size_t h = 1; h <= H; ++h) out << ",fit_loss_h" << h;
    for (std::size_t h = 1; h <= H; ++h) out << ",fit_iters_h" << h;
    for (std::size_t h = 1; h <= H; ++h) out << ",fit_restart_h" << h;
    out << '\n';
    for (const auto& d : run.glm_diag) {
      out << d.episode << ',' << fmt17(d.planned_value) << ',' << fmt17(d.q_at_optimal) << ','
          << fmt17(d.q_star);
      for (double v : d.fit_loss) out << ',' << fmt17(v);
      for (auto v : d.fit_iterations) out << ',' << v;
      for (auto v : d.fit_restart) out << ',' << v;
      out << '\n';
    }
    return;
  }
  out << "episode,planned_value,optimal_value";
  for (std::size_t h = 1; h <= H; ++h) out << ",xi_norm_h" << h;
  for (std::size_t h = 1; h <= H; ++h) out << ",alpha_h" << h;
  out << ",restarts,degraded,bellman_ok\n";
  for (const auto& d : run.eleanor_diag) {
    out << d.episode << ',' << fmt17(d.planned_value) << ',' << fmt17(d.optimal_value);
    for (double v : d.xi_norms) out << ',' << fmt17(v);
    for (double v : d.alphas) out << ',' << fmt17(v);
    out << ',' << d.restarts << ',' << (d.degraded ? 1 : 0) << ',' << (d.bellman_ok ? 1 : 0) << '\n';
  }
}

void write_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  emit_csv(episode_rows(result), result.horizon, dir / "episodes.csv");
  for (const auto& run : result.runs) {
    const auto path = dir / ("switches_seed" + std::to_string(run.seed) + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    run.result.switches.write_csv(out);
  }
  for (const auto& run : result.runs) {
    const auto path = dir / ("diagnostics_seed" + std::to_string(run.seed) + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_diagnostics_csv(out, run.result);
  }
  nlohmann::ordered_json s;
  s["algorithm"] = algorithm_name(config.algorithm);
  s["K"] = config.K;
  s["dims"] = result.dims;
  s["budget"] = result.summary.budget;
  s["mean_cum_regret"] = result.summary.mean_regret;
  s["min_cum_regret"] = result.summary.min_regret;
  s["max_cum_regret"] = result.summary.max_regret;
  s["mean_n_switch"] = result.summary.mean_n_switch;
  s["min_n_switch"] = result.summary.min_n_switch;
  s["max_n_switch"] = result.summary.max_n_switch;
  auto per_seed = nlohmann::ordered_json::array();
  for (const auto& run : result.runs) {
    nlohmann::ordered_json j;
    j["seed"] = run.seed;
    j["cum_regret"] = run.result.regret.total();
    j["n_switch"] = run.result.switches.n_switch();
    j["policy_changes"] = run.result.policy_changes;
    if (is_glm(config.algorithm)) {
      j["bonus_sum"] = run.result.bonus_sum;
      j["bonus_bound"] = run.result.bonus_bound;
    }
    per_seed.push_back(j);
  }
  s["runs"] = per_seed;
  const auto path = dir / "summary.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << s.dump(2) << '\n';
}

// ---- lemma suite ---------------------------------------------------------------

namespace {

Vec random_feature(std::size_t d, Stream& rng) {
  Vec v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = rng.normal();
  const double n = v.norm();
  if (n == 0.0) return Vec::Unit(static_cast<Eigen::Index>(d), 0);
  // Half the draws sit on the unit sphere, the worst case for every bound.
  const double radius = rng.uniform() < 0.5 ? 1.0 : rng.uniform();
  return v * (radius / n);
}

json vec_json(const Vec& v) { return std::vector<double>(v.begin(), v.end()); }

json vecs_json(const std::vector<Vec>& vs) {
  json arr = json::array();
  for (const auto& v : vs) arr.push_back(vec_json(v));
  return arr;
}

json mat_json(const Mat& m) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) arr.push_back(vec_json(m.row(i).transpose()));
  return arr;
}

std::optional<std::string> envelope_trial(std::uint64_t seed, std::size_t t) {
  Stream rng(seed, t, 1, StreamTag::kLemma);
  const std::size_t d = 1 + rng.uniform_int(8);
  const std::size_t T = 1 + rng.uniform_int(300);
  const double ridge = rng.uniform(0.5, 4.0);
  std::vector<Vec> phis;
  for (std::size_t i = 0; i < T; ++i) phis.push_back(random_feature(d, rng));
  const auto check = determinant_envelope_oracle(phis, ridge);
  if (check.ok) return std::nullopt;
  return json{{"lemma", "determinant_envelope"}, {"trial", t}, {"ridge", ridge},
              {"logdet", check.logdet}, {"bound", check.bound}, {"phis", vecs_json(phis)}}
      .dump();
}

std::optional<std::string> ratio_trial(std::uint64_t seed, std::size_t t) {
  Stream rng(seed, t, 2, StreamTag::kLemma);
  const auto d = static_cast<Eigen::Index>(1 + rng.uniform_int(8));
  Mat b = rng.uniform(0.1, 2.0) * Mat::Identity(d, d);
  for (std::size_t i = 0, m = rng.uniform_int(12); i < m; ++i) {
    const Vec v = random_feature(static_cast<std::size_t>(d), rng);
    b += v * v.transpose();
  }
  Mat a = b;
  for (std::size_t i = 0, m = rng.uniform_int(12); i < m; ++i) {
    const Vec v = random_feature(static_cast<std::size_t>(d), rng) * rng.uniform(0.0, 3.0);
    a += v * v.transpose();
  }
  Vec x(d);
  for (auto& e : x) e = rng.normal();
  if (det_ratio_oracle(a, b, x)) return std::nullopt;
  return json{{"lemma", "det_ratio"}, {"trial", t}, {"A", mat_json(a)}, {"B", mat_json(b)},
              {"x", vec_json(x)}}
      .dump();
}

std::optional<std::string> potential_trial(std::uint64_t seed, std::size_t t) {
  Stream rng(seed, t, 3, StreamTag::kLemma);
  const std::size_t d = 1 + rng.uniform_int(8);
  const std::size_t T = 1 + rng.uniform_int(300);
  std::vector<Vec> phis;
  for (std::size_t i = 0; i < T; ++i) phis.push_back(random_feature(d, rng));
  const auto check = elliptical_potential_oracle(phis);
  if (check.ok) return std::nullopt;
  return json{{"lemma", "elliptical_potential"}, {"trial", t}, {"lhs", check.lhs},
              {"bound", check.bound}, {"phis", vecs_json(phis)}}
      .dump();
}

// Bounded i.i.d. zero-mean steps in [-1, 1]; |S_n| <= sqrt(2 A^2 n ln(1/delta)), A = 1.
bool azuma_trial(std::uint64_t seed, std::size_t t) {
  constexpr std::size_t kSteps = 1000;
  constexpr double kDelta = 0.05;
  Stream rng(seed, t, 4, StreamTag::kLemma);
  double sum = 0.0;
  for (std::size_t i = 0; i < kSteps; ++i) sum += rng.uniform(-1.0, 1.0);
  return std::abs(sum) <= std::sqrt(2.0 * kSteps * std::log(1.0 / kDelta));
}

}  // namespace

std::size_t LemmaReport::deterministic_trials() const {
  std::size_t n = 0;
  for (const auto& l : lemmas) n += l.trials;
  return n;
}

std::size_t LemmaReport::violation_count() const {
  std::size_t n = 0;
  for (const auto& l : lemmas) n += l.violations.size();
  return n;
}

LemmaReport lemma_suite(std::size_t trials, std::uint64_t seed, Execution mode) {
  using Trial = std::optional<std::string> (*)(std::uint64_t, std::size_t);
  const std::pair<const char*, Trial> oracles[] = {
      {"determinant_envelope", envelope_trial},
      {"det_ratio", ratio_trial},
      {"elliptical_potential", potential_trial},
  };
  const auto n = static_cast<long>(trials);
  LemmaReport report;
  for (const auto& [name, fn] : oracles) {
    std::vector<std::optional<std::string>> out(trials);
    if (mode == Execution::kParallel) {
#pragma omp parallel for schedule(static)
      for (long t = 0; t < n; ++t) out[t] = fn(seed, static_cast<std::size_t>(t));
    } else {
      for (long t = 0; t < n; ++t) out[t] = fn(seed, static_cast<std::size_t>(t));
    }
    LemmaOutcome o;
    o.name = name;
    o.trials = trials;
    for (auto& v : out) {
      if (v) o.violations.push_back(std::move(*v));
    }
    report.lemmas.push_back(std::move(o));
  }
  std::vector<char> pass(trials, 0);
  if (mode == Execution::kParallel) {
#pragma omp parallel for schedule(static)
    for (long t = 0; t < n; ++t) pass[t] = azuma_trial(seed, static_cast<std::size_t>(t));
  } else {
    for (long t = 0; t < n; ++t) pass[t] = azuma_trial(seed, static_cast<std::size_t>(t));
  }
  report.azuma_trials = trials;
  report.azuma_passes = static_cast<std::size_t>(std::count(pass.begin(), pass.end(), 1));
  report.azuma_pass_rate =
      trials ? static_cast<double>(report.azuma_passes) / static_cast<double>(trials) : 0.0;
  report.azuma_ok = trials > 0 && report.azuma_pass_rate >= 0.93 && report.azuma_pass_rate <= 1.0;
  return report;
}

void print_lemma_report(std::ostream& out, const LemmaReport& report) {
  for (const auto& l : report.lemmas) {
    out << l.name << ": " << l.violations.size() << " violations / " << l.trials << " trials\n";
    for (const auto& v : l.violations) out << "  violation: " << v << '\n';
  }
  out << "deterministic: " << report.violation_count() << " violations / "
      << report.deterministic_trials() << " trials\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "azuma: pass rate %.4f (%zu/%zu), band [0.93, 1.0]: %s\n",
                report.azuma_pass_rate, report.azuma_passes, report.azuma_trials,
                report.azuma_ok ? "ok" : "FAIL");
  out << buf;
}

}  // namespace lowswitch
