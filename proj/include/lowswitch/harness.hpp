#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lowswitch/eleanor.hpp"
#include "lowswitch/envs.hpp"
#include "lowswitch/errors.hpp"
#include "lowswitch/glm_lsvi.hpp"
#include "lowswitch/run_record.hpp"

namespace lowswitch {

// Carries every violated field, one message each.
class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class Algorithm { kEleanor, kEleanorAlwaysSwitch, kGlm, kGlmAlwaysSwitch };

const char* algorithm_name(Algorithm a);
bool is_gated(Algorithm a);
bool is_glm(Algorithm a);

// Families:
//   onehot_random    num_states, num_actions, horizon, env_seed, noise_std
//   onehot_table     num_states, num_actions, horizon, rewards[h][s][a], transitions[h][s][a][s'], noise_std
//   hard_instance    dims, optional rewards [{h, i, r}] (1-based), env_seed when rewards are absent
//   linear_bandit    theta_star, arms (or "orthogonal": true for the standard basis), noise_std
//   logistic_bandit  theta_star, arms / orthogonal, noise_std; means f(arm^T theta*) with f logistic
struct EnvDescriptor {
  std::string family;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t horizon = 0;
  std::uint64_t env_seed = 0;
  double noise_std = 0.0;
  RewardTable rewards;
  TransitionTable transitions;
  std::vector<std::size_t> dims;
  std::optional<HardRewards> hard_rewards;
  std::vector<double> theta_star;
  std::vector<std::vector<double>> arms;
  bool orthogonal = false;
};

struct SolverConfig {
  Solver kind = Solver::kAuto;
  PlannerOptions planner;
  FitMetric fit_metric = FitMetric::kGaussNewton;
  GlmFitOptions fit;
};

struct ExperimentConfig {
  EnvDescriptor env;
  Algorithm algorithm = Algorithm::kEleanor;
  std::size_t K = 1;
  double delta = 0.05;
  std::vector<std::uint64_t> seeds;
  SolverConfig solver;
  std::string link = "identity";
  double C = 1.0;
  std::string out;
};

// JSON text whose keys mirror the ExperimentConfig field names. Unknown keys
// and every invalid value are collected into one ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& config);

EpisodicEnv build_env(const EnvDescriptor& desc);

struct SeedRun {
  std::uint64_t seed = 0;
  RunResult result;
};

struct Summary {
  double mean_regret = 0.0;
  double min_regret = 0.0;
  double max_regret = 0.0;
  double mean_n_switch = 0.0;
  std::size_t min_n_switch = 0;
  std::size_t max_n_switch = 0;
  std::size_t budget = 0;  // switch_budget(dims, K)
};

struct ExperimentResult {
  std::vector<std::size_t> dims;
  std::size_t horizon = 0;
  std::vector<SeedRun> runs;  // in config seed order
  Summary summary;
};

enum class Execution { kSerial, kParallel };

RunResult run_single(const ExperimentConfig& config, const EpisodicEnv& env, std::uint64_t seed);

// One run per seed, seeds in parallel unless kSerial. Output does not depend
// on the execution mode. Gated runs that break the budget or the doubling
// audit raise InvariantViolation with a report.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                Execution mode = Execution::kParallel);

// ---- adaptivity comparison ----------------------------------------------

struct ComparisonRow {
  std::size_t checkpoint = 0;
  double regret_a = 0.0;
  double regret_b = 0.0;
  double n_switch_a = 0.0;  // seed means
  double n_switch_b = 0.0;
  double ratio = 0.0;       // regret_a / regret_b; inf or nan when regret_b is 0
  std::size_t budget = 0;   // switch_budget at the checkpoint
};

// Configs must match in everything but the switch gate.
void check_comparable(const ExperimentConfig& a, const ExperimentConfig& b);
std::vector<ComparisonRow> comparison_rows(const ExperimentResult& a, const ExperimentResult& b,
                                           std::size_t episodes);
std::vector<ComparisonRow> compare_adaptivity(const ExperimentConfig& a,
                                              const ExperimentConfig& b,
                                              Execution mode = Execution::kParallel);
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

// ---- CSV -------------------------------------------------------------------

struct EpisodeRow {
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  bool switched = false;
  double instant_regret = 0.0;
  double cum_regret = 0.0;
  std::size_t n_switch_so_far = 0;
  std::vector<double> logdets;

  bool operator==(const EpisodeRow&) const = default;
};

std::vector<EpisodeRow> episode_rows(std::uint64_t seed, const RunResult& run);
std::vector<EpisodeRow> episode_rows(const ExperimentResult& result);

// seed,episode,switched,instant_regret,cum_regret,n_switch_so_far,logdet_h1..logdet_hH
void write_csv(std::ostream& out, const std::vector<EpisodeRow>& rows, std::size_t horizon);
void emit_csv(const std::vector<EpisodeRow>& rows, std::size_t horizon,
              const std::filesystem::path& path);
std::vector<EpisodeRow> parse_csv(std::istream& in, std::size_t* horizon = nullptr);
std::vector<EpisodeRow> read_csv_file(const std::filesystem::path& path,
                                      std::size_t* horizon = nullptr);

// Re-validates regret and switching invariants from rows alone. `gated`
// enables the doubling and budget checks. Returns violations.
std::vector<std::string> audit_rows(const std::vector<EpisodeRow>& rows,
                                    const std::vector<std::size_t>& dims, bool gated);

// One row per switch: planner or fit statistics, depending on the algorithm.
void write_diagnostics_csv(std::ostream& out, const RunResult& run);

// Writes episodes.csv, summary.json, switches_seed<S>.csv and
// diagnostics_seed<S>.csv into `dir`.
void write_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                   const std::filesystem::path& dir);

// ---- lemma suite -----------------------------------------------------------

struct LemmaOutcome {
  std::string name;
  std::size_t trials = 0;
  std::vector<std::string> violations;  // serialized failing instances
};

struct LemmaReport {
  std::vector<LemmaOutcome> lemmas;  // determinant envelope, det ratio, potential
  std::size_t azuma_trials = 0;
  std::size_t azuma_passes = 0;
  double azuma_pass_rate = 0.0;
  bool azuma_ok = false;

  std::size_t deterministic_trials() const;
  std::size_t violation_count() const;
  bool passed() const { return violation_count() == 0 && azuma_ok; }
};

LemmaReport lemma_suite(std::size_t trials = 1000, std::uint64_t seed = 0,
                        Execution mode = Execution::kParallel);
void print_lemma_report(std::ostream& out, const LemmaReport& report);

}  // namespace lowswitch
