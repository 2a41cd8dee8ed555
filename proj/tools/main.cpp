// Command-line front end: run, compare, lemmas.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 invariant violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lowswitch/errors.hpp"
#include "lowswitch/harness.hpp"

namespace fs = std::filesystem;
using namespace lowswitch;

namespace {

constexpr int kConfigError = 2;
constexpr int kInvariantViolation = 3;

fs::path output_dir(const std::string& flag, const ExperimentConfig& config, const char* fallback) {
  if (!flag.empty()) return flag;
  if (!config.out.empty()) return config.out;
  return fallback;
}

void print_summary(const ExperimentConfig& config, const ExperimentResult& r) {
  std::printf("%s K=%zu seeds=%zu  cum_regret mean %.6g [%.6g, %.6g]  n_switch mean %.6g [%zu, %zu]",
              algorithm_name(config.algorithm), config.K, r.runs.size(), r.summary.mean_regret,
              r.summary.min_regret, r.summary.max_regret, r.summary.mean_n_switch,
              r.summary.min_n_switch, r.summary.max_n_switch);
  if (is_gated(config.algorithm)) std::printf("  budget %zu", r.summary.budget);
  std::printf("\n");
}

int cmd_run(const std::string& config_path, const std::string& out_flag, bool serial) {
  const ExperimentConfig config = load_config(config_path);
  const ExperimentResult result =
      run_experiment(config, serial ? Execution::kSerial : Execution::kParallel);
  const fs::path dir = output_dir(out_flag, config, "results");
  write_outputs(config, result, dir);
  // The written CSV must stand on its own: re-audit it from disk.
  const auto problems =
      audit_rows(read_csv_file(dir / "episodes.csv"), result.dims, is_gated(config.algorithm));
  if (!problems.empty()) {
    for (const auto& p : problems) std::fprintf(stderr, "audit: %s\n", p.c_str());
    return kInvariantViolation;
  }
  print_summary(config, result);
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b, const std::string& out_flag,
                bool serial) {
  const ExperimentConfig a = load_config(path_a);
  const ExperimentConfig b = load_config(path_b);
  try {
    check_comparable(a, b);
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }
  const Execution mode = serial ? Execution::kSerial : Execution::kParallel;
  const ExperimentResult ra = run_experiment(a, mode);
  const ExperimentResult rb = run_experiment(b, mode);
  const auto rows = comparison_rows(ra, rb, a.K);
  print_summary(a, ra);
  print_summary(b, rb);
  write_comparison_csv(std::cout, rows);
  const fs::path dir = output_dir(out_flag, a, "results");
  write_outputs(a, ra, dir / "a");
  write_outputs(b, rb, dir / "b");
  std::ofstream out(dir / "comparison.csv", std::ios::binary);
  write_comparison_csv(out, rows);
  return 0;
}

int cmd_lemmas(std::size_t trials, std::uint64_t seed, const std::string& out_flag, bool serial) {
  const LemmaReport report =
      lemma_suite(trials, seed, serial ? Execution::kSerial : Execution::kParallel);
  print_lemma_report(std::cout, report);
  if (!out_flag.empty()) {
    fs::create_directories(out_flag);
    std::ofstream out(fs::path(out_flag) / "lemmas.txt", std::ios::binary);
    print_lemma_report(out, report);
  }
  return report.passed() ? 0 : kInvariantViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-switching RL simulator"};
  app.require_subcommand(1);
  std::string out;
  bool serial = false;
  app.add_option("--out", out, "Output directory (overrides the config's out)");
  app.add_flag("--serial", serial, "Run seeds sequentially (same output)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("--config", config_path, "Config file")->required();
  run->add_option("--out", out, "Output directory");

  std::string config_a, config_b;
  auto* compare = app.add_subcommand("compare", "Gated vs ungated comparison");
  compare->add_option("--config-a", config_a, "First config")->required();
  compare->add_option("--config-b", config_b, "Second config")->required();
  compare->add_option("--out", out, "Output directory");

  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  auto* lemmas = app.add_subcommand("lemmas", "Randomized lemma property suite");
  lemmas->add_option("--trials", trials, "Trials per lemma")->check(CLI::PositiveNumber);
  lemmas->add_option("--seed", seed, "Suite seed");
  lemmas->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(config_path, out, serial);
    if (*compare) return cmd_compare(config_a, config_b, out, serial);
    if (*lemmas) return cmd_lemmas(trials, seed, out, serial);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kConfigError;
  } catch (const InvariantViolation& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kInvariantViolation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
