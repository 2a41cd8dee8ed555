#include <doctest.h>

#include <sstream>

#include "lowswitch/harness.hpp"

using namespace lowswitch;

namespace {

std::string csv(const ExperimentResult& r) {
  std::ostringstream os;
  write_csv(os, episode_rows(r), r.horizon);
  return os.str();
}

}  // namespace

TEST_CASE("parallel and serial seed loops produce identical output") {
  const char* configs[] = {
      R"({"env": {"family": "onehot_random", "num_states": 3, "num_actions": 2, "horizon": 2, "env_seed": 2},
          "algorithm": "eleanor", "K": 150, "seeds": [1, 2, 3, 4, 5, 6]})",
      R"({"env": {"family": "onehot_random", "num_states": 3, "num_actions": 2, "horizon": 2, "env_seed": 2,
                  "noise_std": 0.1},
          "algorithm": "glm", "K": 150, "seeds": [6, 5, 4, 3, 2, 1], "C": 0.3})",
      R"({"env": {"family": "linear_bandit", "theta_star": [0.7, 0.2, 0.4], "orthogonal": true, "noise_std": 0.2},
          "algorithm": "eleanor_always_switch", "K": 200, "seeds": [10, 11, 12]})",
  };
  for (const char* text : configs) {
    const auto c = parse_config(text);
    const auto serial = run_experiment(c, Execution::kSerial);
    const auto parallel = run_experiment(c, Execution::kParallel);
    CHECK(csv(serial) == csv(parallel));
    REQUIRE(serial.runs.size() == parallel.runs.size());
    for (std::size_t i = 0; i < serial.runs.size(); ++i) {
      CHECK(serial.runs[i].seed == parallel.runs[i].seed);
      CHECK(serial.runs[i].result.switches.episodes() == parallel.runs[i].result.switches.episodes());
    }
    CHECK(serial.summary.mean_regret == parallel.summary.mean_regret);
  }
}

TEST_CASE("parallel and serial lemma suites agree") {
  const auto a = lemma_suite(200, 9, Execution::kSerial);
  const auto b = lemma_suite(200, 9, Execution::kParallel);
  std::ostringstream sa, sb;
  print_lemma_report(sa, a);
  print_lemma_report(sb, b);
  CHECK(sa.str() == sb.str());
}
