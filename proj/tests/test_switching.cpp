#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "lowswitch/errors.hpp"
#include "lowswitch/switching.hpp"

using namespace lowswitch;

TEST_CASE("should_switch boundary") {
  SwitchController c({2, 3}, 1.0);
  const std::vector<double> base{0.0, 0.0};
  CHECK_FALSE(c.should_switch(base));
  CHECK(c.should_switch(std::vector<double>{std::numbers::ln2, 0.0}));
  CHECK_FALSE(c.should_switch(std::vector<double>{0.5, 0.6}));
  CHECK(c.doubled_layers(std::vector<double>{0.0, 0.7}) == 0b10);
  CHECK_THROWS_AS(c.should_switch(std::vector<double>{0.0}), InvalidArgument);
}

TEST_CASE("baselines start at the ridge logdet") {
  SwitchController c({3}, 2.0);
  CHECK(c.baselines()[0] == doctest::Approx(3.0 * std::log(2.0)));
}

TEST_CASE("record_switch refreshes every baseline") {
  SwitchController c({1, 1}, 1.0);
  c.record_switch(1, std::vector<double>{0.0, 0.0});
  CHECK(c.log().episodes() == std::vector<std::size_t>{1});
  const std::vector<double> now{1.0, 0.2};
  CHECK(c.should_switch(now));
  c.record_switch(17, now);
  CHECK_FALSE(c.should_switch(now));
  CHECK(c.baselines() == now);
  CHECK(c.log().episodes() == std::vector<std::size_t>{1, 17});
  CHECK(c.log().n_switch() == 1);
  CHECK(c.log().records()[1].trigger_mask == 0b01);
  CHECK_THROWS_AS(c.record_switch(17, now), InvalidState);
}

TEST_CASE("switch budget examples") {
  CHECK(switch_budget(std::vector<std::size_t>{1}, 2) == 1);
  CHECK(switch_budget(std::vector<std::size_t>{2, 2}, 100) == 26);
  CHECK_THROWS_AS(switch_budget(std::vector<std::size_t>{2}, 1), InvalidArgument);
  // Linear in the summed dimension.
  const std::size_t k = 4096;
  CHECK(switch_budget(std::vector<std::size_t>{3, 3, 3}, k) == 3 * switch_budget(std::vector<std::size_t>{3}, k));
  // Doubling K adds exactly sum d_h when ln K / ln 2 is integral.
  const std::vector<std::size_t> dims{2, 4};
  CHECK(switch_budget(dims, 1024) - switch_budget(dims, 512) == 6);
}

TEST_CASE("switch log csv round trip") {
  SwitchLog log;
  log.append({1, 0, {0.0, 0.1}});
  log.append({5, 0b11, {0.1 + 1e-17, 1.0 / 3.0}});
  std::stringstream ss;
  log.write_csv(ss);
  CHECK(ss.str().rfind("episode,trigger_layer_bitmask,logdet_h1,logdet_h2\n", 0) == 0);
  const SwitchLog back = SwitchLog::read_csv(ss);
  REQUIRE(back.records().size() == 2);
  CHECK(back.records()[1].episode == 5);
  CHECK(back.records()[1].trigger_mask == 0b11);
  CHECK(back.records()[1].logdets == log.records()[1].logdets);
}

TEST_CASE("switch log rejects non-increasing episodes") {
  SwitchLog log;
  log.append({3, 0, {0.0}});
  CHECK_THROWS_AS(log.append({3, 0, {0.0}}), InvalidState);
  CHECK_THROWS_AS(log.append({2, 0, {0.0}}), InvalidState);
}

TEST_CASE("audit flags a switch without doubling") {
  const std::vector<std::size_t> dims{1};
  SwitchLog ok;
  ok.append({1, 0, {0.0}});
  ok.append({4, 1, {std::log(3.0)}});
  CHECK(audit_switch_log(ok, dims, 100).empty());
  SwitchLog bad;
  bad.append({1, 0, {0.0}});
  bad.append({2, 1, {0.5}});
  CHECK_FALSE(audit_switch_log(bad, dims, 100).empty());
}
