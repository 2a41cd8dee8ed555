#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lowswitch {

struct SwitchRecord {
  std::size_t episode = 0;
  std::uint64_t trigger_mask = 0;  // bit h set when layer h doubled; 0 for the initial solve
  std::vector<double> logdets;     // per-layer logdet at the switch
};

// Ordered policy-update episodes. The first entry is the initial solve at
// episode 1; every later entry is one policy change.
class SwitchLog {
 public:
  void append(SwitchRecord record);

  const std::vector<SwitchRecord>& records() const { return records_; }
  std::vector<std::size_t> episodes() const;
  bool empty() const { return records_.empty(); }

  // Global switching cost: policy updates after the initial deployment.
  std::size_t n_switch() const { return records_.empty() ? 0 : records_.size() - 1; }

  // CSV: episode,trigger_layer_bitmask,logdet_h1,...,logdet_hH
  void write_csv(std::ostream& out) const;
  static SwitchLog read_csv(std::istream& in);

 private:
  std::vector<SwitchRecord> records_;
};

// Determinant-doubling gate shared by both algorithms.
class SwitchController {
 public:
  SwitchController(std::vector<std::size_t> dims, double ridge);

  // True iff some layer's logdet reached baseline + ln 2.
  bool should_switch(std::span<const double> current_logdets) const;
  std::uint64_t doubled_layers(std::span<const double> current_logdets) const;

  // Refreshes every baseline and appends to the log.
  void record_switch(std::size_t episode, std::span<const double> current_logdets);

  const std::vector<double>& baselines() const { return baselines_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const SwitchLog& log() const { return log_; }

 private:
  void check_length(std::span<const double> logdets) const;

  std::vector<std::size_t> dims_;
  std::vector<double> baselines_;
  SwitchLog log_;
};

// floor(sum_h d_h * ln K / ln 2): the a-priori cap on n_switch for a run of
// K episodes with lambda = 1.
std::size_t switch_budget(std::span<const std::size_t> dims, std::size_t episodes);

// Post-hoc audit of a gated log against the doubling rule: each non-initial
// switch has a doubled layer, the summed logdet rises by ln 2 between
// switches, and n_switch respects the budget. Returns violations (empty = ok).
std::vector<std::string> audit_switch_log(const SwitchLog& log,
                                          std::span<const std::size_t> dims,
                                          std::size_t episodes);

}  // namespace lowswitch
