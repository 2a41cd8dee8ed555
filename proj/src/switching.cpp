#include "lowswitch/switching.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lowswitch/errors.hpp"
#include "lowswitch/linalg.hpp"

namespace lowswitch {

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void SwitchLog::append(SwitchRecord record) {
  if (!records_.empty() && record.episode <= records_.back().episode) {
    throw InvalidState("switch log: episode " + std::to_string(record.episode) +
                       " is not after " + std::to_string(records_.back().episode));
  }
  records_.push_back(std::move(record));
}

std::vector<std::size_t> SwitchLog::episodes() const {
  std::vector<std::size_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.episode);
  return out;
}

void SwitchLog::write_csv(std::ostream& out) const {
  const std::size_t H = records_.empty() ? 0 : records_.front().logdets.size();
  out << "episode,trigger_layer_bitmask";
  for (std::size_t h = 0; h < H; ++h) out << ",logdet_h" << (h + 1);
  out << '\n';
  for (const auto& r : records_) {
    out << r.episode << ',' << r.trigger_mask;
    for (double v : r.logdets) out << ',' << fmt17(v);
    out << '\n';
  }
}

SwitchLog SwitchLog::read_csv(std::istream& in) {
  SwitchLog log;
  std::string line;
  if (!std::getline(in, line)) return log;  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    SwitchRecord rec;
    std::getline(row, cell, ',');
    rec.episode = std::stoull(cell);
    std::getline(row, cell, ',');
    rec.trigger_mask = std::stoull(cell);
    while (std::getline(row, cell, ',')) rec.logdets.push_back(std::stod(cell));
    log.append(std::move(rec));
  }
  return log;
}

SwitchController::SwitchController(std::vector<std::size_t> dims, double ridge)
    : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 64) {
    throw InvalidArgument("switch controller: need 1..64 layers");
  }
  if (!(ridge > 0.0)) throw InvalidArgument("switch controller: ridge must be positive");
  baselines_.reserve(dims_.size());
  for (auto d : dims_) baselines_.push_back(static_cast<double>(d) * std::log(ridge));
}

void SwitchController::check_length(std::span<const double> logdets) const {
  if (logdets.size() != dims_.size()) {
    throw InvalidArgument("switch controller: expected " + std::to_string(dims_.size()) +
                          " logdets, got " + std::to_string(logdets.size()));
  }
}

std::uint64_t SwitchController::doubled_layers(std::span<const double> current_logdets) const {
  check_length(current_logdets);
  std::uint64_t mask = 0;
  for (std::size_t h = 0; h < dims_.size(); ++h) {
    if (det_doubled(current_logdets[h], baselines_[h])) mask |= std::uint64_t{1} << h;
  }
  return mask;
}

bool SwitchController::should_switch(std::span<const double> current_logdets) const {
  return doubled_layers(current_logdets) != 0;
}

void SwitchController::record_switch(std::size_t episode, std::span<const double> current_logdets) {
  const std::uint64_t mask = doubled_layers(current_logdets);
  log_.append({episode, mask, {current_logdets.begin(), current_logdets.end()}});
  baselines_.assign(current_logdets.begin(), current_logdets.end());
}

std::size_t switch_budget(std::span<const std::size_t> dims, std::size_t episodes) {
  if (episodes < 2) throw InvalidArgument("switch_budget: K must be at least 2");
  const double total = std::accumulate(dims.begin(), dims.end(), 0.0);
  // log2 is exact at powers of two, where ln K / ln 2 rounds below the integer.
  return static_cast<std::size_t>(std::floor(total * std::log2(static_cast<double>(episodes))));
}

std::vector<std::string> audit_switch_log(const SwitchLog& log,
                                          std::span<const std::size_t> dims,
                                          std::size_t episodes) {
  std::vector<std::string> problems;
  const auto& recs = log.records();
  double prev_sum = 0.0;  // lambda = 1 start
  std::vector<double> prev(dims.size(), 0.0);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    if (r.logdets.size() != dims.size()) {
      problems.push_back("switch at episode " + std::to_string(r.episode) +
                         ": wrong number of layers");
      continue;
    }
    const double sum = std::accumulate(r.logdets.begin(), r.logdets.end(), 0.0);
    if (i > 0) {
      bool doubled = false;
      for (std::size_t h = 0; h < dims.size(); ++h) doubled |= det_doubled(r.logdets[h], prev[h]);
      if (!doubled) {
        problems.push_back("switch at episode " + std::to_string(r.episode) +
                           ": no layer doubled its determinant");
      }
      if (sum < prev_sum + std::numbers::ln2 - 1e-9) {
        problems.push_back("switch at episode " + std::to_string(r.episode) +
                           ": product determinant did not double");
      }
    }
    prev = r.logdets;
    prev_sum = sum;
  }
  if (episodes >= 2 && log.n_switch() > switch_budget(dims, episodes)) {
    problems.push_back("n_switch " + std::to_string(log.n_switch()) + " exceeds budget " +
                       std::to_string(switch_budget(dims, episodes)));
  }
  return problems;
}

}  // namespace lowswitch
