#pragma once

#include <cstddef>
#include <vector>

#include "lowswitch/envs.hpp"

namespace lowswitch {

// Sufficient statistics of the observed (s, a, r, s') tuples of one layer.
// Per-sample ridge and GLM objectives over a finite env depend on the data
// only through these sums.
class LayerHistory {
 public:
  struct Cell {
    double count = 0.0;
    double reward_sum = 0.0;
    double reward_sq_sum = 0.0;
    std::vector<double> next_count;       // [s']
    std::vector<double> next_reward_sum;  // [s'] sum of r over samples landing in s'
  };

  LayerHistory(const EpisodicEnv& env, std::size_t layer);

  void add(const Step& step);

  std::size_t layer() const { return layer_; }
  std::size_t total() const { return total_; }
  const Cell& cell(std::size_t s, std::size_t a) const { return cells_[s][a]; }
  std::size_t num_states() const { return cells_.size(); }
  std::size_t num_actions(std::size_t s) const { return cells_[s].size(); }

 private:
  std::size_t layer_;
  std::size_t total_ = 0;
  std::vector<std::vector<Cell>> cells_;
};

}  // namespace lowswitch
