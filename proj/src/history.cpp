#include "lowswitch/history.hpp"

#include "lowswitch/errors.hpp"

namespace lowswitch {

LayerHistory::LayerHistory(const EpisodicEnv& env, std::size_t layer) : layer_(layer) {
  cells_.resize(env.num_states());
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    cells_[s].resize(env.num_actions(layer, s));
    for (auto& c : cells_[s]) {
      c.next_count.assign(env.num_states(), 0.0);
      c.next_reward_sum.assign(env.num_states(), 0.0);
    }
  }
}

void LayerHistory::add(const Step& step) {
  if (step.layer != layer_) throw InvalidArgument("LayerHistory: step from another layer");
  auto& c = cells_.at(step.state).at(step.action);
  c.count += 1.0;
  c.reward_sum += step.reward;
  c.reward_sq_sum += step.reward * step.reward;
  c.next_count.at(step.next_state) += 1.0;
  c.next_reward_sum[step.next_state] += step.reward;
  ++total_;
}

}  // namespace lowswitch
