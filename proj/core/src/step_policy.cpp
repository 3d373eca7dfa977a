#include "dmab/step_policy.hpp"

#include <map>
#include <stdexcept>
#include <utility>

namespace dmab {

PolicyValue evaluate_step_policy(const StepPolicy& sp) {
  if (!sp.dag) throw std::invalid_argument("step policy: missing outcome DAG");
  if (!sp.rule) throw std::invalid_argument("step policy: missing rule");
  if (sp.delay < 0 || sp.delay > 30) {
    throw std::invalid_argument("step policy: delay must lie in [0, 30]");
  }
  if (sp.horizon < 0) throw std::invalid_argument("step policy: negative horizon");
  if (sp.dag->max_depth < sp.horizon) {
    throw std::invalid_argument("step policy: DAG shallower than the horizon");
  }

  const OutcomeDag& dag = *sp.dag;
  const int delta = sp.delay;
  PolicyValue val;

  // Resolve every still-pending play of a finished trajectory, oldest first.
  auto drain = [&](int node, std::uint32_t pending, double m) {
    std::map<int, double> dist{{node, m}};
    for (int j = delta - 1; j >= 0; --j) {
      if (!((pending >> j) & 1u)) continue;
      std::map<int, double> next;
      for (const auto& [v, q] : dist) {
        const DagState& st = dag.at(v);
        val.reward += q * st.success_prob * st.effective_reward;
        next[st.success_child] += q * st.success_prob;
        next[st.failure_child] += q * (1.0 - st.success_prob);
      }
      dist = std::move(next);
    }
  };

  std::map<std::pair<int, std::uint32_t>, double> mass;
  mass[{dag.root, 0u}] = 1.0;
  for (int t = 0; t < sp.horizon; ++t) {
    std::map<std::pair<int, std::uint32_t>, double> next;
    for (const auto& [state, m] : mass) {
      const auto [node, pending] = state;
      const StepAction a = sp.action({t, node, pending});
      if (a == StepAction::Quit) {
        drain(node, pending, m);
        continue;
      }
      const std::uint32_t play_bit = a == StepAction::Play ? 1u : 0u;
      val.plays += m * static_cast<double>(play_bit);

      // Advance to step t+1: the play from step t-delta (if any) resolves.
      std::uint32_t resolved;
      std::uint32_t np;
      if (delta == 0) {
        resolved = play_bit;
        np = 0u;
      } else {
        resolved = (pending >> (delta - 1)) & 1u;
        np = ((pending << 1) | play_bit) & ((1u << delta) - 1u);
      }
      if (resolved) {
        const DagState& st = dag.at(node);
        val.reward += m * st.success_prob * st.effective_reward;
        next[{st.success_child, np}] += m * st.success_prob;
        next[{st.failure_child, np}] += m * (1.0 - st.success_prob);
      } else {
        next[{node, np}] += m;
      }
    }
    mass = std::move(next);
  }
  for (const auto& [state, m] : mass) drain(state.first, state.second, m);
  return val;
}

}  // namespace dmab
