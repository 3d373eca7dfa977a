#include "dmab/block_kernel.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace dmab {
namespace {

// Shared forward walk: advance a probability mass one play at a time.  The
// per-state success chance is success_prob(v) under the prior predictive, or
// the fixed `mu` when conditioning on ground truth.
KernelRow propagate(const OutcomeDag& dag, int node, int plays,
                    bool conditional, double mu) {
  if (node < 0 || node >= dag.size()) {
    throw std::out_of_range("block kernel: node index out of range");
  }
  if (plays < 0) throw std::out_of_range("block kernel: negative play count");

  std::map<int, double> mass;
  mass[node] = 1.0;
  KernelRow row;
  for (int step = 0; step < plays; ++step) {
    std::map<int, double> next;
    for (const auto& [v, m] : mass) {
      const DagState& st = dag.at(v);
      if (st.success_child < 0 || st.failure_child < 0) {
        throw std::out_of_range("block kernel: DAG too shallow for " +
                                std::to_string(plays) + " plays from " +
                                dag.at(node).key);
      }
      const double p = conditional ? mu : st.success_prob;
      row.expected_reward += m * p * st.effective_reward;
      row.expected_successes += m * p;
      next[st.success_child] += m * p;
      next[st.failure_child] += m * (1.0 - p);
    }
    mass = std::move(next);
  }
  row.outcomes.reserve(mass.size());
  for (const auto& [v, m] : mass) row.outcomes.push_back({v, m});
  return row;
}

}  // namespace

KernelRow kernel_row(const OutcomeDag& dag, int node, int plays) {
  return propagate(dag, node, plays, /*conditional=*/false, 0.0);
}

KernelRow kernel_row_given_mean(const OutcomeDag& dag, int node, int plays,
                                double mu) {
  if (mu < 0.0 || mu > 1.0) {
    throw std::out_of_range("block kernel: mu must lie in [0,1]");
  }
  return propagate(dag, node, plays, /*conditional=*/true, mu);
}

std::vector<double> play_marginals(const OutcomeDag& dag, int node,
                                   int max_plays) {
  if (node < 0 || node >= dag.size()) {
    throw std::out_of_range("play marginals: node index out of range");
  }
  std::vector<double> marginals;
  marginals.reserve(static_cast<std::size_t>(std::max(0, max_plays)));
  std::map<int, double> mass;
  mass[node] = 1.0;
  for (int p = 0; p < max_plays; ++p) {
    double increment = 0.0;
    std::map<int, double> next;
    for (const auto& [v, m] : mass) {
      const DagState& st = dag.at(v);
      if (st.success_child < 0 || st.failure_child < 0) {
        throw std::out_of_range("play marginals: DAG too shallow for " +
                                std::to_string(max_plays) + " plays");
      }
      increment += m * st.success_prob * st.effective_reward;
      next[st.success_child] += m * st.success_prob;
      next[st.failure_child] += m * (1.0 - st.success_prob);
    }
    marginals.push_back(increment);
    mass = std::move(next);
  }
  return marginals;
}

BlockKernel block_kernel(const OutcomeDag& dag, const BlockState& state,
                         int l_max, int delay, double c) {
  if (delay < 0) throw std::invalid_argument("block kernel: negative delay");
  const int cap =
      state.mode == BlockMode::Regular ? ceil_int(c * delay) : 1;
  if (l_max < 0 || l_max > cap) {
    throw std::invalid_argument(
        "block kernel: " + std::to_string(l_max) + " plays exceed the " +
        (state.mode == BlockMode::Regular ? "regular" : "no-delay") +
        " cap of " + std::to_string(cap));
  }
  BlockKernel k;
  k.state = state;
  k.span = block_span(state.mode, delay);
  k.rows.reserve(static_cast<std::size_t>(l_max) + 1);
  for (int l = 0; l <= l_max; ++l) {
    k.rows.push_back(kernel_row(dag, state.dag_node, l));
  }
  return k;
}

}  // namespace dmab
