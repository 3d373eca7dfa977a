#pragma once

#include <vector>

#include "dmab/outcome_dag.hpp"

namespace dmab {

/// Operating mode of a policy block.  Regular blocks span 2*delay+1 steps
/// (plays up-front, then wait out disclosure); no-delay blocks span a single
/// step and exist so a policy tail can act on every outcome immediately.
enum class BlockMode { Regular, NoDelay };

inline int block_span(BlockMode mode, int delay) {
  return mode == BlockMode::Regular ? 2 * delay + 1 : 1;
}

/// A block-granularity state: posterior, elapsed steps, and mode.
struct BlockState {
  int dag_node = 0;
  int elapsed = 0;
  BlockMode mode = BlockMode::Regular;

  friend bool operator==(const BlockState&, const BlockState&) = default;
};

/// One landing point of a block of plays: the posterior state reached and
/// the probability of reaching it.
struct BlockOutcome {
  int node = -1;
  double prob = 0.0;
};

/// Expected value and landing distribution of `plays` consecutive plays
/// started from one posterior state, with no intervening decisions.
struct KernelRow {
  double expected_reward = 0.0;     // sum of effective rewards collected
  double expected_successes = 0.0;  // raw success count, ignores budget folding
  std::vector<BlockOutcome> outcomes;
};

/// Computes the row for `plays` plays from `node` under the prior predictive
/// law encoded by the DAG.  plays == 0 yields a unit mass on `node` with zero
/// reward.  Throws std::out_of_range when the DAG is too shallow.
KernelRow kernel_row(const OutcomeDag& dag, int node, int plays);

/// Row conditional on the arm's true success probability being `mu`:
/// outcomes are i.i.d. Bernoulli(mu), but landing states and effective
/// rewards still follow the DAG (budget folding stays path-exact).
KernelRow kernel_row_given_mean(const OutcomeDag& dag, int node, int plays,
                                double mu);

/// marginals[p] = expected effective reward of the (p+1)-th play from `node`
/// (prior predictive).  Prefix sums reproduce kernel_row expected rewards;
/// the sequence is the increment view used by play-budgeted optimizers.
std::vector<double> play_marginals(const OutcomeDag& dag, int node,
                                   int max_plays);

/// Kernel table for one block state: rows for 0..l_max plays plus the elapsed
/// advance of the block span.
struct BlockKernel {
  BlockState state;
  int span = 0;                  // elapsed advance: 2*delay+1 or 1
  std::vector<KernelRow> rows;   // rows[l] for l plays
};

/// Spec'd mode caps: regular states allow l_max <= ceil(c*delay), no-delay
/// states l_max <= 1.  Throws std::invalid_argument past the cap.
BlockKernel block_kernel(const OutcomeDag& dag, const BlockState& state,
                         int l_max, int delay, double c);

}  // namespace dmab
