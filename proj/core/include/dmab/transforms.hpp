#pragma once

#include <string>
#include <vector>

#include "dmab/evaluate.hpp"
#include "dmab/policy.hpp"
#include "dmab/step_policy.hpp"

namespace dmab {

/// Before/after account of one policy rewrite.  `slack` is the smallest
/// margin by which the asserted inequalities hold; callers treat
/// slack >= -1e-9 as "bound verified".
struct TransformReport {
  std::string bound_checked;
  PolicyValue input_value;
  PolicyValue output_value;
  double slack = 0.0;
};

/// Rewrites a per-step strategy into an equivalent block policy: chunks of
/// delay+1 steps become blocks of span 2*delay+1, children keyed by the
/// block's success count, with the strategy's mid-chunk disclosures folded
/// into per-pattern continuation mixtures.  Output horizon is 2*horizon.
/// Expected reward and plays are preserved exactly (the postcondition
/// R nondecreasing / N nonincreasing holds with equality).
///
/// Requires an exchangeable outcome law (count-keyed DAG), delay <= 3 and
/// horizon <= 24 (explicit materialization), and `delay`/`horizon` equal to
/// the strategy's own.  Throws std::invalid_argument otherwise.
SingleArmPolicy to_block_structured(const StepPolicy& p, int delay, int horizon,
                                    TransformReport* report = nullptr);

/// From the first block on any path with >= ceil(c*delay) plays, switches to
/// continuous one-play-per-step execution that feeds outcomes back to a
/// lag-delay simulation of the input policy.  Postconditions (exact):
/// R nondecreasing, N <= (1+1/c) * N(input).  Output horizon grows by
/// `delay` (the drained feedback pipeline can spill past the input horizon)
/// and is declared c-delay-free.
///
/// Input must be all-Regular (block-structured).  Throws
/// std::invalid_argument for c <= 0, c > 1, or a non-block-structured input.
SingleArmPolicy to_delay_free(const SingleArmPolicy& p, double c,
                              TransformReport* report = nullptr);

/// Compacts a c-delay-free policy by block grouping: idle blocks are
/// spliced out; each surviving block either becomes a group root -- played
/// inflated by floor(2*plays/alpha) extra plays whose outcomes are stored --
/// or is eliminated by replaying stored outcomes from the oldest open root
/// of a size class at least its own (hypergeometric draws, no time, no
/// plays).  A root eliminates at most floor(1/alpha) blocks.
/// Postconditions (exact): R nondecreasing, N <= (1+2/alpha) * N(input),
/// and every path runs at most ceil(alpha*Q) + ceil(log2(delay)/alpha)
/// nonempty regular blocks, Q an upper bound on the input's per-path count.
/// Output horizon grows by `delay` and is declared alpha-well-structured.
///
/// Throws std::invalid_argument when c > alpha/(alpha+2), the input is not
/// declared c-delay-free, Q is below the input's per-path block count, the
/// outcome law is not exchangeable, or an inflated block cannot fit the
/// delay+1 play cap.
SingleArmPolicy to_well_structured(const SingleArmPolicy& p, double alpha,
                                   double c, int q_blocks,
                                   TransformReport* report = nullptr);

/// Halts execution at elapsed T/2: nodes past the cut quit, blocks crossing
/// it keep only their first T/2 - elapsed plays.  For policies produced by
/// the (alpha=1/8, c=1/17) pipeline the kept prefix carries at least 1/8 of
/// the reward: the report checks R(out) >= R(in)/8 alongside pathwise
/// nonincreasing plays.  Throws std::invalid_argument when the input is not
/// declared well-structured.
SingleArmPolicy truncate_half(const SingleArmPolicy& p, int horizon,
                              TransformReport* report = nullptr);

/// Largest count of nonempty Regular blocks on any positively-weighted
/// root-to-quit path.
int max_regular_blocks_per_path(const SingleArmPolicy& p);

/// Additive block allowance of the well-structuring bound:
/// ceil(log2(delay)/alpha), zero when delay <= 1 (no size classes exist).
int well_structured_additive(int delay, double alpha);

/// Full rewrite chain: block-structure, delay-free(c), well-structure(alpha),
/// then halt at the original horizon (= half of the blocked 2T horizon).
/// Reports carry each stage plus a composition line asserting
/// R(final) >= alpha * R(step input) and N(final) <= gamma * N(step input),
/// gamma = 2 * (1 + 1/alpha) * (1 + 2/alpha).
struct PipelineResult {
  SingleArmPolicy policy;
  std::vector<TransformReport> reports;
};

PipelineResult transform_pipeline(const StepPolicy& p, double alpha, double c);

}  // namespace dmab
