#pragma once

#include <vector>

#include "dmab/policy.hpp"

namespace dmab {

/// Expected value of a policy: total effective reward and total plays.
struct PolicyValue {
  double reward = 0.0;
  double plays = 0.0;
};

/// Probability mass of finishing at a posterior state.  `plays` is the DAG
/// depth there, i.e. how many plays any path reaching it has made.
struct StopAtom {
  int dag_node = -1;
  int plays = 0;
  double mass = 0.0;
};

struct EvalDetail {
  PolicyValue value;
  std::vector<double> reach;    // visit probability per policy node
  std::vector<StopAtom> stops;  // aggregated by posterior state; sums to 1
};

/// Expected reward/plays under the prior predictive law, by forward
/// propagation in topological order.  Assumes a validated policy.
PolicyValue evaluate(const SingleArmPolicy& policy);

/// Same, conditional on the arm's true success probability `mu`.
PolicyValue evaluate_given_mean(const SingleArmPolicy& policy, double mu);

EvalDetail evaluate_detailed(const SingleArmPolicy& policy);

/// Full conditional-on-the-true-mean account of a policy.  In
/// `stop_distribution`, `plays` counts plays made from the policy root
/// (DAG depth minus root depth), so it is the stopped path length.
struct ConditionalValue {
  double true_mean = 0.0;
  double reward_given_mean = 0.0;  // E[effective reward | true mean]
  double path_length = 0.0;        // E[plays | true mean]
  std::vector<StopAtom> stop_distribution;
};

ConditionalValue evaluate_conditional(const SingleArmPolicy& policy, double mu);

/// Cross-check of the conditional bookkeeping: without budget folding each
/// play pays bid * true_mean in expectation, so
/// reward_given_mean == sum_v true_mean * bid * y(v) * length(v).
/// Returns the absolute gap between the two sides.
double claim1_gap(const ConditionalValue& cv, double bid);

/// Independent consistency check for count-keyed DAGs: a path that stops
/// with s successes has collected bid * min(s, paying) where
/// paying = ceil(budget / bid).  Returns |evaluate().reward - that sum|,
/// which should vanish (optional-stopping identity).
double stop_reward_gap(const SingleArmPolicy& policy, double bid, double budget);

/// Largest number of plays on any positively-weighted path.
int max_path_plays(const SingleArmPolicy& policy);

/// Rewrites the policy so no path makes more than `cap` plays, cutting
/// mid-block where needed (a block's play count is reduced, then the policy
/// quits).  Pathwise plays never increase.
SingleArmPolicy cap_plays(const SingleArmPolicy& policy, int cap);

struct TruncationResult {
  SingleArmPolicy policy;
  int cap = 0;  // ceil(beta * max_path_plays)
};

/// Play-quota truncation: keeps the first ceil(beta * K) plays of every
/// path, K the policy's pathwise play bound.  Guarantees expected reward
/// at least beta times the original (effective rewards are pathwise
/// nonincreasing, so a play prefix keeps a proportional reward share)
/// while never increasing pathwise plays.
TruncationResult truncate_plays(const SingleArmPolicy& policy, double beta);

}  // namespace dmab
