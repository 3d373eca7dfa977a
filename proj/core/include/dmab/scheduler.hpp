#pragma once

#include <cstdint>
#include <vector>

#include "dmab/evaluate.hpp"
#include "dmab/policy.hpp"
#include "dmab/types.hpp"

namespace dmab {

/// A feasible global policy over all arms: a priority order plus the per-arm
/// block policies, executed by the trajectory runners in sim.
///
/// SequentialRatio: play each arm's policy to completion in priority order,
/// moving on when it quits; hard stop once `horizon` plays are made.
///
/// Combine: each arm participates independently with probability
/// `participation`; every play slot goes to the highest-priority
/// participating arm that is active (not waiting on within-block feedback).
/// When every participating arm is passive or done, the slot idles unless
/// `opportunistic` is set (experimental mode, off by default).
struct GlobalPolicy {
  enum class Mode { SequentialRatio, Combine };
  Mode mode = Mode::SequentialRatio;
  std::vector<int> order;  ///< order[0] = highest priority arm index
  double participation = kDefaultParticipation;
  bool opportunistic = false;
  int horizon = 0;
  std::vector<SingleArmPolicy> policies;  ///< aligned with the arm list
};

/// Orders arms by R(P)/N(P) descending (ties: arm index ascending; arms that
/// never play go last) for sequential execution.  `values` must align with
/// `policies`; the combined expected plays must fit the horizon.
GlobalPolicy round_sequential(std::vector<SingleArmPolicy> policies,
                              const std::vector<PolicyValue>& values,
                              int horizon);

/// Builds the priority-combination policy.  The order is the input order
/// unless `randomize_order` shuffles it (seeded, reproducible).
GlobalPolicy combine(std::vector<SingleArmPolicy> policies, int horizon,
                     double participation = kDefaultParticipation,
                     bool randomize_order = false, std::uint64_t seed = 0);

/// Sequential budget settlement for one bidder: type j is paid
/// Y_j = min(Z_j, max(B - sum_{j' < j} Z_{j'}, 0)).
struct SettlementLedger {
  double budget = 0.0;
  std::vector<double> accrued;  ///< Z_j, in settlement order
  std::vector<double> payouts;  ///< Y_j
  double remaining = 0.0;       ///< budget left after all settlements
  double total = 0.0;           ///< sum of payouts = min(budget, sum Z)
};

/// Settles accrued rewards against a budget.  Throws std::invalid_argument
/// on negative accruals or a negative budget.
SettlementLedger settle(const std::vector<double>& accrued, double budget);

/// Slack of the concave-chain inequality for a prefix of length k:
///
///   sum_{i<k} r_i (1 - sum_{j<i} w_j / w)
///     >= (sum_{i<k} r_i)(sum_{i<k} w_i) / 2w
///        + sum_{i<k} r_i w_i / 2w
///        + (sum_{i<k} r_i)(sum_{j>=k} w_j) / w
///
/// where w = sum of all weights.  Requires positive weights and r_i/w_i
/// nonincreasing.  Returns LHS - RHS (nonnegative up to rounding).
double concave_chain_slack(const std::vector<double>& rewards,
                           const std::vector<double>& weights, int k);

/// A finite-support nonnegative random variable.
struct DiscreteRv {
  std::vector<double> values;
  std::vector<double> probs;
};

/// Slack of the settlement inequality E[min(budget, sum_j Z_j)] >=
/// (1/2) sum_j E[Z_j], computed exactly over the joint support of
/// independent Z_j.  Requires each Z_j <= budget pointwise and
/// sum_j E[Z_j] <= budget.  Throws std::invalid_argument when the joint
/// support exceeds 10^7 points.
double settlement_slack(const std::vector<DiscreteRv>& accruals, double budget);

}  // namespace dmab
