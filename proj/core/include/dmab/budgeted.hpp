#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmab/planner.hpp"
#include "dmab/scheduler.hpp"
#include "dmab/sim.hpp"
#include "dmab/types.hpp"

namespace dmab {

/// Budgeted allocation: several impression types arrive as parallel bandit
/// instances, and each bidder's total payout across types is capped by a
/// budget.  Planning couples the per-type play budgets with the per-bidder
/// reward budgets through a multi-multiplier Lagrangian; execution runs one
/// combine trajectory per type and settles each bidder's accruals against
/// the budget.

struct BidderSpec {
  std::string id;
  double budget = kInfiniteBudget;
};

struct TypeSpec {
  std::string id;
  int arrivals = 0;  ///< T_j; the global horizon is the sum over types
};

/// One bidder/type pair: the bid paid per conversion, the conversion
/// disclosure delay in that type's own slots, and the conversion prior.
struct PairSpec {
  double bid = 1.0;
  int delay = 0;
  PriorSpec prior;
};

struct AllocationInstance {
  std::vector<BidderSpec> bidders;
  std::vector<TypeSpec> types;
  std::vector<std::vector<PairSpec>> pairs;  ///< pairs[bidder][type]
};

/// Per-pair reward caps B_ij <= B_i with B_ij / b_ij integral, folded into
/// each pair's posterior DAG so a trajectory can never accrue beyond them.
struct ShadowBudget {
  std::vector<std::vector<double>> amount;  ///< amount[bidder][type]
};

struct BudgetedPlan {
  ShadowBudget shadow;
  double objective = 0.0;      ///< planned expected revenue M
  std::vector<double> lambda;  ///< per-type play price at the solution
  std::vector<double> mu;      ///< per-bidder reward price at the solution
  std::vector<double> pair_reward;   ///< flattened [bidder*types+type] share
  std::vector<GlobalPolicy> per_type;  ///< combine policy per type
  std::vector<std::vector<ArmSpec>> type_arms;  ///< shadow-folded arms per type
  std::vector<std::string> warnings;
};

/// Plans the budgeted allocation:
///   1. solves each type's planner relaxation with only the per-pair cap
///      B_i, reads off each pair's reward share, and freezes the shadow
///      budgets B_ij = b_ij * floor(min(B_i, share) / b_ij);
///   2. re-plans every type against the shadow-folded arms while pricing
///      each bidder's total reward with a multiplier mu_i, implemented by
///      scaling the pair's bid and shadow budget by (1 - mu_i) so the
///      type-level play-price bisection is reused unchanged;
///   3. bisects the mu_i coordinate-wise until every bidder's planned
///      reward fits the budget, then reports the objective M and builds
///      one combine policy per type from the extracted pair policies.
///
/// Types containing a delayed pair are planned on the inflated play budget
/// and scaled back down, exactly like the single-instance pipeline.  Pairs
/// whose type is too short for the delayed structure (fewer than two
/// arrivals) raise a configuration error naming the pair.  Horizons below
/// the published threshold 48(8*delay+2)*log(T_j) produce warnings, not
/// errors.
BudgetedPlan plan_budgeted(const AllocationInstance& inst,
                           double alpha = kDefaultAlpha, double c = kDefaultC,
                           double participation = kDefaultParticipation,
                           std::uint64_t seed = 0);

/// Revenue of one executed allocation trajectory.
struct BudgetedOutcome {
  double revenue = 0.0;                ///< total settled payout
  std::vector<double> bidder_revenue;  ///< settled payout per bidder
  std::vector<std::vector<double>> pair_accrued;  ///< Z_ij before settlement
};

/// Runs one trajectory: each type's combine policy executes on its own
/// arrival subsequence (delays tick in type-local slots), accruing Z_ij per
/// pair; each bidder's accruals are then settled against the budget in type
/// order, so realized revenue never exceeds B_i.
BudgetedOutcome execute_budgeted(const BudgetedPlan& plan,
                                 const AllocationInstance& inst,
                                 std::uint64_t seed, std::uint64_t trial = 0);

/// Monte-Carlo estimate of the executed revenue together with the mean
/// per-pair accruals (for the settlement bound E[min(B, sum Z)] >=
/// sum E[Z] / 2 when sum E[Z] <= B).  `revenue.arm_mean` slots carry the
/// per-bidder revenue means, in bidder order.
struct BudgetedEstimate {
  Estimate revenue;
  std::vector<std::vector<double>> pair_accrued_mean;
};

BudgetedEstimate run_budgeted_mc(const BudgetedPlan& plan,
                                 const AllocationInstance& inst, long trials,
                                 std::uint64_t seed);

/// The global arrival order: a length-sum(T_j) sequence of type indices,
/// interleaved proportionally to the arrival counts (Bresenham spacing).
/// A nonzero seed shuffles the sequence reproducibly instead.
std::vector<int> arrival_schedule(const AllocationInstance& inst,
                                  std::uint64_t seed);

/// Exact optimum of the joint allocation MDP by backward induction, for
/// tiny undelayed instances with unit bids and integer (or infinite)
/// budgets: each arriving impression (fixed schedule) is given to one
/// bidder or skipped, conversions pay while the bidder's budget lasts, and
/// every pair's posterior is tracked exactly.  Refuses when the state-space
/// estimate exceeds 10^7, naming the computed size.
double brute_force_budgeted(const AllocationInstance& inst,
                            const std::vector<int>& schedule);

}  // namespace dmab
