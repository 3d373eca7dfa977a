#pragma once

#include <map>
#include <memory>
#include <vector>

#include "dmab/evaluate.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/policy.hpp"
#include "dmab/types.hpp"

namespace dmab {

/// Play-price search configuration for the coupled solves.
struct LagrangianConfig {
  double lambda_lo = 0.0;
  /// Top of the price bracket; negative means "use the largest bid", which
  /// prices every play out of the market.
  double lambda_hi = -1.0;
  /// Binary-search stopping width, relative to the top of the bracket.
  double tolerance = 1e-9;
  /// Informational: the play budget the search was run against.
  double coupling_budget = 0.0;
  double alpha = kDefaultAlpha;
  double c = kDefaultC;
  double gamma = kDefaultGamma;
};

/// Play overhead of the policy-shaping chain: 2(1+1/alpha)(1+2/alpha).
double composition_gamma(double alpha);

struct ArmDpResult {
  SingleArmPolicy policy;
  PolicyValue value;
};

/// Best single-arm policy for the priced objective R(P) - lambda*N(P).
///
/// delayed = false: backward induction over (posterior, step) with actions
/// {quit, play}, one play per step, feedback before the next step.
///
/// delayed = true and delay >= 1: backward induction over block states.
/// Regular blocks start at elapsed k*(2*delay+1) for k below ceil(alpha *
/// horizon / delay), commit 0..ceil(c*delay) plays with feedback at the end
/// of the block, and may switch into no-delay mode at any boundary; no-delay
/// blocks make 0 or 1 play per step with instantaneous feedback.  Play
/// elapsed is capped at horizon/2 (the truncated state space).
///
/// delayed = true and delay = 0: the no-delay chain over the full horizon;
/// degenerates to the delayed = false optimum.
///
/// Ties prefer quitting, then fewer plays, then staying in regular mode.
/// The DAG must be at least `horizon` deep.
ArmDpResult solve_arm_dp(std::shared_ptr<const OutcomeDag> dag, int delay,
                         double lambda, int horizon, bool delayed,
                         double alpha = kDefaultAlpha, double c = kDefaultC);

/// Occupancy view of one arm's randomized block policy: x[s] is the
/// probability a block starts in states[s], y[s][l] the probability of
/// committing l plays there, z[s] the probability of switching to no-delay
/// mode instead.  Residual x - sum(y) - z mass quits.
struct ArmOccupancy {
  int arm = 0;
  std::shared_ptr<const OutcomeDag> dag;
  int delay = 0;
  int horizon = 0;
  int root_state = 0;
  std::vector<BlockState> states;
  std::vector<double> x;
  std::vector<std::map<int, double>> y;
  std::vector<double> z;
  double reward = 0.0;
  double plays = 0.0;
};

/// A solved coupled relaxation: per-arm occupancies supported on at most two
/// deterministic policies per arm (the bracketing price solutions), mixed so
/// the total expected plays meet the budget exactly.
struct LpSolution {
  double lambda = 0.0;          ///< final (feasible) play-price
  double objective = 0.0;       ///< sum over arms of expected reward
  double expected_plays = 0.0;  ///< sum over arms of expected plays
  double budget = 0.0;
  double dual_upper = 0.0;  ///< Lagrangian bound: sum_i value_i + lambda*budget
  double mix_high_weight = 1.0;
  int iterations = 0;  ///< price evaluations spent in the binary search
  std::vector<ArmOccupancy> arms;
  std::vector<SingleArmPolicy> low_policies;
  std::vector<SingleArmPolicy> high_policies;
};

/// Solves the coupled relaxation: one randomized per-arm policy each, total
/// expected plays at most `budget`.  Binary search for the smallest price
/// with feasible total plays, then mix the bracketing per-arm optima to meet
/// the budget exactly.  Per-arm play counts must be nonincreasing in the
/// price (asserted over the search trace).  Throws std::invalid_argument on
/// an empty arm list or nonpositive budget.
LpSolution solve_coupled(const std::vector<ArmSpec>& arms, int horizon,
                         double budget, bool delayed,
                         const LagrangianConfig& config = {});

/// Checks occupancy invariants, throwing std::logic_error on the first
/// violation: per-(elapsed, mode) level x mass at most 1; y + z mass at most
/// x; flow conservation into every non-root state; total plays within the
/// budget; objective consistent with the occupancies.
void validate_lp_solution(const LpSolution& sol);

/// Rebuilds the randomized single-arm policy realizing an arm's occupancies:
/// at block state s, commit l plays with probability y[s][l]/x[s], switch
/// with z[s]/x[s], quit with the residual.  Exact: evaluate() on the result
/// reproduces (reward, plays) of the occupancies.  Throws
/// std::invalid_argument if y or z mass sits on a state with x = 0.
SingleArmPolicy extract_randomized(const LpSolution& sol, int arm);

/// Scales all occupancies (and objective, plays, budget) by 1/gamma; the
/// freed mass quits at the root.  gamma must be >= 1.
LpSolution scale_down(const LpSolution& sol, double gamma);

}  // namespace dmab
