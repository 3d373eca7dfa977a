#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dmab/types.hpp"

namespace dmab {

/// One posterior state of an arm.  `mean` is the posterior success
/// probability; a play from this state succeeds with probability
/// `success_prob` and moves to `success_child` (else `failure_child`).
/// `effective_reward` is the reward credited when a play at this state
/// succeeds; budget folding zeroes it once accrued reward hits the cap.
struct DagState {
  std::string key;           // stable printable identity ("b:2,1", explicit id, ...)
  int depth = 0;             // plays observed on any path from the root
  int successes = 0;         // successes observed on any path from the root
  double mean = 0.0;
  double success_prob = 0.0;
  double effective_reward = 0.0;
  int success_child = -1;    // -1 at the frontier
  int failure_child = -1;
};

/// Leveled DAG of posterior states reachable from a prior within a play
/// horizon.  States are grouped by depth; a Beta(a1, a0) prior yields exactly
/// d+1 states at depth d.  Immutable after construction.
class OutcomeDag {
 public:
  std::vector<DagState> states;
  int root = 0;
  int max_depth = 0;

  // True when the outcome law is exchangeable: every state is keyed by
  // (depth, successes) alone, so any two play orderings with the same counts
  // land on the same state with the same probability.  Count-keyed Beta and
  // mixture DAGs always qualify; explicit DAGs must pass the transposition
  // check in the loader before claiming it.
  bool exchangeable = false;

  // Mixture metadata when built from a finite hypothesis set (used by the
  // simulator to sample ground truth); empty otherwise.
  std::vector<double> hyp_weights;
  std::vector<double> hyp_means;

  const DagState& at(int i) const { return states[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(states.size()); }
  bool is_frontier(int i) const { return at(i).success_child < 0; }

  /// Index lookup by state key; -1 when absent.
  int find(const std::string& key) const;
};

/// Builds the Beta-prior posterior DAG down to `max_depth` plays.
/// Throws std::invalid_argument for non-positive prior parameters.
OutcomeDag build_beta_dag(int alpha1, int alpha0, double bid, int max_depth);

/// Builds the posterior DAG of a finite mixture of point hypotheses
/// (success probability means[j] with prior weight weights[j]).
OutcomeDag build_mixture_dag(const std::vector<double>& weights,
                             const std::vector<double>& means, double bid,
                             int max_depth);

/// Returns a copy with effective rewards folded against budget `B`:
/// a state pays `bid` per success while successes_so_far * bid < B and 0 after.
OutcomeDag fold_budget(const OutcomeDag& dag, double budget, double bid);

/// Largest absolute violation of the martingale identity
/// mean(u) = p(u,succ)*mean(succ) + p(u,fail)*mean(fail) over interior states.
/// Throws std::runtime_error on structurally broken child references.
double validate_martingale(const OutcomeDag& dag);

/// Builds (and budget-folds) the DAG for an arm spec.  `max_depth` must cover
/// every play the caller will evaluate.  ExplicitDag priors must carry the
/// loader-attached DAG; its effective rewards are rebased on the arm's bid
/// and it must have no frontier state shallower than `max_depth`.
std::shared_ptr<const OutcomeDag> build_arm_dag(const ArmSpec& arm, int max_depth);

}  // namespace dmab
