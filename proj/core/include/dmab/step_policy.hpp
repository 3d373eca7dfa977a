#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "dmab/evaluate.hpp"
#include "dmab/outcome_dag.hpp"

namespace dmab {

enum class StepAction { Play, Wait, Quit };

/// What a per-step strategy sees at step t: outcomes of plays made at steps
/// <= t-1-delay, folded into the disclosed posterior, plus the play/wait
/// pattern of the still-undisclosed window (bit j set means a play happened
/// at step t-1-j, j in [0, delay)).
struct StepObservation {
  int t = 0;
  int disclosed = 0;
  std::uint32_t pending = 0;
};

/// Markov per-step strategy over `horizon` steps.  Quit is absorbing; plays
/// already pending at quit or at the horizon still resolve and pay.
/// The DAG must be at least `horizon` plays deep.
struct StepPolicy {
  std::shared_ptr<const OutcomeDag> dag;
  int delay = 0;
  int horizon = 0;
  std::function<StepAction(const StepObservation&)> rule;

  StepAction action(const StepObservation& o) const { return rule(o); }
};

/// Exact expected reward/plays by forward dynamic programming over
/// (t, disclosed node, pending window).  Outcomes are revealed in play
/// order, so effective rewards (budget folding) are accounted exactly.
PolicyValue evaluate_step_policy(const StepPolicy& policy);

}  // namespace dmab
