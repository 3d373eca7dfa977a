#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dmab/outcome_dag.hpp"
#include "dmab/policy.hpp"
#include "dmab/scheduler.hpp"
#include "dmab/types.hpp"

namespace dmab {

/// True state of one simulated trial: the realized success probability of
/// every arm plus a pre-drawn outcome tape.  tape[i][k] is the outcome of
/// the k-th play of arm i, so a trajectory is a deterministic function of
/// the truth and the policy's own randomization.  Identical (seed, trial)
/// pairs reproduce identical truths.
///
/// Beta and mixture arms draw theta from the prior and fill the tape with
/// i.i.d. Bernoulli(theta) outcomes.  Explicit-DAG arms have no scalar
/// parameter (theta is NaN); their tape is drawn by walking the posterior
/// DAG's transition probabilities, which realizes the same exchangeable
/// outcome law.
struct GroundTruth {
  std::vector<double> theta;
  std::vector<std::vector<std::uint8_t>> tape;
};

/// Draws the ground truth for one trial.  `dags` is consulted only for
/// explicit-DAG arms (entries for other arms may be null); it must be
/// deep enough to cover `max_plays` outcomes.
GroundTruth draw_ground_truth(
    const std::vector<ArmSpec>& arms,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags, int max_plays,
    std::uint64_t seed, std::uint64_t trial);

/// An outcome revealed to the decision maker at the start of a step: the
/// play made `delay` steps earlier on `arm` came up `outcome`.
struct Disclosure {
  int arm = -1;
  int outcome = 0;
};

/// One step of a trajectory: the outcomes disclosed at the start of the
/// step, which arm played (-1 for an idle slot), the tape outcome of that
/// play, and the reward credited for it.
struct TraceEvent {
  int step = 0;
  int arm = -1;
  int outcome = -1;
  double reward = 0.0;
  std::vector<Disclosure> disclosed;
};

using SimTrace = std::vector<TraceEvent>;

/// Monte-Carlo estimate with per-arm contributions.  `std_error` is the
/// sample standard deviation of the per-trial total divided by
/// sqrt(trials); the per-arm columns are estimated the same way.
struct Estimate {
  long trials = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> arm_mean;
  std::vector<double> arm_std_error;
};

/// Runs `trials` independent trajectories of a global policy and estimates
/// the expected total reward and each arm's contribution.
///
/// Execution is block-synchronous: a block's plays are issued on the arm's
/// turns, the arm then stays passive until every outcome of the block has
/// been disclosed (a play at step s is disclosed at step s + delay,
/// exactly), and only then does the policy advance and the next choice get
/// sampled.  Zero-play blocks hold the arm passive for the block span.
/// Under Mode::Combine each arm participates independently with the
/// configured probability and every slot goes to the highest-priority
/// active participating arm; under Mode::SequentialRatio arms run strictly
/// one after another in priority order.  A trajectory is `horizon` slots,
/// so at most `horizon` plays are issued.
///
/// Every draw comes from counter-based streams keyed by (seed, trial, arm),
/// so estimates are reproducible and independent of scheduling order.
/// When `first_trial_trace` is non-null it receives the step-by-step log of
/// trial 0.  With `audit` set the runner re-verifies feasibility on every
/// step (disclosure timing, participation, priority, the play budget) and
/// throws std::logic_error at the first violation.
Estimate run_mc(const GlobalPolicy& global, const std::vector<ArmSpec>& arms,
                long trials, std::uint64_t seed,
                const std::vector<std::shared_ptr<const OutcomeDag>>& dags = {},
                SimTrace* first_trial_trace = nullptr, bool audit = false);

/// Reward breakdown of a single executed trajectory.
struct TrajectoryResult {
  double total = 0.0;
  std::vector<double> arm_reward;
};

/// Executes one trajectory of a global policy against a drawn truth, using
/// the same block-synchronous semantics as run_mc.  The (seed, trial) pair
/// keys the policy-randomization and participation streams, so replaying
/// the same pair against the same truth reproduces the trajectory exactly.
TrajectoryResult run_trajectory(const GlobalPolicy& global,
                                const std::vector<ArmSpec>& arms,
                                const GroundTruth& truth, std::uint64_t seed,
                                std::uint64_t trial,
                                SimTrace* trace = nullptr, bool audit = false);

/// Exact value of the jointly optimal policy for a delayed instance by
/// backward induction over the full information-state MDP: per arm, the
/// posterior over disclosed outcomes plus the pattern of undisclosed plays
/// in the last `delay` slots.  One play (or none) is issued per step for
/// `horizon` steps; pending plays resolve and pay at disclosure.
///
/// The state space is (horizon+1) * prod_i(states_i * 2^delay_i); when the
/// estimate exceeds 10^7 the call refuses with the computed size in the
/// exception message rather than thrash.
double brute_force_opt(
    const std::vector<ArmSpec>& arms, int horizon,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags = {});

/// The two-type family on which the planner's relaxation is tight.  All n
/// arms share the prior: with probability 1/n^2 the arm succeeds with
/// probability 1 - 1/n on every play, otherwise it never succeeds.  The
/// horizon is n plays.  The optimal policy scans fresh arms one play at a
/// time and commits to the first arm that shows a success, giving the
/// closed form
///
///   opt_exact = sum_{x=0}^{T-1} (1-q)^x q (1 + (T-1-x) s),
///
/// with s = 1 - 1/n and q = s / n^2, against which the relaxation's value
/// approaches a factor of 2.
struct TightExample {
  std::vector<ArmSpec> arms;
  int horizon = 0;
  double opt_exact = 0.0;
};

TightExample make_tight_example(int n);

/// Reference step policies for calibrating simulated values.
///
/// GreedyPosterior plays, every slot, the arm with the highest disclosed
/// posterior mean times bid among arms that can still pay (ties to the
/// lowest index).  ExploreThenExploit round-robins one play per arm for
/// floor(explore_fraction * horizon) slots, then commits to the arm with
/// the best disclosed posterior for the remainder.  Both see an outcome
/// only from its disclosure step onward.
enum class BaselineKind { GreedyPosterior, ExploreThenExploit };

Estimate run_baseline_mc(
    const std::vector<ArmSpec>& arms, int horizon, BaselineKind kind,
    long trials, std::uint64_t seed, double explore_fraction = 0.1,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags = {});

}  // namespace dmab
