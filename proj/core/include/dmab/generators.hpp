#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dmab/instance_io.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/policy.hpp"
#include "dmab/rng.hpp"
#include "dmab/step_policy.hpp"
#include "dmab/types.hpp"

namespace dmab {

/// Seeded builders for randomized property suites.  Everything here is a
/// pure function of the stream/seed it is given, so suites are reproducible
/// and individual cases can be replayed by index.

/// A posterior DAG of at least `min_depth` levels: a Beta(a1, a0) prior with
/// small random parameters, a small random mixture, or either with a budget
/// fold applied, under a random bid.
std::shared_ptr<const OutcomeDag> random_dag(RandomStream& rng, int min_depth);

/// A random block policy over `dag`: random quit/block/switch weights,
/// random block lengths within the mode caps, recursively to the horizon.
/// Node count is bounded; deep recursions taper off through rising quit
/// probabilities.
SingleArmPolicy random_policy(std::shared_ptr<const OutcomeDag> dag, int delay,
                              int horizon, RandomStream& rng);

/// A random per-step strategy over `dag`: one of several rule families
/// (hash-randomized actions, myopic thresholds, parity play/wait patterns,
/// play-while-perfect), each parameterized by the seed.  The rule is a pure
/// function of the observation, as the evaluator requires.
StepPolicy random_step_policy(std::shared_ptr<const OutcomeDag> dag, int delay,
                              int horizon, std::uint64_t seed);

/// A random instance: `arm_count` arms with random Beta or mixture priors,
/// bids in {0.5, 1, 2}, delays drawn from `delays`, and (when allowed)
/// occasional finite budgets at small multiples of the bid.
Instance random_instance(RandomStream& rng, int arm_count, int horizon,
                         const std::vector<int>& delays, bool allow_budget);

}  // namespace dmab
