#include "dmab/generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "dmab/block_kernel.hpp"

namespace dmab {
namespace {

double pick_bid(RandomStream& rng) {
  static const double bids[3] = {0.5, 1.0, 2.0};
  return bids[rng.below(3)];
}

PriorSpec random_prior(RandomStream& rng) {
  if (rng.below(4) != 0) {
    return PriorSpec::beta(1 + static_cast<int>(rng.below(3)),
                           1 + static_cast<int>(rng.below(3)));
  }
  // Two-hypothesis mixture with means kept away from the endpoints so
  // posterior updates stay informative.
  const double w = 0.1 + 0.8 * rng.uniform();
  const double hi = 0.6 + 0.35 * rng.uniform();
  const double lo = 0.05 + 0.3 * rng.uniform();
  return PriorSpec::mixture({w, 1.0 - w}, {hi, lo});
}

}  // namespace

std::shared_ptr<const OutcomeDag> random_dag(RandomStream& rng, int min_depth) {
  const double bid = pick_bid(rng);
  const PriorSpec prior = random_prior(rng);
  OutcomeDag dag =
      prior.kind == PriorSpec::Kind::Beta
          ? build_beta_dag(prior.alpha1, prior.alpha0, bid, min_depth)
          : build_mixture_dag(prior.weights, prior.means, bid, min_depth);
  if (rng.below(3) == 0) {
    const double budget = bid * static_cast<double>(1 + rng.below(3));
    dag = fold_budget(dag, budget, bid);
  }
  return std::make_shared<const OutcomeDag>(std::move(dag));
}

SingleArmPolicy random_policy(std::shared_ptr<const OutcomeDag> dag, int delay,
                              int horizon, RandomStream& rng) {
  PolicyBuilder builder(dag, delay, horizon);
  int budget_nodes = 4000;

  std::function<int(int, int, BlockMode, int)> grow =
      [&](int v, int elapsed, BlockMode mode, int depth) -> int {
    const int id = builder.add_node(v, elapsed, mode);
    const int cap = mode == BlockMode::Regular ? delay + 1 : 1;
    const int max_plays = std::min(cap, horizon - elapsed);
    const double p_quit =
        std::min(1.0, 0.15 + 0.12 * static_cast<double>(depth));
    if (max_plays < 1 || budget_nodes <= 0 || rng.bernoulli(p_quit)) {
      builder.set_quit(id, 1.0);
      return id;
    }
    --budget_nodes;

    // Split the mass over quit and one or two choices.
    const int choice_count = rng.below(4) == 0 ? 2 : 1;
    double quit_w = 0.5 * rng.uniform();
    double rest = 1.0 - quit_w;
    builder.set_quit(id, quit_w);
    for (int k = 0; k < choice_count; ++k) {
      const double w =
          k + 1 == choice_count ? rest : rest * (0.3 + 0.4 * rng.uniform());
      rest -= k + 1 == choice_count ? 0.0 : w;
      const bool can_switch = mode == BlockMode::Regular && delay >= 1;
      if (can_switch && rng.below(5) == 0) {
        builder.add_switch(id, w, grow(v, elapsed, BlockMode::NoDelay, depth + 1));
        continue;
      }
      // Zero-play blocks (pure waits) appear occasionally.
      const int plays = rng.below(8) == 0
                            ? 0
                            : 1 + static_cast<int>(rng.below(
                                      static_cast<std::uint64_t>(max_plays)));
      std::vector<int> children;
      const int span = block_span(mode, delay);
      for (const BlockOutcome& o : kernel_row(*dag, v, plays).outcomes) {
        children.push_back(grow(o.node, elapsed + span, mode, depth + 1));
      }
      builder.add_block(id, w, plays, std::move(children));
    }
    return id;
  };

  builder.set_root(grow(dag->root, 0, BlockMode::Regular, 0));
  return builder.build();
}

StepPolicy random_step_policy(std::shared_ptr<const OutcomeDag> dag, int delay,
                              int horizon, std::uint64_t seed) {
  StepPolicy sp;
  sp.dag = dag;
  sp.delay = delay;
  sp.horizon = horizon;
  const int family = static_cast<int>(seed % 4);
  const std::uint64_t salt = mix_ids(hash_label("random-step"), seed);
  RandomStream setup(seed, hash_label("random-step-setup"));
  const double threshold = 0.2 + 0.5 * setup.uniform();
  const double low_bar = 0.05 + 0.25 * setup.uniform();
  const std::uint32_t full =
      delay > 0 ? (1u << delay) - 1u : 0u;

  sp.rule = [dag, family, salt, threshold, low_bar, full,
             delay](const StepObservation& o) -> StepAction {
    const DagState& st = dag->at(o.disclosed);
    switch (family) {
      case 0: {  // hash-randomized, biased toward playing
        RandomStream h(salt, mix_ids(static_cast<std::uint64_t>(o.t),
                                     static_cast<std::uint64_t>(o.disclosed),
                                     o.pending));
        const std::uint64_t r = h.below(10);
        if (r < 6) return StepAction::Play;
        if (r < 9) return StepAction::Wait;
        return StepAction::Quit;
      }
      case 1:  // myopic threshold; waits when the window is saturated
        if (st.mean < threshold) return StepAction::Quit;
        if (delay > 0 && o.pending == full) return StepAction::Wait;
        return StepAction::Play;
      case 2:  // parity pattern with a low-mean bail-out
        if (st.mean < low_bar) return StepAction::Quit;
        return (o.t + static_cast<int>(o.pending & 1u)) % 2 == 0
                   ? StepAction::Play
                   : StepAction::Wait;
      default:  // play while every disclosed outcome succeeded
        if (st.successes < st.depth) return StepAction::Quit;
        return StepAction::Play;
    }
  };
  return sp;
}

Instance random_instance(RandomStream& rng, int arm_count, int horizon,
                         const std::vector<int>& delays, bool allow_budget) {
  Instance inst;
  inst.horizon = horizon;
  for (int i = 0; i < arm_count; ++i) {
    ArmSpec arm;
    arm.id = "arm-" + std::to_string(i);
    arm.prior = random_prior(rng);
    arm.bid = pick_bid(rng);
    arm.delay = delays.empty()
                    ? 0
                    : delays[rng.below(static_cast<std::uint64_t>(delays.size()))];
    if (allow_budget && rng.below(3) == 0) {
      arm.budget = arm.bid * static_cast<double>(1 + rng.below(3));
    }
    inst.arms.push_back(std::move(arm));
  }
  return inst;
}

}  // namespace dmab
