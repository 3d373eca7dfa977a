#include "dmab/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dmab/rng.hpp"

namespace dmab {

GlobalPolicy round_sequential(std::vector<SingleArmPolicy> policies,
                              const std::vector<PolicyValue>& values,
                              int horizon) {
  if (policies.size() != values.size()) {
    throw std::invalid_argument("sequential rounding: values do not align");
  }
  double total_plays = 0.0;
  for (const PolicyValue& v : values) total_plays += v.plays;
  if (total_plays > horizon + kSolveTol) {
    throw std::invalid_argument(
        "sequential rounding: expected plays exceed the horizon");
  }

  GlobalPolicy g;
  g.mode = GlobalPolicy::Mode::SequentialRatio;
  g.horizon = horizon;
  g.order.resize(policies.size());
  std::iota(g.order.begin(), g.order.end(), 0);
  // Descending R/N via cross-multiplication (plays are nonnegative); arms
  // that never play sort last; ties by arm index for reproducibility.
  std::sort(g.order.begin(), g.order.end(), [&](int a, int b) {
    const PolicyValue& va = values[static_cast<std::size_t>(a)];
    const PolicyValue& vb = values[static_cast<std::size_t>(b)];
    const bool dead_a = va.plays <= 0.0;
    const bool dead_b = vb.plays <= 0.0;
    if (dead_a != dead_b) return dead_b;
    if (!dead_a) {
      const double lhs = va.reward * vb.plays;
      const double rhs = vb.reward * va.plays;
      if (lhs != rhs) return lhs > rhs;
    }
    return a < b;
  });
  g.policies = std::move(policies);
  return g;
}

GlobalPolicy combine(std::vector<SingleArmPolicy> policies, int horizon,
                     double participation, bool randomize_order,
                     std::uint64_t seed) {
  if (!(participation > 0.0) || participation > 1.0) {
    throw std::invalid_argument("combine: participation must lie in (0, 1]");
  }
  GlobalPolicy g;
  g.mode = GlobalPolicy::Mode::Combine;
  g.horizon = horizon;
  g.participation = participation;
  g.order.resize(policies.size());
  std::iota(g.order.begin(), g.order.end(), 0);
  if (randomize_order) {
    RandomStream rng(seed, hash_label("combine-order"));
    for (std::size_t i = g.order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)));
      std::swap(g.order[i - 1], g.order[j]);
    }
  }
  g.policies = std::move(policies);
  return g;
}

SettlementLedger settle(const std::vector<double>& accrued, double budget) {
  if (budget < 0.0) throw std::invalid_argument("settlement: negative budget");
  SettlementLedger ledger;
  ledger.budget = budget;
  ledger.accrued = accrued;
  ledger.remaining = budget;
  for (double z : accrued) {
    if (z < 0.0) throw std::invalid_argument("settlement: negative accrual");
    const double pay = std::min(z, std::max(ledger.remaining, 0.0));
    ledger.payouts.push_back(pay);
    ledger.remaining -= pay;
    ledger.total += pay;
  }
  return ledger;
}

double concave_chain_slack(const std::vector<double>& rewards,
                           const std::vector<double>& weights, int k) {
  const std::size_t n = rewards.size();
  if (weights.size() != n) {
    throw std::invalid_argument("concave chain: sizes do not align");
  }
  if (k < 0 || static_cast<std::size_t>(k) > n) {
    throw std::invalid_argument("concave chain: prefix out of range");
  }
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0)) {
      throw std::invalid_argument("concave chain: weights must be positive");
    }
    if (rewards[i] < 0.0) {
      throw std::invalid_argument("concave chain: rewards must be nonnegative");
    }
    if (i > 0 && rewards[i] * weights[i - 1] >
                     rewards[i - 1] * weights[i] + 1e-9) {
      throw std::invalid_argument("concave chain: ratios must be nonincreasing");
    }
    w += weights[i];
  }
  double lhs = 0.0;
  double prefix_w = 0.0;
  double rk = 0.0, wk = 0.0, cross = 0.0;
  for (int i = 0; i < k; ++i) {
    const double r = rewards[static_cast<std::size_t>(i)];
    const double wi = weights[static_cast<std::size_t>(i)];
    lhs += r * (1.0 - prefix_w / w);
    prefix_w += wi;
    rk += r;
    wk += wi;
    cross += r * wi;
  }
  const double rhs = rk * wk / (2.0 * w) + cross / (2.0 * w) +
                     rk * (w - wk) / w;
  return lhs - rhs;
}

double settlement_slack(const std::vector<DiscreteRv>& accruals, double budget) {
  if (budget < 0.0) throw std::invalid_argument("settlement slack: negative budget");
  double support = 1.0;
  double mean_sum = 0.0;
  for (const DiscreteRv& rv : accruals) {
    if (rv.values.empty() || rv.values.size() != rv.probs.size()) {
      throw std::invalid_argument("settlement slack: malformed support");
    }
    double mass = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < rv.values.size(); ++i) {
      if (rv.values[i] < 0.0 || rv.values[i] > budget + kMassTol) {
        throw std::invalid_argument(
            "settlement slack: accruals must lie in [0, budget]");
      }
      if (rv.probs[i] < 0.0) {
        throw std::invalid_argument("settlement slack: negative probability");
      }
      mass += rv.probs[i];
      mean += rv.probs[i] * rv.values[i];
    }
    if (std::abs(mass - 1.0) > kMassTol) {
      throw std::invalid_argument("settlement slack: probabilities must sum to 1");
    }
    mean_sum += mean;
    support *= static_cast<double>(rv.values.size());
  }
  if (mean_sum > budget + kMassTol) {
    throw std::invalid_argument(
        "settlement slack: expected accruals exceed the budget");
  }
  if (support > 1e7) {
    throw std::invalid_argument("settlement slack: joint support too large");
  }

  double expected_min = 0.0;
  std::vector<std::size_t> pick(accruals.size(), 0);
  while (true) {
    double total = 0.0, prob = 1.0;
    for (std::size_t j = 0; j < accruals.size(); ++j) {
      total += accruals[j].values[pick[j]];
      prob *= accruals[j].probs[pick[j]];
    }
    expected_min += prob * std::min(budget, total);
    std::size_t j = 0;
    for (; j < pick.size(); ++j) {
      if (++pick[j] < accruals[j].values.size()) break;
      pick[j] = 0;
    }
    if (j == pick.size()) break;
  }
  return expected_min - 0.5 * mean_sum;
}

}  // namespace dmab
