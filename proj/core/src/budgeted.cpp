#include "dmab/budgeted.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

#include "dmab/evaluate.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/rng.hpp"

namespace dmab {

namespace {

void validate_instance(const AllocationInstance& inst) {
  const std::size_t nb = inst.bidders.size();
  const std::size_t nt = inst.types.size();
  if (nb == 0 || nt == 0)
    throw std::invalid_argument("an allocation instance needs at least one "
                                "bidder and one impression type");
  if (inst.pairs.size() != nb)
    throw std::invalid_argument("one pair row per bidder is required");
  for (const auto& row : inst.pairs)
    if (row.size() != nt)
      throw std::invalid_argument("one pair column per type is required");
  for (const auto& b : inst.bidders)
    if (!(b.budget >= 0.0))
      throw std::invalid_argument("bidder " + b.id + " has a negative budget");
  for (const auto& t : inst.types)
    if (t.arrivals < 0)
      throw std::invalid_argument("type " + t.id +
                                  " has a negative arrival count");
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nt; ++j) {
      const PairSpec& p = inst.pairs[i][j];
      if (!(p.bid > 0.0))
        throw std::invalid_argument("pair (" + inst.bidders[i].id + ", " +
                                    inst.types[j].id +
                                    ") needs a positive bid");
      if (p.delay < 0)
        throw std::invalid_argument("pair (" + inst.bidders[i].id + ", " +
                                    inst.types[j].id +
                                    ") has a negative delay");
    }
}

bool type_delayed(const AllocationInstance& inst, std::size_t j) {
  for (std::size_t i = 0; i < inst.bidders.size(); ++i)
    if (inst.pairs[i][j].delay > 0) return true;
  return false;
}

/// The arm handed to the planner for pair (i, j).  `scale` prices the
/// bidder's reward: bid and budget shrink together, which keeps the paying
/// pattern (budget / bid) and the posterior transitions untouched while
/// multiplying every reward by the scale.
ArmSpec pair_arm(const AllocationInstance& inst, std::size_t i, std::size_t j,
                 double budget, double scale) {
  const PairSpec& p = inst.pairs[i][j];
  ArmSpec a;
  a.id = inst.bidders[i].id + ":" + inst.types[j].id;
  a.prior = p.prior;
  a.delay = p.delay;
  a.bid = p.bid * scale;
  a.budget = is_unbudgeted(budget) ? budget : budget * scale;
  return a;
}

struct TypeSolve {
  LpSolution scaled;            // per-type solution after gamma scaling
  std::vector<double> reward;   // true (unscaled-price) reward per bidder
  double gamma = 1.0;
};

/// Plans one type at the given reward prices.  `budgets[i]` is the cap
/// folded into pair (i, j); `scales[i] = 1 - mu_i`.
TypeSolve solve_type(const AllocationInstance& inst, std::size_t j,
                     const std::vector<double>& budgets,
                     const std::vector<double>& scales, double alpha,
                     double c) {
  const int horizon = inst.types[j].arrivals;
  std::vector<ArmSpec> arms;
  for (std::size_t i = 0; i < inst.bidders.size(); ++i)
    arms.push_back(pair_arm(inst, i, j, budgets[i], scales[i]));
  const bool delayed = type_delayed(inst, j);
  TypeSolve out;
  out.gamma = delayed ? composition_gamma(alpha) : 1.0;
  LagrangianConfig cfg;
  cfg.alpha = alpha;
  cfg.c = c;
  cfg.gamma = composition_gamma(alpha);
  const LpSolution sol = solve_coupled(
      arms, horizon, out.gamma * horizon, delayed, cfg);
  out.scaled = delayed ? scale_down(sol, out.gamma) : sol;
  out.reward.resize(inst.bidders.size());
  for (std::size_t i = 0; i < inst.bidders.size(); ++i)
    out.reward[i] = out.scaled.arms[i].reward / std::max(scales[i], 1e-300);
  return out;
}

struct MomentAccumulator {
  double sum = 0.0;
  double sumsq = 0.0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
  }
  double mean(long trials) const { return sum / static_cast<double>(trials); }
  double std_error(long trials) const {
    if (trials < 2) return 0.0;
    const double m = mean(trials);
    const double var =
        std::max(0.0, (sumsq - static_cast<double>(trials) * m * m) /
                          static_cast<double>(trials - 1));
    return std::sqrt(var / static_cast<double>(trials));
  }
};

}  // namespace

BudgetedPlan plan_budgeted(const AllocationInstance& inst, double alpha,
                           double c, double participation,
                           std::uint64_t seed) {
  validate_instance(inst);
  const std::size_t nb = inst.bidders.size();
  const std::size_t nt = inst.types.size();

  BudgetedPlan plan;
  plan.shadow.amount.assign(nb, std::vector<double>(nt, 0.0));
  plan.lambda.assign(nt, 0.0);
  plan.mu.assign(nb, 0.0);
  plan.pair_reward.assign(nb * nt, 0.0);
  plan.per_type.resize(nt);
  plan.type_arms.resize(nt);

  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nt; ++j) {
      const PairSpec& p = inst.pairs[i][j];
      const int tj = inst.types[j].arrivals;
      if (p.delay > 0 && tj > 0 && tj < 2)
        throw std::invalid_argument(
            "pair (" + inst.bidders[i].id + ", " + inst.types[j].id +
            ") is delayed but its type has fewer than two arrivals");
      if (tj > 1) {
        const double threshold =
            48.0 * (8.0 * p.delay + 2.0) * std::log(static_cast<double>(tj));
        if (static_cast<double>(tj) < threshold) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.0f", threshold);
          plan.warnings.push_back(
              "pair (" + inst.bidders[i].id + ", " + inst.types[j].id +
              "): horizon " + std::to_string(tj) +
              " is below the published guidance of about " + buf + " arrivals");
        }
      }
    }

  std::vector<double> ones(nb, 1.0);

  // Stage 1: unconstrained shares fix the shadow budgets.
  for (std::size_t j = 0; j < nt; ++j) {
    if (inst.types[j].arrivals == 0) continue;
    std::vector<double> caps(nb);
    for (std::size_t i = 0; i < nb; ++i) caps[i] = inst.bidders[i].budget;
    const TypeSolve free = solve_type(inst, j, caps, ones, alpha, c);
    for (std::size_t i = 0; i < nb; ++i) {
      const double bi = inst.bidders[i].budget;
      if (is_unbudgeted(bi)) {
        plan.shadow.amount[i][j] = bi;
        continue;
      }
      const double b = inst.pairs[i][j].bid;
      const double cap = std::min(bi, free.reward[i]);
      plan.shadow.amount[i][j] = b * std::floor(cap / b + 1e-9);
    }
  }

  // Stage 2: coordinate bisection of the per-bidder reward prices against
  // the shadow-folded instance.
  std::vector<double> scales(nb, 1.0);
  std::vector<TypeSolve> solves(nt);
  const auto resolve_all = [&] {
    for (std::size_t j = 0; j < nt; ++j) {
      if (inst.types[j].arrivals == 0) continue;
      std::vector<double> budgets(nb);
      for (std::size_t i = 0; i < nb; ++i) budgets[i] = plan.shadow.amount[i][j];
      solves[j] = solve_type(inst, j, budgets, scales, alpha, c);
    }
  };
  const auto bidder_total = [&](std::size_t i) {
    double r = 0.0;
    for (std::size_t j = 0; j < nt; ++j)
      if (inst.types[j].arrivals > 0) r += solves[j].reward[i];
    return r;
  };

  resolve_all();
  for (int round = 0; round < 20; ++round) {
    bool moved = false;
    for (std::size_t i = 0; i < nb; ++i) {
      const double bi = inst.bidders[i].budget;
      if (is_unbudgeted(bi)) continue;
      if (bidder_total(i) <= bi + kSolveTol) continue;
      double lo = 1.0 - scales[i];  // infeasible price
      double hi = 1.0;              // quitting price: reward 0 is feasible
      for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        scales[i] = std::max(1.0 - mid, 1e-12);
        resolve_all();
        if (bidder_total(i) <= bi + kSolveTol)
          hi = mid;
        else
          lo = mid;
      }
      scales[i] = std::max(1.0 - hi, 1e-12);
      resolve_all();
      moved = true;
    }
    if (!moved) break;
  }
  for (std::size_t i = 0; i < nb; ++i) {
    plan.mu[i] = 1.0 - scales[i];
    const double bi = inst.bidders[i].budget;
    if (!is_unbudgeted(bi) && bidder_total(i) > bi + kSolveTol)
      throw std::runtime_error("bidder " + inst.bidders[i].id +
                               " cannot be priced into the budget");
  }

  // Assemble the per-type combine policies and the objective.
  for (std::size_t j = 0; j < nt; ++j) {
    const int tj = inst.types[j].arrivals;
    if (tj == 0) {
      plan.per_type[j].mode = GlobalPolicy::Mode::Combine;
      plan.per_type[j].horizon = 0;
      continue;
    }
    plan.lambda[j] = solves[j].scaled.lambda;
    std::vector<SingleArmPolicy> pols;
    for (std::size_t i = 0; i < nb; ++i) {
      pols.push_back(extract_randomized(solves[j].scaled, static_cast<int>(i)));
      const double r = solves[j].reward[i];
      plan.pair_reward[i * nt + j] = r;
      plan.objective += r;
    }
    plan.per_type[j] =
        combine(std::move(pols), tj, participation, /*randomize_order=*/true,
                mix_ids(seed, hash_label("budgeted-order"), j));
    for (std::size_t i = 0; i < nb; ++i)
      plan.type_arms[j].push_back(
          pair_arm(inst, i, j, plan.shadow.amount[i][j], 1.0));
  }
  return plan;
}

BudgetedOutcome execute_budgeted(const BudgetedPlan& plan,
                                 const AllocationInstance& inst,
                                 std::uint64_t seed, std::uint64_t trial) {
  validate_instance(inst);
  const std::size_t nb = inst.bidders.size();
  const std::size_t nt = inst.types.size();
  if (plan.per_type.size() != nt || plan.type_arms.size() != nt)
    throw std::invalid_argument("the plan does not match the instance");

  BudgetedOutcome out;
  out.pair_accrued.assign(nb, std::vector<double>(nt, 0.0));
  out.bidder_revenue.assign(nb, 0.0);
  for (std::size_t j = 0; j < nt; ++j) {
    if (inst.types[j].arrivals == 0) continue;
    const std::vector<ArmSpec>& arms = plan.type_arms[j];
    const GroundTruth truth = draw_ground_truth(
        arms, {}, inst.types[j].arrivals + 1, seed,
        mix_ids(hash_label("budgeted-truth"), trial, j));
    const TrajectoryResult res =
        run_trajectory(plan.per_type[j], arms, truth, seed,
                       mix_ids(hash_label("budgeted-run"), trial, j));
    for (std::size_t i = 0; i < nb; ++i)
      out.pair_accrued[i][j] = res.arm_reward[i];
  }
  for (std::size_t i = 0; i < nb; ++i) {
    const SettlementLedger ledger =
        settle(out.pair_accrued[i], inst.bidders[i].budget);
    out.bidder_revenue[i] = ledger.total;
    out.revenue += ledger.total;
  }
  return out;
}

BudgetedEstimate run_budgeted_mc(const BudgetedPlan& plan,
                                 const AllocationInstance& inst, long trials,
                                 std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("at least one trial is needed");
  const std::size_t nb = inst.bidders.size();
  const std::size_t nt = inst.types.size();
  MomentAccumulator total;
  std::vector<MomentAccumulator> per_bidder(nb);
  std::vector<std::vector<double>> pair_sum(nb, std::vector<double>(nt, 0.0));
  for (long t = 0; t < trials; ++t) {
    const BudgetedOutcome o =
        execute_budgeted(plan, inst, seed, static_cast<std::uint64_t>(t));
    total.add(o.revenue);
    for (std::size_t i = 0; i < nb; ++i) {
      per_bidder[i].add(o.bidder_revenue[i]);
      for (std::size_t j = 0; j < nt; ++j)
        pair_sum[i][j] += o.pair_accrued[i][j];
    }
  }
  BudgetedEstimate est;
  est.revenue.trials = trials;
  est.revenue.mean = total.mean(trials);
  est.revenue.std_error = total.std_error(trials);
  for (std::size_t i = 0; i < nb; ++i) {
    est.revenue.arm_mean.push_back(per_bidder[i].mean(trials));
    est.revenue.arm_std_error.push_back(per_bidder[i].std_error(trials));
  }
  est.pair_accrued_mean.assign(nb, std::vector<double>(nt, 0.0));
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nt; ++j)
      est.pair_accrued_mean[i][j] =
          pair_sum[i][j] / static_cast<double>(trials);
  return est;
}

std::vector<int> arrival_schedule(const AllocationInstance& inst,
                                  std::uint64_t seed) {
  validate_instance(inst);
  const std::size_t nt = inst.types.size();
  long total = 0;
  for (const TypeSpec& t : inst.types) total += t.arrivals;
  std::vector<int> issued(nt, 0);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(total));
  for (long s = 0; s < total; ++s) {
    // Next arrival = type whose (issued+1)/T_j fraction is smallest, i.e.
    // the one furthest behind its proportional pace.
    int best = -1;
    for (std::size_t j = 0; j < nt; ++j) {
      if (issued[j] >= inst.types[j].arrivals) continue;
      if (best < 0) {
        best = static_cast<int>(j);
        continue;
      }
      const long lhs = static_cast<long>(issued[j] + 1) *
                       inst.types[static_cast<std::size_t>(best)].arrivals;
      const long rhs = static_cast<long>(issued[static_cast<std::size_t>(best)] + 1) *
                       inst.types[j].arrivals;
      if (lhs < rhs) best = static_cast<int>(j);
    }
    out.push_back(best);
    issued[static_cast<std::size_t>(best)] += 1;
  }
  if (seed != 0) {
    RandomStream rng(seed, hash_label("arrival-order"));
    for (std::size_t k = out.size(); k > 1; --k) {
      const std::size_t r = rng.below(k);
      std::swap(out[k - 1], out[r]);
    }
  }
  return out;
}

double brute_force_budgeted(const AllocationInstance& inst,
                            const std::vector<int>& schedule) {
  validate_instance(inst);
  const std::size_t nb = inst.bidders.size();
  const std::size_t nt = inst.types.size();
  long total = 0;
  for (const TypeSpec& t : inst.types) total += t.arrivals;
  if (static_cast<long>(schedule.size()) != total)
    throw std::invalid_argument("the schedule must cover every arrival");
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nt; ++j) {
      if (inst.pairs[i][j].delay != 0)
        throw std::invalid_argument(
            "the joint oracle handles undelayed instances only");
      if (std::fabs(inst.pairs[i][j].bid - 1.0) > 1e-12)
        throw std::invalid_argument("the joint oracle expects unit bids");
    }

  // Budget caps as integers (conversions paid); infinite budgets never bind.
  std::vector<long> cap(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    const double b = inst.bidders[i].budget;
    if (is_unbudgeted(b)) {
      cap[i] = total;
    } else {
      if (std::fabs(b - std::round(b)) > 1e-9)
        throw std::invalid_argument("the joint oracle expects integer budgets");
      cap[i] = std::min<long>(static_cast<long>(std::llround(b)), total);
    }
  }

  // Per-pair posterior DAGs, unfolded (payment is handled by the paid
  // counters so the posterior walk stays budget-free).
  std::vector<std::vector<std::shared_ptr<const OutcomeDag>>> dag(nb);
  double estimate = static_cast<double>(total + 1);
  int bits = std::bit_width(static_cast<unsigned>(std::max<long>(total, 1)));
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      ArmSpec a = pair_arm(inst, i, j, kInfiniteBudget, 1.0);
      dag[i].push_back(build_arm_dag(a, inst.types[j].arrivals));
      estimate *= static_cast<double>(dag[i][j]->size());
      bits += std::bit_width(
          static_cast<unsigned>(std::max(dag[i][j]->size() - 1, 1)));
    }
    estimate *= static_cast<double>(cap[i] + 1);
    bits += std::bit_width(static_cast<unsigned>(std::max<long>(cap[i], 1)));
  }
  if (estimate > 1e7 || bits > 63) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", estimate);
    throw std::runtime_error("joint-allocation state space has about " +
                             std::string(buf) +
                             " states; refusing to enumerate more than 1e7");
  }

  std::vector<int> node(nb * nt);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nt; ++j) node[i * nt + j] = dag[i][j]->root;
  std::vector<long> paid(nb, 0);
  std::unordered_map<std::uint64_t, double> memo;

  const auto pack = [&](long s) {
    std::uint64_t key = static_cast<std::uint64_t>(s);
    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        key <<= std::bit_width(
            static_cast<unsigned>(std::max(dag[i][j]->size() - 1, 1)));
        key |= static_cast<std::uint64_t>(node[i * nt + j]);
      }
      key <<= std::bit_width(static_cast<unsigned>(std::max<long>(cap[i], 1)));
      key |= static_cast<std::uint64_t>(paid[i]);
    }
    return key;
  };

  const auto solve = [&](auto&& self, long s) -> double {
    if (s == total) return 0.0;
    const std::uint64_t key = pack(s);
    if (const auto it = memo.find(key); it != memo.end()) return it->second;
    const std::size_t j = static_cast<std::size_t>(schedule[static_cast<std::size_t>(s)]);
    double best = self(self, s + 1);  // skip the impression
    for (std::size_t i = 0; i < nb; ++i) {
      const int u = node[i * nt + j];
      const DagState& st = dag[i][j]->at(u);
      if (st.success_child < 0)
        throw std::logic_error("joint oracle walked past the DAG frontier");
      const double pays = paid[i] < cap[i] ? 1.0 : 0.0;
      node[i * nt + j] = st.success_child;
      const long keep = paid[i];
      paid[i] = std::min(cap[i], paid[i] + 1);
      const double on = pays + self(self, s + 1);
      paid[i] = keep;
      node[i * nt + j] = st.failure_child;
      const double off = self(self, s + 1);
      node[i * nt + j] = u;
      best = std::max(best,
                      st.success_prob * on + (1.0 - st.success_prob) * off);
    }
    memo.emplace(key, best);
    return best;
  };
  return solve(solve, 0);
}

}  // namespace dmab
