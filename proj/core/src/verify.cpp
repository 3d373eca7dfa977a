#include "dmab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <memory>
#include <utility>

#include "json.hpp"

#include "dmab/block_kernel.hpp"
#include "dmab/evaluate.hpp"
#include "dmab/generators.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/planner.hpp"
#include "dmab/rng.hpp"
#include "dmab/scheduler.hpp"
#include "dmab/sim.hpp"
#include "dmab/transforms.hpp"

namespace dmab {
namespace {

using ordered_json = nlohmann::ordered_json;

// Accumulates the worst margin of one invariant family.  Exceptions thrown by
// the audited code count as unconditional failures and surface in `detail`.
struct MarginTracker {
  double worst = std::numeric_limits<double>::infinity();
  long cases = 0;
  std::string failure;

  void note(double margin) {
    worst = std::min(worst, margin);
    ++cases;
  }
  void fail(const std::string& what) {
    if (failure.empty()) failure = what;
    ++cases;
  }
};

InvariantResult finish(std::string name, const MarginTracker& t,
                       double tolerance, std::string detail) {
  InvariantResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  r.cases = t.cases;
  if (!t.failure.empty()) {
    r.pass = false;
    r.slack = -std::numeric_limits<double>::infinity();
    r.detail = t.failure;
    return r;
  }
  r.slack = (t.cases == 0) ? 0.0 : t.worst;
  r.pass = r.slack >= -tolerance;
  if (detail.empty()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "worst margin %.3g", r.slack);
    detail = buf;
  }
  r.detail = std::move(detail);
  return r;
}

// --- martingale identity on generated DAGs (analytic, mixed, folded) --------

InvariantResult check_martingale(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int a1 = 1; a1 <= 4; ++a1) {
    for (int a0 = 1; a0 <= 4; ++a0) {
      const OutcomeDag dag = build_beta_dag(a1, a0, 0.5 * a1, 12);
      t.note(kMartingaleTol - validate_martingale(dag));
    }
  }
  for (int k = 0; k < 24 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-martingale"),
                                   static_cast<std::uint64_t>(k)));
    try {
      const auto dag = random_dag(rng, 8 + static_cast<int>(rng.below(8)));
      t.note(kMartingaleTol - validate_martingale(*dag));
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("martingale", t, 0.0,
                "posterior-mean residuals, margin vs the 1e-12 cap");
}

// --- per-play reward identity r(u, l) = l * mean(u) * bid -------------------

InvariantResult check_kernel_identity(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 10 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-kernel"),
                                   static_cast<std::uint64_t>(k)));
    const double bid = 0.25 + 2.0 * rng.uniform();
    const int depth = 8;
    OutcomeDag dag;
    if (rng.below(2) == 0) {
      dag = build_beta_dag(1 + static_cast<int>(rng.below(3)),
                           1 + static_cast<int>(rng.below(3)), bid, depth);
    } else {
      const double w = 0.1 + 0.8 * rng.uniform();
      dag = build_mixture_dag({w, 1.0 - w},
                              {0.6 + 0.3 * rng.uniform(), 0.1 + 0.2 * rng.uniform()},
                              bid, depth);
    }
    try {
      for (int u = 0; u < dag.size(); ++u) {
        for (int plays = 1; plays <= 3; ++plays) {
          if (dag.at(u).depth + plays > dag.max_depth) continue;
          const KernelRow row = kernel_row(dag, u, plays);
          const double want = plays * dag.at(u).mean * bid;
          t.note(kValueTol - std::abs(row.expected_reward - want));
        }
      }
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("kernel-identity", t, 0.0,
                "unbudgeted block reward vs plays * mean * bid, margin vs 1e-9");
}

// --- play-quota truncation: R' >= beta*R, N' <= N ----------------------------

InvariantResult check_truncation(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 60 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-truncation"),
                                   static_cast<std::uint64_t>(k)));
    try {
      const int delay = static_cast<int>(rng.below(3));
      const int horizon = 4 + static_cast<int>(rng.below(9));
      const auto dag = random_dag(rng, horizon + 1);
      const SingleArmPolicy pol = random_policy(dag, delay, horizon, rng);
      const PolicyValue v = evaluate(pol);
      const double beta = 0.15 + 0.7 * rng.uniform();
      const PolicyValue tv = evaluate(truncate_plays(pol, beta).policy);
      t.note(std::min(tv.reward - beta * v.reward, v.plays - tv.plays));
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("truncation", t, kValueTol,
                "min of R' - beta*R and N - N' over random policies");
}

// --- the four-stage rewrite chain on random per-step strategies --------------

void check_transforms(std::uint64_t seed, int scale,
                      std::vector<InvariantResult>& out) {
  MarginTracker stage[5];
  for (int k = 0; k < 12 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-transforms"),
                                   static_cast<std::uint64_t>(k)));
    const int delay = 1 + k % 3;
    const int horizon = 6 + 2 * static_cast<int>(rng.below(4));
    try {
      const auto dag = random_dag(rng, 2 * (horizon + delay) + 1);
      const StepPolicy sp = random_step_policy(
          dag, delay, horizon, mix_ids(seed, static_cast<std::uint64_t>(k), 77));
      const PipelineResult pr = transform_pipeline(sp, kDefaultAlpha, kDefaultC);
      for (int s = 0; s < 5; ++s) stage[s].note(pr.reports[s].slack);
    } catch (const std::exception& e) {
      for (auto& s : stage) s.fail(e.what());
    }
  }
  out.push_back(finish("block-structuring", stage[0], kValueTol,
                       "per-step strategy to block policy preserves (R, N)"));
  out.push_back(finish("delay-removal", stage[1], kValueTol,
                       "R nondecreasing, N <= (1+1/c) * N"));
  out.push_back(finish("well-structuring", stage[2], kValueTol,
                       "R nondecreasing, N <= (1+2/alpha) * N, per-path "
                       "block count within ceil(alpha*Q) + ceil(log2(delay)/alpha)"));
  out.push_back(finish("halt-truncation", stage[3], kValueTol,
                       "halting at the original horizon keeps R >= R/8"));
  out.push_back(finish("composition", stage[4], kValueTol,
                       "full chain: R >= alpha*R(input), N <= gamma*N(input)"));
}

// --- concave-chain inequality over nonincreasing-ratio prefixes --------------

InvariantResult check_concave_chain(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 1000 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-concave-chain"),
                                   static_cast<std::uint64_t>(k)));
    const int n = 1 + static_cast<int>(rng.below(8));
    std::vector<double> rewards(n), weights(n);
    double ratio = 2.0 * rng.uniform();
    for (int i = 0; i < n; ++i) {
      weights[i] = 0.1 + 0.9 * rng.uniform();
      rewards[i] = ratio * weights[i];
      ratio *= rng.uniform();
    }
    const int prefix = static_cast<int>(rng.below(static_cast<std::uint32_t>(n + 1)));
    try {
      t.note(concave_chain_slack(rewards, weights, prefix));
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("concave-chain", t, kValueTol,
                "prefix-reward lower bound over random ratio-sorted chains");
}

// --- settlement inequality E[min(B, sum Z)] >= sum E[Z] / 2 ------------------

InvariantResult check_settlement(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 1000 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-settlement"),
                                   static_cast<std::uint64_t>(k)));
    const double budget = 1.0;
    const int m = 1 + static_cast<int>(rng.below(3));
    std::vector<DiscreteRv> accruals(m);
    double total_mean = 0.0;
    for (auto& rv : accruals) {
      const int support = 2 + static_cast<int>(rng.below(2));
      double mass = 0.0, mean = 0.0;
      for (int s = 0; s < support; ++s) {
        rv.values.push_back(budget * rng.uniform());
        rv.probs.push_back(0.05 + rng.uniform());
        mass += rv.probs.back();
      }
      for (int s = 0; s < support; ++s) {
        rv.probs[static_cast<std::size_t>(s)] /= mass;
        mean += rv.probs[static_cast<std::size_t>(s)] *
                rv.values[static_cast<std::size_t>(s)];
      }
      total_mean += mean;
    }
    if (total_mean > budget) {
      const double shrink = budget / total_mean * (0.2 + 0.8 * rng.uniform());
      for (auto& rv : accruals)
        for (double& v : rv.values) v *= shrink;
    }
    try {
      t.note(settlement_slack(accruals, budget));
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("settlement", t, kValueTol,
                "sequential budget settlement recovers half the accrual mean");
}

// --- solver duality, feasibility, and internal occupancy consistency ---------

InvariantResult check_duality(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 10 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-duality"),
                                   static_cast<std::uint64_t>(k)));
    const int delay = (k % 4 == 3) ? 1 + k % 2 : 0;
    const int horizon = 4 + static_cast<int>(rng.below(3));
    try {
      const Instance inst = random_instance(
          rng, 1 + static_cast<int>(rng.below(3)), horizon, {delay}, true);
      const double budget = 1.0 + rng.uniform() * (horizon - 1);
      const LpSolution sol =
          solve_coupled(inst.arms, inst.horizon, budget, delay > 0);
      validate_lp_solution(sol);
      t.note(std::min({sol.dual_upper - sol.objective,
                       budget - sol.expected_plays, sol.objective}));
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("duality", t, kSolveTol,
                "price bound above the primal, plays within budget");
}

// --- exhaustive optimum never beats the relaxation ---------------------------

InvariantResult check_oracle_bound(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 8 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-oracle"),
                                   static_cast<std::uint64_t>(k)));
    const int horizon = 3 + static_cast<int>(rng.below(3));
    try {
      const Instance inst = random_instance(
          rng, 1 + static_cast<int>(rng.below(2)), horizon, {0}, false);
      const LpSolution sol = solve_coupled(inst.arms, inst.horizon,
                                           static_cast<double>(inst.horizon),
                                           false);
      const double opt = brute_force_opt(inst.arms, inst.horizon);
      t.note(sol.objective - opt);
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("oracle-bound", t, kSolveTol,
                "relaxation objective at or above the exhaustive optimum");
}

// --- block solver degenerates to the step solver at zero delay ---------------

InvariantResult check_zero_delay_agreement(std::uint64_t seed, int scale) {
  MarginTracker t;
  for (int k = 0; k < 8 * scale; ++k) {
    RandomStream rng(seed, mix_ids(hash_label("verify-zero-delay"),
                                   static_cast<std::uint64_t>(k)));
    const int horizon = 4 + static_cast<int>(rng.below(4));
    try {
      const Instance inst = random_instance(
          rng, 1 + static_cast<int>(rng.below(3)), horizon, {0}, true);
      const double budget = 1.0 + rng.uniform() * (horizon - 1);
      const LpSolution plain =
          solve_coupled(inst.arms, inst.horizon, budget, false);
      const LpSolution blocks =
          solve_coupled(inst.arms, inst.horizon, budget, true);
      t.note(-std::abs(plain.objective - blocks.objective));
    } catch (const std::exception& e) {
      t.fail(e.what());
    }
  }
  return finish("zero-delay-agreement", t, kValueTol,
                "block-state solver matches the per-step solver at delay 0");
}

// --- per-instance audits ------------------------------------------------------

// Copy of the arm's outcome law with rewards rebased on the bid and folded
// against the arm's budget, at whatever depth is available.
OutcomeDag instance_arm_dag(const ArmSpec& arm, int horizon) {
  if (arm.prior.kind == PriorSpec::Kind::ExplicitDag) {
    if (!arm.prior.dag) {
      throw std::invalid_argument("arm '" + arm.id +
                                  "' has no attached outcome DAG");
    }
    OutcomeDag dag = *arm.prior.dag;
    for (auto& s : dag.states) s.effective_reward = arm.bid;
    return fold_budget(dag, arm.budget, arm.bid);
  }
  return *build_arm_dag(arm, std::max(1, horizon));
}

}  // namespace

bool VerifyReport::all_pass() const {
  return std::all_of(invariants.begin(), invariants.end(),
                     [](const InvariantResult& r) { return r.pass; });
}

VerifyReport run_verification(std::uint64_t seed, int scale) {
  if (scale < 1) throw std::invalid_argument("verification scale must be >= 1");
  VerifyReport report;
  report.invariants.push_back(check_martingale(seed, scale));
  report.invariants.push_back(check_kernel_identity(seed, scale));
  report.invariants.push_back(check_truncation(seed, scale));
  check_transforms(seed, scale, report.invariants);
  report.invariants.push_back(check_concave_chain(seed, scale));
  report.invariants.push_back(check_settlement(seed, scale));
  report.invariants.push_back(check_duality(seed, scale));
  report.invariants.push_back(check_oracle_bound(seed, scale));
  report.invariants.push_back(check_zero_delay_agreement(seed, scale));
  return report;
}

std::vector<InvariantResult> verify_instance(const Instance& inst) {
  MarginTracker martingale;
  MarginTracker kernel;
  for (const ArmSpec& arm : inst.arms) {
    try {
      const OutcomeDag dag = instance_arm_dag(arm, inst.horizon);
      martingale.note(kValueTol - validate_martingale(dag));
      if (!is_unbudgeted(arm.budget)) continue;
      for (int u = 0; u < dag.size(); ++u) {
        for (int plays = 1; plays <= 3; ++plays) {
          if (dag.at(u).depth + plays > dag.max_depth) continue;
          KernelRow row;
          try {
            row = kernel_row(dag, u, plays);
          } catch (const std::out_of_range&) {
            continue;  // subtree ends at a frontier before `plays` plays
          }
          const double want = plays * dag.at(u).mean * arm.bid;
          kernel.note(kValueTol - std::abs(row.expected_reward - want));
        }
      }
    } catch (const std::exception& e) {
      martingale.fail(std::string("arm '") + arm.id + "': " + e.what());
    }
  }
  std::vector<InvariantResult> out;
  out.push_back(finish("instance-martingale", martingale, 0.0,
                       "arm outcome laws hold the posterior-mean identity "
                       "to 1e-9 (stricter than load admission)"));
  out.push_back(finish("instance-kernel", kernel, 0.0,
                       "unbudgeted arms pay plays * mean * bid per block"));
  return out;
}

std::string verify_report_text(const VerifyReport& report) {
  ordered_json doc;
  doc["kind"] = "verify-report";
  doc["pass"] = report.all_pass();
  ordered_json rows = ordered_json::array();
  for (const InvariantResult& r : report.invariants) {
    ordered_json row;
    row["name"] = r.name;
    row["pass"] = r.pass;
    row["slack"] = r.slack;
    row["tolerance"] = r.tolerance;
    row["cases"] = r.cases;
    row["detail"] = r.detail;
    rows.push_back(std::move(row));
  }
  doc["invariants"] = std::move(rows);
  return doc.dump(2) + "\n";
}

}  // namespace dmab
