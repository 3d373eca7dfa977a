// Budgeted allocation planning, execution, and the revenue bound rehearsal.
#include <cmath>
#include <vector>

#include "dmab/budgeted.hpp"
#include "dmab/planner.hpp"
#include "dmab/rng.hpp"
#include "dmab/sim.hpp"
#include "test_helpers.hpp"

using namespace dmab;

namespace {

AllocationInstance toy_2x2() {
  AllocationInstance inst;
  inst.bidders = {{"a", 2.0}, {"b", 1.0}};
  inst.types = {{"x", 4}, {"y", 4}};
  inst.pairs.resize(2);
  PairSpec ax;
  ax.prior = PriorSpec::beta(1, 1);
  PairSpec ay;
  ay.prior = PriorSpec::beta(1, 2);
  PairSpec bx;
  bx.prior = PriorSpec::mixture({0.5, 0.5}, {0.9, 0.1});
  PairSpec by;
  by.prior = PriorSpec::beta(2, 2);
  inst.pairs[0] = {ax, ay};
  inst.pairs[1] = {bx, by};
  return inst;
}

}  // namespace

TEST_CASE("single pair with open budget degenerates to one coupled solve") {
  AllocationInstance inst;
  inst.bidders = {{"solo", kInfiniteBudget}};
  inst.types = {{"only", 6}};
  PairSpec p;
  p.prior = PriorSpec::beta(1, 1);
  inst.pairs = {{p}};
  const BudgetedPlan plan = plan_budgeted(inst);

  ArmSpec arm;
  arm.id = "solo:only";
  arm.prior = PriorSpec::beta(1, 1);
  const LpSolution direct = solve_coupled({arm}, 6, 6.0, false);
  CHECK_NEAR(plan.objective, direct.objective, 1e-9);
  CHECK(plan.mu[0] == 0.0);
  CHECK(std::isinf(plan.shadow.amount[0][0]));

  // Single type: execution matches one combine trajectory, same seed.
  const BudgetedOutcome one = execute_budgeted(plan, inst, 99, 7);
  const GroundTruth truth = draw_ground_truth(
      plan.type_arms[0], {}, 7, 99, mix_ids(hash_label("budgeted-truth"), 7, 0));
  const TrajectoryResult traj =
      run_trajectory(plan.per_type[0], plan.type_arms[0], truth, 99,
                     mix_ids(hash_label("budgeted-run"), 7, 0));
  CHECK(one.revenue == traj.total);
}

TEST_CASE("zero budgets and zero-conversion priors yield zero revenue") {
  AllocationInstance broke = toy_2x2();
  broke.bidders[0].budget = 0.0;
  broke.bidders[1].budget = 0.0;
  const BudgetedPlan plan = plan_budgeted(broke);
  CHECK_NEAR(plan.objective, 0.0, 1e-12);
  CHECK(execute_budgeted(plan, broke, 5).revenue == 0.0);

  AllocationInstance dead;
  dead.bidders = {{"z", 3.0}};
  dead.types = {{"t", 5}};
  PairSpec p;
  p.prior = PriorSpec::mixture({1.0}, {0.0});
  dead.pairs = {{p}};
  const BudgetedPlan dplan = plan_budgeted(dead);
  CHECK(execute_budgeted(dplan, dead, 17).revenue == 0.0);
}

TEST_CASE("2x2 toy: caps, joint oracle, and the settlement bound") {
  const AllocationInstance inst = toy_2x2();
  const BudgetedPlan plan = plan_budgeted(inst);

  // Bidder budgets hold in expectation.
  CHECK(plan.pair_reward[0] + plan.pair_reward[1] <= 2.0 + 1e-6);
  CHECK(plan.pair_reward[2] + plan.pair_reward[3] <= 1.0 + 1e-6);
  CHECK(plan.objective > 0.1);

  const std::vector<int> sched = arrival_schedule(inst, 0);
  CHECK(sched.size() == 8);
  const double opt = brute_force_budgeted(inst, sched);
  CHECK(opt > 0.0);
  CHECK(plan.objective >= opt / 8.0 - 1e-9);

  // The revenue estimate clears half the accrued mass (settlement bound).
  const BudgetedEstimate est = run_budgeted_mc(plan, inst, 20000, 4242);
  double sum_z = 0.0;
  for (const auto& row : est.pair_accrued_mean)
    for (double z : row) sum_z += z;
  CHECK(est.revenue.mean >= 0.5 * sum_z - 3.0 * est.revenue.std_error - 1e-9);

  // Pathwise caps hold on every trajectory.
  for (long t = 0; t < 300; ++t) {
    const BudgetedOutcome o = execute_budgeted(plan, inst, 4242, t);
    REQUIRE(o.bidder_revenue[0] <= 2.0 + 1e-9);
    REQUIRE(o.bidder_revenue[1] <= 1.0 + 1e-9);
  }

  // Shadow budgets are integral multiples of the (unit) bid within B_i.
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double s =
          plan.shadow.amount[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      CHECK(s <= inst.bidders[static_cast<std::size_t>(i)].budget + 1e-12);
      CHECK_NEAR(s, std::round(s), 1e-9);
    }
  }
  CHECK(!plan.warnings.empty());
}

TEST_CASE("delayed types plan on the inflated budget and execute") {
  AllocationInstance inst;
  inst.bidders = {{"d", 2.0}};
  inst.types = {{"slow", 8}, {"fast", 4}};
  PairSpec slow;
  slow.prior = PriorSpec::beta(1, 1);
  slow.delay = 1;
  PairSpec fast;
  fast.prior = PriorSpec::beta(1, 2);
  inst.pairs = {{slow, fast}};
  const BudgetedPlan plan = plan_budgeted(inst);
  CHECK(plan.objective > 0.0);
  const BudgetedEstimate est = run_budgeted_mc(plan, inst, 2000, 9);
  CHECK(est.revenue.mean >= 0.0);
  CHECK(est.revenue.mean <= 2.0 + 1e-9);
}

TEST_CASE("arrival schedule paces types proportionally and reproducibly") {
  AllocationInstance inst = toy_2x2();
  inst.types[0].arrivals = 6;
  inst.types[1].arrivals = 3;
  const std::vector<int> a = arrival_schedule(inst, 0);
  CHECK(a == arrival_schedule(inst, 0));
  int c0 = 0, c1 = 0;
  for (int j : a) (j == 0 ? c0 : c1)++;
  CHECK(c0 == 6);
  CHECK(c1 == 3);
  // 2:1 pacing, ties to the earlier type: 0,0,1 repeating.
  CHECK(a == std::vector<int>({0, 0, 1, 0, 0, 1, 0, 0, 1}));

  const std::vector<int> s1 = arrival_schedule(inst, 77);
  CHECK(s1 == arrival_schedule(inst, 77));
  CHECK(s1 != a);
}
