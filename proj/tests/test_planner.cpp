// Priced single-arm DP and the coupled play-budget relaxation against
// frozen closed-form oracles.
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "dmab/planner.hpp"
#include "test_helpers.hpp"

using namespace dmab;

TEST_CASE("priced DP: frozen Beta(1,1) oracle at lambda = 0.4") {
  // Optimal: play, then play again only on success; value 7/30.
  auto dag = std::make_shared<const OutcomeDag>(build_beta_dag(1, 1, 1.0, 4));
  const ArmDpResult r = solve_arm_dp(dag, 0, 0.4, 2, false);
  CHECK_NEAR(r.value.reward - 0.4 * r.value.plays, 7.0 / 30.0, 1e-12);
  CHECK_NEAR(r.value.plays, 1.5, 1e-12);
  CHECK_NEAR(r.value.reward, 5.0 / 6.0, 1e-12);
}

TEST_CASE("priced DP: free plays fill the horizon, priced-out plays stop") {
  auto dag = std::make_shared<const OutcomeDag>(build_beta_dag(2, 3, 2.0, 8));
  const ArmDpResult free_plays = solve_arm_dp(dag, 0, 0.0, 8, false);
  CHECK_NEAR(free_plays.value.reward, 8.0 * (2.0 / 5.0) * 2.0, 1e-9);
  CHECK_NEAR(free_plays.value.plays, 8.0, 1e-12);

  auto coin = std::make_shared<const OutcomeDag>(build_beta_dag(1, 1, 1.0, 4));
  const ArmDpResult priced_out = solve_arm_dp(coin, 0, 1.0, 4, false);
  CHECK(priced_out.value.reward == 0.0);
  CHECK(priced_out.value.plays == 0.0);
}

TEST_CASE("coupled solve: frozen two-arm oracle LP = 10/9 at price 5/9") {
  std::vector<ArmSpec> arms(2);
  arms[0].id = "a";
  arms[1].id = "b";
  const LpSolution sol = solve_coupled(arms, 2, 2.0, false);
  CHECK_NEAR(sol.objective, 10.0 / 9.0, 1e-6);
  CHECK_NEAR(sol.expected_plays, 2.0, 1e-9);
  CHECK_NEAR(sol.lambda, 5.0 / 9.0, 1e-6);
  CHECK(sol.iterations >= 2);
  CHECK_NOTHROW(validate_lp_solution(sol));

  // Extraction is exact against the occupancy account.
  for (int a = 0; a < 2; ++a) {
    const SingleArmPolicy p = extract_randomized(sol, a);
    const PolicyValue v = evaluate(p);
    CHECK_NEAR(v.reward, sol.arms[static_cast<std::size_t>(a)].reward, 1e-9);
    CHECK_NEAR(v.plays, sol.arms[static_cast<std::size_t>(a)].plays, 1e-9);
  }

  // Identical arms get identical occupancies (the per-price DP is shared).
  CHECK_NEAR(sol.arms[0].reward, sol.arms[1].reward, 1e-12);
  CHECK_NEAR(sol.arms[0].plays, sol.arms[1].plays, 1e-12);

  const LpSolution scaled = scale_down(sol, 306.0);
  CHECK_NOTHROW(validate_lp_solution(scaled));
  CHECK_NEAR(scaled.objective, sol.objective / 306.0, 1e-15);
  const SingleArmPolicy sp = extract_randomized(scaled, 0);
  const PolicyValue sv = evaluate(sp);
  CHECK_NEAR(sv.plays, sol.arms[0].plays / 306.0, 1e-12);
  CHECK_NEAR(sv.reward, sol.arms[0].reward / 306.0, 1e-12);
}

TEST_CASE("coupled solve: slack budget keeps the play price at zero") {
  std::vector<ArmSpec> arms(1);
  const LpSolution sol = solve_coupled(arms, 4, 10.0, false);
  CHECK(sol.lambda == 0.0);
  CHECK_NEAR(sol.objective, 4.0 * 0.5, 1e-9);
}

TEST_CASE("coupled solve: input validation") {
  std::vector<ArmSpec> arms(1);
  CHECK_THROWS_AS(solve_coupled({}, 4, 4.0, false), std::invalid_argument);
  CHECK_THROWS_AS(solve_coupled(arms, 4, 0.0, false), std::invalid_argument);
  CHECK_THROWS_AS(scale_down(solve_coupled(arms, 4, 4.0, false), 0.5),
                  std::invalid_argument);
}

TEST_CASE("block formulation at delay 0 equals the plain one") {
  std::vector<ArmSpec> arms(2);
  arms[0].prior = PriorSpec::beta(1, 1);
  arms[1].prior = PriorSpec::beta(1, 2);
  for (double budget : {1.0, 2.0, 3.5}) {
    CAPTURE(budget);
    const LpSolution plain = solve_coupled(arms, 4, budget, false);
    const LpSolution blocks = solve_coupled(arms, 4, budget, true);
    CHECK_NEAR(plain.objective, blocks.objective, 1e-9);
    CHECK_NOTHROW(validate_lp_solution(blocks));
  }
}

TEST_CASE("delayed block solve: feasible, positive, scales down") {
  std::vector<ArmSpec> arms(2);
  arms[0].delay = 1;
  arms[1].delay = 1;
  arms[1].prior = PriorSpec::beta(1, 2);
  const double gamma = composition_gamma(0.125);
  CHECK_NEAR(gamma, 306.0, 1e-12);
  const int horizon = 8;
  const LpSolution sol = solve_coupled(arms, horizon, gamma * horizon, true);
  CHECK_NOTHROW(validate_lp_solution(sol));
  CHECK(sol.objective > 0.0);

  const LpSolution scaled = scale_down(sol, gamma);
  CHECK_NOTHROW(validate_lp_solution(scaled));
  CHECK(scaled.expected_plays <= horizon + 1e-9);
  for (int a = 0; a < 2; ++a) {
    const SingleArmPolicy p = extract_randomized(scaled, a);
    const PolicyValue v = evaluate(p);
    CHECK_NEAR(v.reward, scaled.arms[static_cast<std::size_t>(a)].reward, 1e-9);
  }
}

TEST_CASE("dual upper bound dominates the primal objective") {
  std::vector<ArmSpec> arms(3);
  arms[0].prior = PriorSpec::beta(1, 1);
  arms[1].prior = PriorSpec::beta(2, 1);
  arms[2].prior = PriorSpec::mixture({0.3, 0.7}, {0.9, 0.2});
  arms[2].budget = 2.0;
  const LpSolution sol = solve_coupled(arms, 5, 3.0, false);
  CHECK(sol.dual_upper >= sol.objective - kSolveTol);
  CHECK(sol.expected_plays <= 3.0 + kSolveTol);
  CHECK_NOTHROW(validate_lp_solution(sol));
}
