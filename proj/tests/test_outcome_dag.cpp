// Posterior-DAG construction, budget folding, and play-kernel identities.
#include <cmath>
#include <memory>
#include <stdexcept>

#include "dmab/block_kernel.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/types.hpp"
#include "test_helpers.hpp"

using namespace dmab;

TEST_CASE("beta DAG: level structure, keys, posterior means") {
  const OutcomeDag dag = build_beta_dag(1, 1, 1.0, 3);
  CHECK(dag.size() == 10);  // 1 + 2 + 3 + 4 states
  CHECK(dag.max_depth == 3);
  CHECK(dag.exchangeable);

  const DagState& root = dag.at(dag.root);
  CHECK(root.depth == 0);
  CHECK(root.key == "b:1,1");
  CHECK_NEAR(root.mean, 0.5, 1e-15);

  for (const DagState& st : dag.states) {
    CHECK_NEAR(st.mean, (1.0 + st.successes) / (2.0 + st.depth), 1e-15);
    CHECK(st.success_prob == st.mean);
    CHECK(st.effective_reward == 1.0);
  }

  CHECK(dag.at(root.success_child).depth == 1);
  CHECK(dag.at(root.success_child).successes == 1);
  CHECK(dag.at(root.failure_child).successes == 0);
  CHECK(dag.find("b:2,1") == root.success_child);
  CHECK(dag.find("b:1,2") == root.failure_child);
  CHECK(dag.find("no-such-state") == -1);

  int frontier = 0;
  for (int i = 0; i < dag.size(); ++i) frontier += dag.is_frontier(i);
  CHECK(frontier == 4);  // exactly the depth-3 level

  CHECK(validate_martingale(dag) <= kMartingaleTol);
}

TEST_CASE("beta DAG: parameter validation") {
  CHECK_THROWS_AS(build_beta_dag(0, 1, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(build_beta_dag(1, -1, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(build_beta_dag(1, 1, 1.0, -1), std::invalid_argument);
}

TEST_CASE("mixture DAG: Bayes updates of the hypothesis weights") {
  const OutcomeDag dag = build_mixture_dag({0.5, 0.5}, {0.9, 0.1}, 1.0, 2);
  const DagState& root = dag.at(dag.root);
  CHECK_NEAR(root.mean, 0.5, 1e-15);
  CHECK(dag.exchangeable);
  CHECK(dag.hyp_weights == std::vector<double>({0.5, 0.5}));
  CHECK(dag.hyp_means == std::vector<double>({0.9, 0.1}));

  // After one success the weights tilt to the hot hypothesis: posterior
  // weights (0.9, 0.1), mean 0.9*0.9 + 0.1*0.1 = 0.82; mirror on failure.
  CHECK_NEAR(dag.at(root.success_child).mean, 0.82, 1e-12);
  CHECK_NEAR(dag.at(root.failure_child).mean, 0.18, 1e-12);
  CHECK(validate_martingale(dag) <= kMartingaleTol);

  CHECK_THROWS_AS(build_mixture_dag({0.5}, {0.9, 0.1}, 1.0, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_mixture_dag({-0.5, 1.5}, {0.9, 0.1}, 1.0, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_mixture_dag({0.5, 0.5}, {0.9, 1.1}, 1.0, 2),
                  std::invalid_argument);
}

TEST_CASE("budget folding zeroes rewards once the cap is hit") {
  const OutcomeDag dag = build_beta_dag(1, 1, 1.0, 3);
  const OutcomeDag folded = fold_budget(dag, 2.0, 1.0);
  for (const DagState& st : folded.states) {
    const double want = st.successes < 2 ? 1.0 : 0.0;
    CHECK(st.effective_reward == want);
  }
  // Folding must not disturb the outcome law.
  CHECK(validate_martingale(folded) <= kMartingaleTol);

  const OutcomeDag open = fold_budget(dag, kInfiniteBudget, 1.0);
  for (const DagState& st : open.states) CHECK(st.effective_reward == 1.0);

  CHECK_THROWS_AS(fold_budget(dag, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("build_arm_dag: bid rebasing, folding, explicit-prior errors") {
  ArmSpec arm;
  arm.id = "a";
  arm.prior = PriorSpec::beta(1, 1);
  arm.bid = 0.5;
  arm.budget = 2.0;  // pays the first ceil(2 / 0.5) = 4 successes
  const auto dag = build_arm_dag(arm, 6);
  for (const DagState& st : dag->states) {
    const double want = st.successes < 4 ? 0.5 : 0.0;
    CHECK(st.effective_reward == want);
  }

  ArmSpec bare;
  bare.id = "x";
  bare.prior.kind = PriorSpec::Kind::ExplicitDag;  // no DAG attached
  CHECK_THROWS_AS(build_arm_dag(bare, 1), std::invalid_argument);

  // A frontier shallower than the requested depth is refused.
  ArmSpec shallow;
  shallow.id = "s";
  shallow.prior = PriorSpec::explicit_dag(
      std::make_shared<OutcomeDag>(build_beta_dag(1, 1, 1.0, 2)));
  CHECK_THROWS_AS(build_arm_dag(shallow, 5), std::invalid_argument);

  // Deep enough: the bid is rebased onto every state.
  shallow.bid = 2.0;
  const auto rebased = build_arm_dag(shallow, 2);
  for (const DagState& st : rebased->states) CHECK(st.effective_reward == 2.0);
}

TEST_CASE("kernel_row: martingale reward identity and landing laws") {
  const OutcomeDag dag = build_beta_dag(1, 1, 1.0, 4);

  const KernelRow zero = kernel_row(dag, dag.root, 0);
  CHECK(zero.expected_reward == 0.0);
  CHECK(zero.outcomes.size() == 1);
  CHECK(zero.outcomes[0].node == dag.root);
  CHECK(zero.outcomes[0].prob == 1.0);

  // Two plays from a fresh Beta(1,1): Beta-binomial landing law is uniform
  // over {0,1,2} successes, reward 2 * 1/2 by optional stopping.
  const KernelRow two = kernel_row(dag, dag.root, 2);
  CHECK_NEAR(two.expected_reward, 1.0, 1e-12);
  CHECK_NEAR(two.expected_successes, 1.0, 1e-12);
  REQUIRE(two.outcomes.size() == 3);
  for (const BlockOutcome& o : two.outcomes) CHECK_NEAR(o.prob, 1.0 / 3.0, 1e-12);
  CHECK(dag.at(two.outcomes[0].node).successes == 0);
  CHECK(dag.at(two.outcomes[1].node).successes == 1);
  CHECK(dag.at(two.outcomes[2].node).successes == 2);

  // Unbudgeted: every play's marginal reward is the current mean times bid.
  const std::vector<double> marg = play_marginals(dag, dag.root, 4);
  REQUIRE(marg.size() == 4);
  double prefix = 0.0;
  for (int p = 0; p < 4; ++p) {
    CHECK_NEAR(marg[static_cast<std::size_t>(p)], 0.5, 1e-12);
    prefix += marg[static_cast<std::size_t>(p)];
    CHECK_NEAR(prefix, kernel_row(dag, dag.root, p + 1).expected_reward, 1e-12);
  }

  CHECK_THROWS_AS(kernel_row(dag, dag.root, 5), std::out_of_range);
}

TEST_CASE("kernel_row_given_mean pins the outcome law to the true mean") {
  const OutcomeDag dag = build_beta_dag(1, 1, 1.0, 3);
  const KernelRow sure = kernel_row_given_mean(dag, dag.root, 2, 1.0);
  CHECK_NEAR(sure.expected_successes, 2.0, 1e-12);
  CHECK_NEAR(sure.expected_reward, 2.0, 1e-12);
  double top = 0.0;
  for (const BlockOutcome& o : sure.outcomes) {
    if (dag.at(o.node).successes == 2) top = o.prob;
  }
  CHECK_NEAR(top, 1.0, 1e-12);

  const KernelRow half = kernel_row_given_mean(dag, dag.root, 2, 0.25);
  CHECK_NEAR(half.expected_successes, 0.5, 1e-12);
}

TEST_CASE("block_kernel enforces the per-mode play caps") {
  const auto dag = build_beta_dag(1, 1, 1.0, 4);
  const double c = 1.0 / 17.0;
  const int delay = 34;  // ceil(c * delay) = 2 plays per regular block

  const BlockState reg{dag.root, 0, BlockMode::Regular};
  const BlockKernel bk = block_kernel(dag, reg, 2, delay, c);
  CHECK(bk.span == 2 * delay + 1);
  CHECK(bk.rows.size() == 3);
  CHECK_NEAR(bk.rows[2].expected_reward, 1.0, 1e-12);
  CHECK_THROWS_AS(block_kernel(dag, reg, 3, delay, c), std::invalid_argument);

  const BlockState nd{dag.root, 0, BlockMode::NoDelay};
  const BlockKernel ndk = block_kernel(dag, nd, 1, delay, c);
  CHECK(ndk.span == 1);
  CHECK(ndk.rows.size() == 2);
  CHECK_THROWS_AS(block_kernel(dag, nd, 2, delay, c), std::invalid_argument);
}
