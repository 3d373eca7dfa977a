// Block-policy construction, exact evaluation, play capping, and the
// per-step evaluator's closed-form oracles.
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "dmab/evaluate.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/policy.hpp"
#include "dmab/step_policy.hpp"
#include "test_helpers.hpp"

using namespace dmab;

namespace {

std::shared_ptr<const OutcomeDag> beta11(int depth) {
  return std::make_shared<const OutcomeDag>(build_beta_dag(1, 1, 1.0, depth));
}

// Play once; on success play once more, on failure quit.  Delay 0, T = 2.
// R = 1/2 + 1/2 * 2/3 = 5/6, N = 3/2.
SingleArmPolicy stay_on_success(const std::shared_ptr<const OutcomeDag>& dag) {
  PolicyBuilder b(dag, 0, 2);
  const int root = b.add_node(dag->root, 0, BlockMode::Regular);
  const int succ = dag->at(dag->root).success_child;
  const int fail = dag->at(dag->root).failure_child;
  const int hot = b.add_node(succ, 1, BlockMode::Regular);
  const int cold = b.add_node(fail, 1, BlockMode::Regular);
  b.set_quit(cold, 1.0);
  std::vector<int> grandkids;
  for (const BlockOutcome& o : kernel_row(*dag, succ, 1).outcomes) {
    const int leaf = b.add_node(o.node, 2, BlockMode::Regular);
    b.set_quit(leaf, 1.0);
    grandkids.push_back(leaf);
  }
  b.add_block(hot, 1.0, 1, grandkids);
  b.add_block(root, 1.0, 1, {cold, hot});
  b.set_root(root);
  return b.build();
}

}  // namespace

TEST_CASE("evaluate: single committed block (delay 1)") {
  const auto dag = beta11(4);
  PolicyBuilder b(dag, 1, 2);
  const int root = b.add_node(dag->root, 0, BlockMode::Regular);
  std::vector<int> kids;
  for (const BlockOutcome& o : kernel_row(*dag, dag->root, 2).outcomes) {
    const int leaf = b.add_node(o.node, 3, BlockMode::Regular);  // span 3
    b.set_quit(leaf, 1.0);
    kids.push_back(leaf);
  }
  b.add_block(root, 1.0, 2, kids);
  b.set_root(root);
  const SingleArmPolicy p = b.build();

  const PolicyValue v = evaluate(p);
  CHECK_NEAR(v.reward, 1.0, 1e-12);  // 2 plays * mean 1/2
  CHECK_NEAR(v.plays, 2.0, 1e-12);

  // Conditional on the true mean the reward is plays * mu.
  const PolicyValue given = evaluate_given_mean(p, 0.3);
  CHECK_NEAR(given.reward, 0.6, 1e-12);
  CHECK_NEAR(given.plays, 2.0, 1e-12);

  const EvalDetail detail = evaluate_detailed(p);
  CHECK_NEAR(detail.reach[0], 1.0, 1e-15);
  double stop_mass = 0.0;
  for (const StopAtom& s : detail.stops) stop_mass += s.mass;
  CHECK_NEAR(stop_mass, 1.0, 1e-12);

  CHECK(max_path_plays(p) == 2);
}

TEST_CASE("evaluate: randomized quit keeps the mass split") {
  const auto dag = beta11(2);
  PolicyBuilder b(dag, 0, 1);
  const int root = b.add_node(dag->root, 0, BlockMode::Regular);
  std::vector<int> kids;
  for (const BlockOutcome& o : kernel_row(*dag, dag->root, 1).outcomes) {
    const int leaf = b.add_node(o.node, 1, BlockMode::Regular);
    b.set_quit(leaf, 1.0);
    kids.push_back(leaf);
  }
  b.set_quit(root, 0.5);
  b.add_block(root, 0.5, 1, kids);
  b.set_root(root);
  const SingleArmPolicy p = b.build();
  const PolicyValue v = evaluate(p);
  CHECK_NEAR(v.reward, 0.25, 1e-15);
  CHECK_NEAR(v.plays, 0.5, 1e-15);
}

TEST_CASE("evaluate: adaptive two-step policy hits the 5/6 oracle") {
  const auto dag = beta11(4);
  const SingleArmPolicy p = stay_on_success(dag);
  const PolicyValue v = evaluate(p);
  CHECK_NEAR(v.reward, 5.0 / 6.0, 1e-12);
  CHECK_NEAR(v.plays, 1.5, 1e-12);

  // The conditional account must reproduce the pay-per-play identity.
  for (double mu : {0.1, 0.5, 0.9}) {
    const ConditionalValue cv = evaluate_conditional(p, mu);
    CHECK(claim1_gap(cv, 1.0) <= 1e-12);
    CHECK_NEAR(cv.reward_given_mean, mu * (1.0 + mu), 1e-12);
    CHECK_NEAR(cv.path_length, 1.0 + mu, 1e-12);
  }
}

TEST_CASE("evaluate: budget folding matches the stopped-success account") {
  // Beta(1,1), bid 1, budget 1: only the first success pays.  Play-two
  // policy value: 1/2 + 1/2 * 1/3 = 2/3.
  auto folded = std::make_shared<const OutcomeDag>(
      fold_budget(build_beta_dag(1, 1, 1.0, 4), 1.0, 1.0));
  PolicyBuilder b(folded, 0, 2);
  const int root = b.add_node(folded->root, 0, BlockMode::Regular);
  std::vector<int> mids;
  for (const BlockOutcome& o : kernel_row(*folded, folded->root, 1).outcomes) {
    const int mid = b.add_node(o.node, 1, BlockMode::Regular);
    std::vector<int> kids;
    for (const BlockOutcome& oo : kernel_row(*folded, o.node, 1).outcomes) {
      const int leaf = b.add_node(oo.node, 2, BlockMode::Regular);
      b.set_quit(leaf, 1.0);
      kids.push_back(leaf);
    }
    b.add_block(mid, 1.0, 1, kids);
    mids.push_back(mid);
  }
  b.add_block(root, 1.0, 1, mids);
  b.set_root(root);
  const SingleArmPolicy both = b.build();
  const PolicyValue v = evaluate(both);
  CHECK_NEAR(v.reward, 2.0 / 3.0, 1e-12);
  CHECK_NEAR(v.plays, 2.0, 1e-12);
  CHECK(stop_reward_gap(both, 1.0, 1.0) <= 1e-12);
}

TEST_CASE("cap_plays and truncate_plays cut pathwise play prefixes") {
  const auto dag = beta11(4);
  const SingleArmPolicy p = stay_on_success(dag);

  const SingleArmPolicy one = cap_plays(p, 1);
  const PolicyValue v1 = evaluate(one);
  CHECK_NEAR(v1.reward, 0.5, 1e-12);
  CHECK_NEAR(v1.plays, 1.0, 1e-12);
  CHECK(max_path_plays(one) == 1);

  const SingleArmPolicy none = cap_plays(p, 0);
  const PolicyValue v0 = evaluate(none);
  CHECK(v0.reward == 0.0);
  CHECK(v0.plays == 0.0);

  const TruncationResult half = truncate_plays(p, 0.5);
  CHECK(half.cap == 1);  // ceil(0.5 * 2)
  const PolicyValue vh = evaluate(half.policy);
  CHECK_NEAR(vh.reward, 0.5, 1e-12);
  CHECK(vh.reward >= 0.5 * evaluate(p).reward - 1e-12);

  const TruncationResult most = truncate_plays(p, 0.9);
  CHECK(most.cap == 2);  // ceil(1.8): the policy survives whole
  CHECK_NEAR(evaluate(most.policy).reward, 5.0 / 6.0, 1e-12);
}

TEST_CASE("validate_policy rejects malformed strategies") {
  const auto dag = beta11(4);
  const SingleArmPolicy good = stay_on_success(dag);
  CHECK_NOTHROW(validate_policy(good));

  SingleArmPolicy overweight = good;
  overweight.nodes[static_cast<std::size_t>(overweight.root)].quit_weight = 0.5;
  CHECK_THROWS_AS(validate_policy(overweight), std::invalid_argument);

  SingleArmPolicy negative = good;
  negative.nodes[static_cast<std::size_t>(negative.root)].quit_weight = 0.2;
  negative.nodes[static_cast<std::size_t>(negative.root)].choices[0].weight = -0.2;
  CHECK_THROWS_AS(validate_policy(negative), std::invalid_argument);

  SingleArmPolicy overlong = good;
  overlong.nodes[static_cast<std::size_t>(overlong.root)].choices[0].plays = 3;
  CHECK_THROWS_AS(validate_policy(overlong), std::invalid_argument);

  // A block longer than the mode cap: delay 0 regular blocks play <= 1.
  SingleArmPolicy fat = good;
  fat.horizon = 8;
  fat.nodes[static_cast<std::size_t>(fat.root)].choices[0].plays = 2;
  CHECK_THROWS_AS(validate_policy(fat), std::invalid_argument);

  // Switch is only legal from regular mode and must hold the posterior.
  SingleArmPolicy from_nd;
  from_nd.dag = dag;
  from_nd.delay = 0;
  from_nd.horizon = 2;
  from_nd.nodes.resize(2);
  from_nd.nodes[0].state = {dag->root, 0, BlockMode::NoDelay};
  from_nd.nodes[0].choices.push_back(
      {PolicyChoice::Kind::Switch, 1.0, 0, {1}});
  from_nd.nodes[1].state = {dag->root, 0, BlockMode::NoDelay};
  from_nd.nodes[1].quit_weight = 1.0;
  from_nd.root = 0;
  CHECK_THROWS_AS(validate_policy(from_nd), std::invalid_argument);

  SingleArmPolicy moved = from_nd;
  moved.nodes[0].state.mode = BlockMode::Regular;
  moved.nodes[1].state.dag_node = dag->at(dag->root).success_child;
  CHECK_THROWS_AS(validate_policy(moved), std::invalid_argument);
}

TEST_CASE("step evaluator: unconditional play ignores the delay") {
  for (int delay : {0, 2}) {
    auto dag = beta11(8);
    StepPolicy sp;
    sp.dag = dag;
    sp.delay = delay;
    sp.horizon = 4;
    sp.rule = [](const StepObservation&) { return StepAction::Play; };
    const PolicyValue v = evaluate_step_policy(sp);
    CHECK_NEAR(v.reward, 2.0, 1e-12);
    CHECK_NEAR(v.plays, 4.0, 1e-12);
  }
}

TEST_CASE("step evaluator: feedback-driven rules hit closed forms") {
  auto dag = beta11(8);

  // Delay 0: play, then continue only above mean 1/2 -> 5/6 and 3/2.
  StepPolicy react;
  react.dag = dag;
  react.delay = 0;
  react.horizon = 2;
  react.rule = [dag](const StepObservation& ob) {
    if (ob.t == 0) return StepAction::Play;
    return dag->at(ob.disclosed).mean > 0.5 ? StepAction::Play
                                            : StepAction::Quit;
  };
  const PolicyValue rv = evaluate_step_policy(react);
  CHECK_NEAR(rv.reward, 5.0 / 6.0, 1e-12);
  CHECK_NEAR(rv.plays, 1.5, 1e-12);

  // Delay 1: the same decision needs a wait step before the outcome is
  // visible; value is unchanged, one step later.
  StepPolicy lag;
  lag.dag = dag;
  lag.delay = 1;
  lag.horizon = 3;
  lag.rule = [dag](const StepObservation& ob) {
    if (ob.t == 0) return StepAction::Play;
    if (ob.pending != 0) return StepAction::Wait;
    return dag->at(ob.disclosed).mean > 0.5 ? StepAction::Play
                                            : StepAction::Quit;
  };
  const PolicyValue lv = evaluate_step_policy(lag);
  CHECK_NEAR(lv.reward, 5.0 / 6.0, 1e-12);
  CHECK_NEAR(lv.plays, 1.5, 1e-12);

  // Quit is absorbing but the pending play still resolves and pays.
  StepPolicy bail;
  bail.dag = dag;
  bail.delay = 2;
  bail.horizon = 4;
  bail.rule = [](const StepObservation& ob) {
    return ob.t == 0 ? StepAction::Play : StepAction::Quit;
  };
  const PolicyValue bv = evaluate_step_policy(bail);
  CHECK_NEAR(bv.reward, 0.5, 1e-12);
  CHECK_NEAR(bv.plays, 1.0, 1e-12);
}
