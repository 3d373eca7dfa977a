// The per-step -> block rewrite chain: per-stage value bounds on a grid of
// strategies, plus a deep-delay fixture that reaches the grouping paths
// (new roots, elimination, tail coupling) small delays cannot.
#include <functional>
#include <memory>
#include <vector>

#include "dmab/evaluate.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/policy.hpp"
#include "dmab/step_policy.hpp"
#include "dmab/transforms.hpp"
#include "test_helpers.hpp"

using namespace dmab;

namespace {

// Four rule families: unconditional play, myopic threshold, parity
// play/wait, and a pending-gated threshold.
StepPolicy make_rule(const std::shared_ptr<const OutcomeDag>& dag, int delay,
                     int horizon, int rule_id) {
  StepPolicy sp;
  sp.dag = dag;
  sp.delay = delay;
  sp.horizon = horizon;
  sp.rule = [dag, rule_id](const StepObservation& ob) {
    const DagState& st = dag->at(ob.disclosed);
    switch (rule_id) {
      case 0:
        return StepAction::Play;
      case 1:
        return st.mean >= 0.5 ? StepAction::Play : StepAction::Quit;
      case 2:
        if (st.mean < 0.4) return StepAction::Quit;
        return (ob.t % 2 == 0) ? StepAction::Play : StepAction::Wait;
      default:
        if (ob.pending != 0) return StepAction::Wait;
        return st.mean > 0.34 ? StepAction::Play : StepAction::Quit;
    }
  };
  return sp;
}

void run_case(int delay, int horizon, int rule_id) {
  CAPTURE(delay);
  CAPTURE(horizon);
  CAPTURE(rule_id);
  auto dag = std::make_shared<const OutcomeDag>(
      build_beta_dag(1, 1, 1.0, 2 * (horizon + delay) + 1));
  const StepPolicy sp = make_rule(dag, delay, horizon, rule_id);
  const PolicyValue base = evaluate_step_policy(sp);

  TransformReport r1, r2, r3, r4;
  const SingleArmPolicy bs = to_block_structured(sp, delay, horizon, &r1);
  const PolicyValue bsv = evaluate(bs);
  CHECK_NEAR(bsv.reward, base.reward, 1e-9);
  CHECK_NEAR(bsv.plays, base.plays, 1e-9);
  CHECK(r1.slack > -1e-9);

  const double c = 1.0 / 17.0;
  const SingleArmPolicy df = to_delay_free(bs, c, &r2);
  const PolicyValue dfv = evaluate(df);
  CHECK(dfv.reward >= bsv.reward - 1e-9);
  CHECK(dfv.plays <= (1.0 + 1.0 / c) * bsv.plays + 1e-9);
  CHECK(r2.slack > -1e-9);

  const double alpha = 0.125;
  const int q = std::max(1, max_regular_blocks_per_path(df));
  const SingleArmPolicy ws = to_well_structured(df, alpha, c, q, &r3);
  const PolicyValue wsv = evaluate(ws);
  CHECK(wsv.reward >= dfv.reward - 1e-9);
  CHECK(wsv.plays <= (1.0 + 2.0 / alpha) * dfv.plays + 1e-9);
  CHECK(r3.slack > -1e-9);

  const SingleArmPolicy tr = truncate_half(ws, 2 * horizon, &r4);
  const PolicyValue trv = evaluate(tr);
  CHECK(trv.reward >= wsv.reward / 8.0 - 1e-9);
  CHECK(trv.plays <= wsv.plays + 1e-9);

  const PipelineResult pr = transform_pipeline(sp, alpha, c);
  CHECK(pr.reports[4].slack > -1e-9);
  const PolicyValue fin = evaluate(pr.policy);
  CHECK(fin.reward >= alpha * base.reward - 1e-9);
  const double gamma = 2.0 * (1.0 + 1.0 / alpha) * (1.0 + 2.0 / alpha);
  CHECK(fin.plays <= gamma * base.plays + 1e-9);
}

}  // namespace

TEST_CASE("rewrite chain bounds hold across rules, delays, horizons") {
  for (int delay : {0, 1, 2}) {
    for (int horizon : {4, 6}) {
      for (int rule = 0; rule < 4; ++rule) run_case(delay, horizon, rule);
    }
  }
  run_case(3, 8, 1);
  run_case(3, 8, 3);
}

TEST_CASE("block grouping at delay 34: elimination and tail coupling") {
  const int delay = 34;
  const int span = 2 * delay + 1;
  const double c = 1.0 / 17.0;
  const double alpha = 0.125;
  auto dag = std::make_shared<const OutcomeDag>(build_beta_dag(1, 1, 1.0, 48));
  const int horizon = 6 * span;

  // A block of two plays, then per landing half "one more block" (twice)
  // and half a switch into a two-play no-delay tail.
  PolicyBuilder b(dag, delay, horizon);
  auto quit_reg = [&](int v, int e) {
    const int id = b.add_node(v, e, BlockMode::Regular);
    b.set_quit(id, 1.0);
    return id;
  };
  auto quit_nd = [&](int v, int e) {
    const int id = b.add_node(v, e, BlockMode::NoDelay);
    b.set_quit(id, 1.0);
    return id;
  };
  std::function<int(int, int, int)> tail = [&](int v, int e, int left) -> int {
    if (left == 0) return quit_nd(v, e);
    const int id = b.add_node(v, e, BlockMode::NoDelay);
    std::vector<int> kids;
    for (const BlockOutcome& o : kernel_row(*dag, v, 1).outcomes) {
      kids.push_back(tail(o.node, e + 1, left - 1));
    }
    b.add_block(id, 1.0, 1, kids);
    return id;
  };
  auto lvl3 = [&](int v, int e) {
    const int id = b.add_node(v, e, BlockMode::Regular);
    std::vector<int> kids;
    for (const BlockOutcome& o : kernel_row(*dag, v, 1).outcomes) {
      kids.push_back(quit_reg(o.node, e + span));
    }
    b.add_block(id, 1.0, 1, kids);
    return id;
  };
  auto lvl2 = [&](int v, int e) {
    const int id = b.add_node(v, e, BlockMode::Regular);
    std::vector<int> kids;
    for (const BlockOutcome& o : kernel_row(*dag, v, 1).outcomes) {
      kids.push_back(lvl3(o.node, e + span));
    }
    b.add_block(id, 0.5, 1, kids);
    b.add_switch(id, 0.5, tail(v, e, 2));
    return id;
  };
  const int root = b.add_node(dag->root, 0, BlockMode::Regular);
  std::vector<int> kids;
  for (const BlockOutcome& o : kernel_row(*dag, dag->root, 2).outcomes) {
    kids.push_back(lvl2(o.node, span));
  }
  b.add_block(root, 1.0, 2, kids);
  b.set_root(root);
  SingleArmPolicy p = b.build();
  p.delay_free_c = c;
  CHECK_NOTHROW(validate_policy(p));

  const PolicyValue in_v = evaluate(p);
  const int q_blocks = max_regular_blocks_per_path(p);
  CHECK(q_blocks == 3);

  TransformReport rep;
  const SingleArmPolicy ws = to_well_structured(p, alpha, c, q_blocks, &rep);
  const PolicyValue out_v = evaluate(ws);
  CHECK(out_v.reward >= in_v.reward - 1e-9);
  CHECK(out_v.plays <= (1.0 + 2.0 / alpha) * in_v.plays + 1e-9);
  CHECK(rep.slack > -1e-9);
  CHECK(max_regular_blocks_per_path(ws) == 1);
  CHECK(ws.well_structured_alpha == alpha);
  CHECK(ws.delay_free_c == 0.0);

  TransformReport rep_t;
  const SingleArmPolicy tr = truncate_half(ws, 2 * horizon, &rep_t);
  const PolicyValue tr_v = evaluate(tr);
  CHECK(tr_v.reward >= out_v.reward / 8.0 - 1e-9);
  CHECK(tr_v.plays <= out_v.plays + 1e-9);
}

TEST_CASE("rewrite preconditions are enforced") {
  auto dag = std::make_shared<const OutcomeDag>(build_beta_dag(1, 1, 1.0, 21));
  const StepPolicy sp = make_rule(dag, 1, 4, 0);

  // Stage-1 shape requirements.
  CHECK_THROWS_AS(to_block_structured(sp, 2, 4, nullptr),
                  std::invalid_argument);  // delay mismatch
  CHECK_THROWS_AS(to_block_structured(sp, 1, 6, nullptr),
                  std::invalid_argument);  // horizon mismatch

  const SingleArmPolicy bs = to_block_structured(sp, 1, 4, nullptr);
  CHECK_THROWS_AS(to_delay_free(bs, 0.0, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(to_delay_free(bs, 1.5, nullptr), std::invalid_argument);

  const SingleArmPolicy df = to_delay_free(bs, 1.0 / 17.0, nullptr);
  // c > alpha / (alpha + 2) breaks the grouping capacity argument.
  CHECK_THROWS_AS(to_well_structured(df, 0.125, 0.2, 4, nullptr),
                  std::invalid_argument);
  // Understated per-path block budget.
  CHECK_THROWS_AS(
      to_well_structured(df, 0.125, 1.0 / 17.0,
                         max_regular_blocks_per_path(df) - 1, nullptr),
      std::invalid_argument);
  // Halting requires a well-structured input.
  CHECK_THROWS_AS(truncate_half(df, 8, nullptr), std::invalid_argument);
}
