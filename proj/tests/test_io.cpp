// Round-trip and format checks for the instance/policy/report io layer.
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dmab/evaluate.hpp"
#include "dmab/instance_io.hpp"
#include "dmab/planner.hpp"
#include "dmab/scheduler.hpp"
#include "dmab/sim.hpp"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace dmab;
using doctest::Contains;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

const char* kExplicitDag = R"({
  "horizon": 1,
  "arms": [
    {"id": "x",
     "prior": {"dag": {"states": [
       {"id": "r", "mean": 0.5, "edges": [
         {"outcome": 0, "prob": 0.5, "child": "t"},
         {"outcome": 1, "prob": 0.5, "child": "h"}]},
       {"id": "h", "mean": 0.6666666666666666, "edges": []},
       {"id": "t", "mean": 0.3333333333333333, "edges": []}
     ]}},
     "delay": 0, "bid": 1.0}
  ]
})";

}  // namespace

TEST_CASE("instance round trip: beta, mixture, budgets, bids") {
  Instance inst;
  inst.horizon = 6;
  ArmSpec a;
  a.id = "a";
  a.prior = PriorSpec::beta(2, 1);
  a.delay = 1;
  ArmSpec b;
  b.id = "b";
  b.prior = PriorSpec::mixture({0.25, 0.75}, {0.9, 0.1});
  b.budget = 2.0;
  b.bid = 0.5;
  inst.arms = {a, b};
  const std::string text = save_instance(inst);
  const Instance back = load_instance(text);
  CHECK(back.horizon == 6);
  REQUIRE(back.arms.size() == 2);
  CHECK(back.arms[0].prior.kind == PriorSpec::Kind::Beta);
  CHECK(back.arms[0].prior.alpha1 == 2);
  CHECK(back.arms[0].delay == 1);
  CHECK(is_unbudgeted(back.arms[0].budget));
  CHECK(back.arms[1].prior.kind == PriorSpec::Kind::Mixture);
  CHECK(back.arms[1].prior.weights == std::vector<double>({0.25, 0.75}));
  CHECK(back.arms[1].budget == 2.0);
  CHECK(back.arms[1].bid == 0.5);
  CHECK(save_instance(back) == text);  // byte-identical round trip
}

TEST_CASE("explicit DAG: leveled, ordered, exchangeability detected") {
  const Instance inst = load_instance(kExplicitDag);
  CHECK(inst.arms[0].prior.kind == PriorSpec::Kind::ExplicitDag);
  const OutcomeDag& dag = *inst.arms[0].prior.dag;
  CHECK(dag.size() == 3);
  CHECK(dag.max_depth == 1);
  CHECK(dag.at(0).key == "r");
  CHECK(dag.at(1).key == "t");  // depth 1 ordered by ascending successes
  CHECK(dag.at(2).key == "h");
  CHECK(dag.at(1).successes == 0);
  CHECK(dag.at(2).successes == 1);
  CHECK(dag.at(0).success_child == 2);
  CHECK(dag.at(0).failure_child == 1);
  CHECK(dag.exchangeable);
  CHECK_NEAR(validate_martingale(dag), 0.0, 1e-15);

  // save -> load -> save is byte-identical once canonicalized.
  const std::string once = save_instance(inst);
  CHECK(save_instance(load_instance(once)) == once);

  // The built arm DAG carries the bid and solves like a Beta(1,1) arm.
  const auto built = build_arm_dag(inst.arms[0], 1);
  CHECK(built->at(0).effective_reward == 1.0);
  const LpSolution sol = solve_coupled(inst.arms, 1, 1.0, false);
  CHECK_NEAR(sol.objective, 0.5, 1e-9);
  CHECK(sol.iterations >= 1);
}

TEST_CASE("explicit DAG: non-exchangeable transition laws are flagged") {
  const std::string text = R"({"horizon": 1, "arms": [
    {"id": "x", "prior": {"dag": {"states": [
      {"id": "r", "mean": 0.5, "edges": [
        {"outcome": 1, "prob": 0.5, "child": "A"},
        {"outcome": 0, "prob": 0.5, "child": "B"}]},
      {"id": "A", "mean": 0.8, "edges": [
        {"outcome": 1, "prob": 0.8, "child": "AA"},
        {"outcome": 0, "prob": 0.2, "child": "M"}]},
      {"id": "B", "mean": 0.2, "edges": [
        {"outcome": 1, "prob": 0.3, "child": "M"},
        {"outcome": 0, "prob": 0.7, "child": "BB"}]},
      {"id": "AA", "mean": 0.9, "edges": []},
      {"id": "M", "mean": 0.4, "edges": []},
      {"id": "BB", "mean": 0.11428571428571428, "edges": []}
    ]}}, "delay": 0, "bid": 1.0}]})";
  const Instance inst = load_instance(text);
  CHECK(!inst.arms[0].prior.dag->exchangeable);
  CHECK(inst.arms[0].prior.dag->max_depth == 2);
}

TEST_CASE("explicit DAG rejections name the violated structure") {
  CHECK_THROWS_WITH(
      load_instance(R"({"horizon": 1, "arms": [{"id": "x", "prior": {"dag":
        {"states": [
          {"id": "r", "mean": 0.5, "edges": [
            {"outcome": 1, "prob": 0.5, "child": "h"},
            {"outcome": 0, "prob": 0.5, "child": "t"}]},
          {"id": "h", "mean": 0.9, "edges": []},
          {"id": "t", "mean": 0.4, "edges": []}]}}, "bid": 1.0}]})"),
      Contains("martingale"));
  CHECK_THROWS_WITH(
      load_instance(R"({"horizon": 1, "arms": [{"id": "x", "prior": {"dag":
        {"states": [
          {"id": "r", "mean": 0.5, "edges": [
            {"outcome": 1, "prob": 0.5, "child": "a"},
            {"outcome": 0, "prob": 0.5, "child": "b"}]},
          {"id": "a", "mean": 0.75, "edges": [
            {"outcome": 1, "prob": 0.75, "child": "p"},
            {"outcome": 0, "prob": 0.25, "child": "q"}]},
          {"id": "b", "mean": 0.25, "edges": [
            {"outcome": 1, "prob": 0.25, "child": "s"},
            {"outcome": 0, "prob": 0.75, "child": "z"}]},
          {"id": "p", "mean": 1.0, "edges": []},
          {"id": "q", "mean": 0.0, "edges": []},
          {"id": "s", "mean": 1.0, "edges": []},
          {"id": "z", "mean": 0.0, "edges": []}]}}, "bid": 1.0}]})"),
      Contains("share depth and success count"));
  CHECK_THROWS_WITH(
      load_instance(R"({"horizon": 1, "arms": [{"id": "x", "prior": {"dag":
        {"states": [
          {"id": "r", "mean": 0.5, "edges": [
            {"outcome": 1, "prob": 0.5, "child": "r"},
            {"outcome": 0, "prob": 0.5, "child": "r"}]}]}}, "bid": 1.0}]})"),
      Contains("leveled"));
  CHECK_THROWS_WITH(
      load_instance(R"({"horizon": 1, "arms": [{"id": "x", "prior": {"dag":
        {"states": [
          {"id": "r", "mean": 0.5, "edges": []},
          {"id": "lost", "mean": 0.5, "edges": []}]}}, "bid": 1.0}]})"),
      Contains("unreachable"));
}

TEST_CASE("instance validation errors") {
  CHECK_THROWS_WITH(load_instance(R"({"arms": []})"), Contains("horizon"));
  CHECK_THROWS_WITH(load_instance(R"({"horizon": 2, "arms": []})"),
                    Contains("nonempty"));
  CHECK_THROWS_WITH(
      load_instance(
          R"({"horizon": 2, "arms": [{"id": "a", "prior": {"alpha1": 1, "alpha0": 1}},
                                     {"id": "a", "prior": {"alpha1": 1, "alpha0": 1}}]})"),
      Contains("duplicate arm id"));
  CHECK_THROWS_WITH(
      load_instance(R"({"horizon": 2, "arms": [{"id": "a", "prior": {}}]})"),
      Contains("prior must be"));
  CHECK_THROWS_WITH(
      load_instance(
          R"({"horizon": 2, "arms": [{"id": "a", "prior": {"alpha1": 1, "alpha0": 1}, "delay": -1}]})"),
      Contains("delay"));
  CHECK_THROWS_WITH(
      load_instance(
          R"({"horizon": 2, "arms": [{"id": "a", "prior": {"alpha1": 1, "alpha0": 1}, "bid": 0}]})"),
      Contains("bid"));
}

TEST_CASE("file wrapper reports path and position") {
  const std::string bad = temp_file("io_bad.json");
  write_text_file(bad, "{\n  \"horizon\" 3\n}\n");
  CHECK_THROWS_WITH(load_instance_file(bad), Contains((bad + ":2:").c_str()));
  CHECK_THROWS_WITH(load_instance_file(temp_file("io_missing.json")),
                    Contains("cannot open"));
  const std::string semantic = temp_file("io_semantic.json");
  write_text_file(
      semantic,
      R"({"horizon": -4, "arms": [{"id": "a", "prior": {"alpha1": 1, "alpha0": 1}}]})");
  CHECK_THROWS_WITH(load_instance_file(semantic),
                    Contains((semantic + ": instance: horizon").c_str()));
}

TEST_CASE("block policy round trip through the solver's extraction") {
  std::vector<ArmSpec> arms(2);
  arms[0].id = "a";
  arms[1].id = "b";
  const LpSolution sol = solve_coupled(arms, 2, 2.0, false);
  CHECK_NEAR(sol.objective, 10.0 / 9.0, 1e-9);
  const SingleArmPolicy pol = extract_randomized(sol, 0);
  const std::string text = save_policy(pol);
  const SingleArmPolicy back = load_policy(text, pol.dag);
  CHECK(save_policy(back) == text);  // byte-identical
  const PolicyValue v0 = evaluate(pol);
  const PolicyValue v1 = evaluate(back);
  CHECK(v0.reward == v1.reward);
  CHECK(v0.plays == v1.plays);
  CHECK_THROWS_WITH(load_policy(text, nullptr), Contains("required"));
  // A DAG missing the referenced keys is rejected.
  const auto tiny = build_arm_dag(arms[0], 0);
  CHECK_THROWS_WITH(load_policy(text, tiny), Contains("not in the DAG"));
}

TEST_CASE("step policy: the table dump reproduces the rule exactly") {
  auto dag = std::make_shared<const OutcomeDag>(build_beta_dag(1, 1, 1.0, 8));
  StepPolicy sp;
  sp.dag = dag;
  sp.delay = 2;
  sp.horizon = 6;
  sp.rule = [dag](const StepObservation& o) {
    const DagState& st = dag->at(o.disclosed);
    if (st.mean < 0.34) return StepAction::Quit;
    if (o.pending == 3u) return StepAction::Wait;
    return StepAction::Play;
  };
  const PolicyValue direct = evaluate_step_policy(sp);
  const std::string text = save_step_policy(sp);
  const StepPolicy back = load_step_policy(text, dag);
  const PolicyValue loaded = evaluate_step_policy(back);
  CHECK(direct.reward == loaded.reward);
  CHECK(direct.plays == loaded.plays);
  CHECK(save_step_policy(back) == text);  // byte-identical
  // Lookups outside the reachable table are refused.
  CHECK_THROWS_WITH(back.rule({5, dag->find("b:1,1"), 3u}),
                    Contains("no entry"));
}

TEST_CASE("solver report carries prices, occupancies, and scaling") {
  std::vector<ArmSpec> arms(2);
  arms[0].id = "a";
  arms[1].id = "b";
  const LpSolution sol = solve_coupled(arms, 2, 2.0, false);
  const LpSolution scaled = scale_down(sol, 306.0);
  const std::string text = solver_report(sol, arms, &scaled);
  const auto j = nlohmann::json::parse(text);
  CHECK(j.at("kind") == "solver-report");
  CHECK_NEAR(j.at("lambda").get<double>(), 5.0 / 9.0, 1e-6);
  CHECK_NEAR(j.at("objective").get<double>(), 10.0 / 9.0, 1e-9);
  CHECK(j.at("iterations").get<int>() >= 2);
  CHECK(j.at("duality_gap").get<double>() >= -1e-9);
  CHECK(j.at("arms").size() == 2);
  CHECK(j.at("arms")[0].at("id") == "a");
  CHECK_NEAR(j.at("scaled").at("gamma").get<double>(), 306.0, 1e-9);
  CHECK_NEAR(j.at("scaled").at("objective").get<double>(),
             sol.objective / 306.0, 1e-12);
}

TEST_CASE("trace text: one stable-order record per step") {
  std::vector<ArmSpec> arms(1);
  arms[0].id = "a";
  const LpSolution sol = solve_coupled(arms, 2, 2.0, false);
  GlobalPolicy global;
  global.mode = GlobalPolicy::Mode::SequentialRatio;
  global.order = {0};
  global.horizon = 2;
  global.policies = {extract_randomized(sol, 0)};
  SimTrace trace;
  (void)run_mc(global, arms, 3, 11, {}, &trace, true);
  REQUIRE(trace.size() == 2);
  const std::string text = trace_to_text(trace);
  CHECK(text.find("{\"step\":0,\"arm\":") == 0);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 2);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(first.at("action") == "play");
  CHECK(first.at("disclosed").is_array());
}

TEST_CASE("estimates CSV escapes quotes and commas") {
  CHECK(estimates_csv_header() == "instance,policy,trials,mean,stderr,seed\n");
  CHECK(estimates_csv_row("tight-20", "combine", 1000, 0.5, 0.25, 7) ==
        "tight-20,combine,1000,0.5,0.25,7\n");
  CHECK(estimates_csv_row("a,b", "say \"hi\"", 1, 1.5, 0.0, 0) ==
        "\"a,b\",\"say \"\"hi\"\"\",1,1.5,0,0\n");
}

TEST_CASE("allocation round trip and the revenue report") {
  AllocationInstance inst;
  inst.bidders = {{"a", 2.0}, {"b", kInfiniteBudget}};
  inst.types = {{"x", 4}, {"y", 4}};
  inst.pairs = {{PairSpec{1.0, 0, PriorSpec::beta(1, 1)},
                 PairSpec{1.0, 0, PriorSpec::beta(1, 2)}},
                {PairSpec{1.0, 0, PriorSpec::mixture({0.5, 0.5}, {0.9, 0.1})},
                 PairSpec{1.0, 0, PriorSpec::beta(2, 2)}}};
  const std::string text = save_allocation(inst);
  const AllocationInstance back = load_allocation(text);
  CHECK(save_allocation(back) == text);
  CHECK(back.bidders[0].budget == 2.0);
  CHECK(is_unbudgeted(back.bidders[1].budget));
  CHECK(back.pairs[1][0].prior.kind == PriorSpec::Kind::Mixture);

  const BudgetedPlan plan = plan_budgeted(back);
  const BudgetedPlan plan0 = plan_budgeted(inst);
  CHECK_NEAR(plan.objective, plan0.objective, 1e-12);

  const BudgetedEstimate est = run_budgeted_mc(plan, back, 50, 3);
  const std::string report = revenue_report(plan, back, &est);
  const auto j = nlohmann::json::parse(report);
  CHECK(j.at("kind") == "revenue-report");
  CHECK(j.at("bidders").size() == 2);
  CHECK(j.at("bidders")[1].at("budget").is_null());
  CHECK(j.at("pairs").size() == 4);
  CHECK(j.at("types")[0].at("lambda").is_number());
  CHECK(j.at("estimate").at("trials") == 50);
  CHECK(j.at("estimate").at("bidders").size() == 2);
  const double sum =
      j.at("estimate").at("bidders")[0].at("revenue_mean").get<double>() +
      j.at("estimate").at("bidders")[1].at("revenue_mean").get<double>();
  CHECK_NEAR(sum, j.at("estimate").at("revenue_mean").get<double>(), 1e-9);

  CHECK_THROWS_WITH(
      load_allocation(R"({"bidders": [], "types": [], "pairs": []})"),
      Contains("nonempty"));
}
