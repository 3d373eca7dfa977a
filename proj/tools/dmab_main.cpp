// dmab: plan, transform, simulate, and audit delayed bandit instances.
//
// Subcommands:
//   solve          price-search the coupled relaxation, write the report
//   simulate       Monte-Carlo the planned and baseline policies to CSV
//   transform      run the per-step -> block rewrite chain on one arm
//   verify         run the invariant property suite (optionally on a file)
//   tight-example  build the two-type family and report LP/OPT ratio
//   budgeted       plan and simulate a budgeted allocation
//
// The default seed comes from DMAB_SEED when set.  Every output is plain
// JSON or CSV on stdout unless an --out path is given.
#include <array>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmab/evaluate.hpp"
#include "dmab/generators.hpp"
#include "dmab/instance_io.hpp"
#include "dmab/outcome_dag.hpp"
#include "dmab/planner.hpp"
#include "dmab/scheduler.hpp"
#include "dmab/sim.hpp"
#include "dmab/transforms.hpp"
#include "dmab/types.hpp"
#include "dmab/verify.hpp"

namespace {

using dmab::kDefaultAlpha;
using dmab::kDefaultC;
using dmab::kDefaultParticipation;
using dmab::kDefaultTrials;
using ordered_json = nlohmann::ordered_json;

struct RunConfig {
  std::string instance_path;
  std::string out_path;          // empty = stdout
  std::string policies_out;      // solve: directory for extracted policies
  std::string policy_path;       // transform: step strategy to load
  std::string policy_out;        // transform: rewritten policy file
  std::string emit_instance;     // tight-example: write the instance here
  std::string trace_path;        // simulate: first-trial trace of first policy
  std::vector<std::string> policies;  // simulate: which policies to run
  double alpha = kDefaultAlpha;
  double c = kDefaultC;
  double gamma = -1.0;           // <0 = derive 2(1+1/alpha)(1+2/alpha)
  double participation = kDefaultParticipation;
  double play_budget = -1.0;     // <0 = horizon
  double tolerance = 1e-9;
  long trials = kDefaultTrials;
  std::uint64_t seed = 0;
  int arm = 0;
  int n = 50;
  int scale = 1;
  int verbosity = 0;
};

void emit(const RunConfig& cfg, const std::string& text) {
  if (cfg.out_path.empty()) {
    std::cout << text;
  } else {
    dmab::write_text_file(cfg.out_path, text);
  }
}

void note(const RunConfig& cfg, const std::string& line) {
  if (cfg.verbosity > 0) std::cerr << line << "\n";
}

double effective_gamma(const RunConfig& cfg) {
  return cfg.gamma > 0 ? cfg.gamma : dmab::composition_gamma(cfg.alpha);
}

dmab::LagrangianConfig lagrangian_config(const RunConfig& cfg) {
  dmab::LagrangianConfig lc;
  lc.tolerance = cfg.tolerance;
  lc.alpha = cfg.alpha;
  lc.c = cfg.c;
  lc.gamma = effective_gamma(cfg);
  return lc;
}

bool any_delayed(const std::vector<dmab::ArmSpec>& arms) {
  for (const auto& a : arms)
    if (a.delay > 0) return true;
  return false;
}

// Plans an instance the way every consumer here expects it: undelayed
// instances solve directly on the play budget; delayed instances solve the
// block relaxation on the gamma-inflated budget and scale the occupancies
// back down for execution.
struct Planned {
  dmab::LpSolution solution;          // as solved
  dmab::LpSolution execution;         // scaled copy when delayed, else same
  bool delayed = false;
  double gamma = 1.0;
};

Planned plan_instance(const dmab::Instance& inst, const RunConfig& cfg) {
  Planned out;
  out.delayed = any_delayed(inst.arms);
  out.gamma = out.delayed ? effective_gamma(cfg) : 1.0;
  const double budget =
      cfg.play_budget > 0 ? cfg.play_budget : static_cast<double>(inst.horizon);
  out.solution = dmab::solve_coupled(inst.arms, inst.horizon,
                                     out.gamma * budget, out.delayed,
                                     lagrangian_config(cfg));
  out.execution =
      out.delayed ? dmab::scale_down(out.solution, out.gamma) : out.solution;
  return out;
}

// ---------------------------------------------------------------------------

int cmd_solve(const RunConfig& cfg) {
  const dmab::Instance inst = dmab::load_instance_file(cfg.instance_path);
  const Planned plan = plan_instance(inst, cfg);
  note(cfg, "solved " + cfg.instance_path + " in " +
                std::to_string(plan.solution.iterations) + " price evaluations");
  emit(cfg, dmab::solver_report(plan.solution, inst.arms,
                                plan.delayed ? &plan.execution : nullptr));
  if (!cfg.policies_out.empty()) {
    std::filesystem::create_directories(cfg.policies_out);
    for (std::size_t i = 0; i < inst.arms.size(); ++i) {
      const dmab::SingleArmPolicy p =
          dmab::extract_randomized(plan.execution, static_cast<int>(i));
      const auto path = std::filesystem::path(cfg.policies_out) /
                        ("policy-" + inst.arms[i].id + ".json");
      dmab::write_text_file(path.string(), dmab::save_policy(p));
      note(cfg, "wrote " + path.string());
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg) {
  if (cfg.trials <= 0) {
    throw std::invalid_argument("trials must be positive (got " +
                                std::to_string(cfg.trials) + ")");
  }
  const dmab::Instance inst = dmab::load_instance_file(cfg.instance_path);
  std::vector<std::string> which = cfg.policies;
  if (which.empty()) which = {"sequential", "combine", "greedy", "explore-exploit"};

  // The planned policies are shared by the sequential and combine runs.
  std::vector<dmab::SingleArmPolicy> planned;
  std::vector<dmab::PolicyValue> values;
  const bool needs_plan =
      std::find(which.begin(), which.end(), "sequential") != which.end() ||
      std::find(which.begin(), which.end(), "combine") != which.end();
  if (needs_plan) {
    const Planned plan = plan_instance(inst, cfg);
    for (std::size_t i = 0; i < inst.arms.size(); ++i) {
      planned.push_back(
          dmab::extract_randomized(plan.execution, static_cast<int>(i)));
      values.push_back(dmab::evaluate(planned.back()));
    }
  }

  std::string csv = dmab::estimates_csv_header();
  bool first = true;
  for (const std::string& name : which) {
    dmab::Estimate est;
    dmab::SimTrace trace;
    dmab::SimTrace* trace_sink =
        (first && !cfg.trace_path.empty()) ? &trace : nullptr;
    if (name == "sequential") {
      const dmab::GlobalPolicy g =
          dmab::round_sequential(planned, values, inst.horizon);
      est = dmab::run_mc(g, inst.arms, cfg.trials, cfg.seed, {}, trace_sink);
    } else if (name == "combine") {
      const dmab::GlobalPolicy g =
          dmab::combine(planned, inst.horizon, cfg.participation);
      est = dmab::run_mc(g, inst.arms, cfg.trials, cfg.seed, {}, trace_sink);
    } else if (name == "greedy") {
      est = dmab::run_baseline_mc(inst.arms, inst.horizon,
                                  dmab::BaselineKind::GreedyPosterior,
                                  cfg.trials, cfg.seed);
    } else if (name == "explore-exploit") {
      est = dmab::run_baseline_mc(inst.arms, inst.horizon,
                                  dmab::BaselineKind::ExploreThenExploit,
                                  cfg.trials, cfg.seed);
    } else {
      throw std::invalid_argument(
          "unknown policy '" + name +
          "' (expected sequential, combine, greedy, or explore-exploit)");
    }
    if (trace_sink) dmab::write_text_file(cfg.trace_path, dmab::trace_to_text(trace));
    csv += dmab::estimates_csv_row(cfg.instance_path, name, cfg.trials,
                                   est.mean, est.std_error, cfg.seed);
    note(cfg, name + ": mean " + std::to_string(est.mean) + " +- " +
                  std::to_string(est.std_error));
    first = false;
  }
  emit(cfg, csv);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_transform(const RunConfig& cfg) {
  const dmab::Instance inst = dmab::load_instance_file(cfg.instance_path);
  if (cfg.arm < 0 || cfg.arm >= static_cast<int>(inst.arms.size())) {
    throw std::invalid_argument("arm index " + std::to_string(cfg.arm) +
                                " out of range (instance has " +
                                std::to_string(inst.arms.size()) + " arms)");
  }
  const dmab::ArmSpec& arm = inst.arms[static_cast<std::size_t>(cfg.arm)];
  if (arm.delay < 1) {
    throw std::invalid_argument(
        "transform needs a delayed arm; arm '" + arm.id + "' has delay 0");
  }
  const int depth = 2 * (inst.horizon + arm.delay) + 1;
  const auto dag = dmab::build_arm_dag(arm, depth);
  dmab::StepPolicy strategy;
  if (!cfg.policy_path.empty()) {
    strategy =
        dmab::load_step_policy(dmab::read_text_file(cfg.policy_path), dag);
  } else {
    note(cfg, "no --policy given; synthesizing a seeded per-step strategy");
    strategy = dmab::random_step_policy(dag, arm.delay, inst.horizon, cfg.seed);
  }
  const dmab::PipelineResult result =
      dmab::transform_pipeline(strategy, cfg.alpha, cfg.c);
  emit(cfg, dmab::transform_report_text(result.reports));
  if (!cfg.policy_out.empty()) {
    dmab::write_text_file(cfg.policy_out, dmab::save_policy(result.policy));
    note(cfg, "wrote " + cfg.policy_out);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_verify(const RunConfig& cfg) {
  dmab::VerifyReport report = dmab::run_verification(cfg.seed, cfg.scale);
  if (!cfg.instance_path.empty()) {
    const dmab::Instance inst = dmab::load_instance_file(cfg.instance_path);
    for (auto& row : dmab::verify_instance(inst)) {
      report.invariants.push_back(std::move(row));
    }
  }
  emit(cfg, dmab::verify_report_text(report));
  for (const auto& r : report.invariants) {
    note(cfg, std::string(r.pass ? "PASS " : "FAIL ") + r.name + " slack " +
                  std::to_string(r.slack) + " over " + std::to_string(r.cases) +
                  " cases");
  }
  return report.all_pass() ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_tight_example(const RunConfig& cfg) {
  const dmab::TightExample tight = dmab::make_tight_example(cfg.n);
  const dmab::LpSolution sol = dmab::solve_coupled(
      tight.arms, tight.horizon, static_cast<double>(tight.horizon), false,
      lagrangian_config(cfg));
  ordered_json doc;
  doc["kind"] = "tight-example";
  doc["n"] = cfg.n;
  doc["horizon"] = tight.horizon;
  doc["lp_objective"] = sol.objective;
  doc["opt_exact"] = tight.opt_exact;
  doc["ratio"] = sol.objective / tight.opt_exact;
  doc["iterations"] = sol.iterations;
  emit(cfg, doc.dump(2) + "\n");
  if (!cfg.emit_instance.empty()) {
    dmab::Instance inst;
    inst.arms = tight.arms;
    inst.horizon = tight.horizon;
    dmab::write_text_file(cfg.emit_instance, dmab::save_instance(inst));
    note(cfg, "wrote " + cfg.emit_instance);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_budgeted(const RunConfig& cfg) {
  const dmab::AllocationInstance inst =
      dmab::load_allocation_file(cfg.instance_path);
  const dmab::BudgetedPlan plan = dmab::plan_budgeted(
      inst, cfg.alpha, cfg.c, cfg.participation, cfg.seed);
  for (const std::string& w : plan.warnings) note(cfg, "warning: " + w);
  if (cfg.trials > 0) {
    const dmab::BudgetedEstimate est =
        dmab::run_budgeted_mc(plan, inst, cfg.trials, cfg.seed);
    emit(cfg, dmab::revenue_report(plan, inst, &est));
  } else {
    emit(cfg, dmab::revenue_report(plan, inst));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed-feedback bandit planner and simulator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  // Each subcommand owns its RunConfig: binding one variable to options on
  // several sibling subcommands is unsound (the library runs option
  // callbacks for unparsed subcommands too, clobbering the parsed values).
  std::array<RunConfig, 6> configs;

  const auto add_common = [](CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--seed", cfg.seed, "RNG seed (env DMAB_SEED)")
        ->envname("DMAB_SEED");
    sub->add_option("--out,-o", cfg.out_path, "Write the report here");
    sub->add_flag("-v,--verbose", cfg.verbosity, "Progress notes on stderr");
  };
  const auto add_structure = [](CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--alpha", cfg.alpha, "Well-structuring parameter")
        ->check(CLI::Range(1e-6, 1.0));
    sub->add_option("--c", cfg.c, "Delay-freeness parameter")
        ->check(CLI::Range(1e-9, 1.0));
    sub->add_option("--gamma", cfg.gamma,
                    "Play-budget inflation (default 2(1+1/alpha)(1+2/alpha))");
  };
  const auto add_planning = [](CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--play-budget", cfg.play_budget,
                    "Coupled play budget (default: the horizon)");
    sub->add_option("--tolerance", cfg.tolerance,
                    "Price-search stopping width")
        ->check(CLI::Range(1e-15, 1e-2));
  };

  RunConfig& solve_cfg = configs[0];
  CLI::App* solve = app.add_subcommand("solve", "Plan an instance");
  solve->add_option("--instance", solve_cfg.instance_path, "Instance file")
      ->required();
  solve->add_option("--policies-out", solve_cfg.policies_out,
                    "Directory for the extracted per-arm policies");
  add_structure(solve, solve_cfg);
  add_planning(solve, solve_cfg);
  add_common(solve, solve_cfg);

  RunConfig& sim_cfg = configs[1];
  CLI::App* simulate = app.add_subcommand("simulate", "Estimate policy values");
  simulate->add_option("--instance", sim_cfg.instance_path, "Instance file")
      ->required();
  simulate->add_option("--trials", sim_cfg.trials, "Monte-Carlo trials");
  simulate->add_option("--participation", sim_cfg.participation,
                       "Combine participation probability")
      ->check(CLI::Range(0.0, 1.0));
  simulate
      ->add_option("--policy", sim_cfg.policies,
                   "sequential | combine | greedy | explore-exploit "
                   "(default: all)")
      ->delimiter(',');
  simulate->add_option("--trace", sim_cfg.trace_path,
                       "Write the first trial's trace of the first policy");
  add_structure(simulate, sim_cfg);
  add_planning(simulate, sim_cfg);
  add_common(simulate, sim_cfg);

  RunConfig& tr_cfg = configs[2];
  CLI::App* transform =
      app.add_subcommand("transform", "Rewrite a per-step strategy");
  transform->add_option("--instance", tr_cfg.instance_path, "Instance file")
      ->required();
  transform->add_option("--arm", tr_cfg.arm, "Arm index (default 0)");
  transform->add_option("--policy", tr_cfg.policy_path,
                        "Step strategy file (default: synthesized)");
  transform->add_option("--policy-out", tr_cfg.policy_out,
                        "Write the rewritten block policy here");
  add_structure(transform, tr_cfg);
  add_common(transform, tr_cfg);

  RunConfig& ver_cfg = configs[3];
  CLI::App* verify = app.add_subcommand("verify", "Run the invariant suite");
  verify->add_option("--instance", ver_cfg.instance_path,
                     "Also audit this instance file");
  verify->add_option("--scale", ver_cfg.scale, "Case-count multiplier")
      ->check(CLI::Range(1, 1000));
  add_common(verify, ver_cfg);

  RunConfig& tight_cfg = configs[4];
  CLI::App* tight =
      app.add_subcommand("tight-example", "Relaxation-gap family");
  tight->add_option("-n,--arms", tight_cfg.n, "Number of arms")
      ->check(CLI::Range(2, 100000));
  tight->add_option("--emit-instance", tight_cfg.emit_instance,
                    "Also write the instance file here");
  add_planning(tight, tight_cfg);
  add_common(tight, tight_cfg);

  RunConfig& bud_cfg = configs[5];
  CLI::App* budgeted =
      app.add_subcommand("budgeted", "Plan a budgeted allocation");
  budgeted->add_option("--allocation", bud_cfg.instance_path, "Allocation file")
      ->required();
  budgeted->add_option("--trials", bud_cfg.trials,
                       "Monte-Carlo trials (0 = plan only)");
  budgeted->add_option("--participation", bud_cfg.participation,
                       "Combine participation probability")
      ->check(CLI::Range(0.0, 1.0));
  add_structure(budgeted, bud_cfg);
  add_common(budgeted, bud_cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(solve_cfg);
    if (simulate->parsed()) return cmd_simulate(sim_cfg);
    if (transform->parsed()) return cmd_transform(tr_cfg);
    if (verify->parsed()) return cmd_verify(ver_cfg);
    if (tight->parsed()) return cmd_tight_example(tight_cfg);
    if (budgeted->parsed()) return cmd_budgeted(bud_cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
