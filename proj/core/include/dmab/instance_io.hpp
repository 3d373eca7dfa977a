#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dmab/budgeted.hpp"
#include "dmab/planner.hpp"
#include "dmab/policy.hpp"
#include "dmab/sim.hpp"
#include "dmab/step_policy.hpp"
#include "dmab/transforms.hpp"
#include "dmab/types.hpp"

namespace dmab {

/// A bandit instance as it appears on disk: the arms and the step horizon.
/// Explicit-DAG priors come back with the DAG attached to the PriorSpec.
struct Instance {
  std::vector<ArmSpec> arms;
  int horizon = 0;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// Instance documents are JSON:
///
///   {"horizon": 8,
///    "arms": [{"id": "a", "prior": {"alpha1": 1, "alpha0": 1},
///              "delay": 0, "budget": 2.0, "bid": 1.0}]}
///
/// A prior is one of {"alpha1", "alpha0"} (Beta), {"weights", "means"}
/// (finite mixture), or {"dag": {"states": [...]}} (explicit posterior DAG).
/// `budget` is omitted for unbudgeted arms.  Explicit DAG states are
///
///   {"id": "r", "mean": 0.5, "edges": [
///       {"outcome": 1, "prob": 0.5, "child": "h"},
///       {"outcome": 0, "prob": 0.5, "child": "t"}]}
///
/// listed root first, each with zero edges (frontier) or one edge per
/// outcome.  The loader checks that the DAG is leveled and reachable, that
/// every state's success count is path-independent and unique within its
/// depth (block executors identify outcomes by success count), orders levels
/// by ascending success count, verifies the martingale identity to 1e-6, and
/// marks the DAG exchangeable when adjacent play transpositions commute.
std::string save_instance(const Instance& inst);
Instance load_instance(const std::string& text);
/// Reads and parses `path`; parse errors are reported as path:line:column.
Instance load_instance_file(const std::string& path);

/// Policy documents serialize the node list verbatim: per node the block
/// state (posterior key, elapsed, mode), the quit weight, and the weighted
/// choices with positional children.  serialize -> parse -> serialize is
/// byte-identical.  Loading resolves posterior keys against `dag` and
/// revalidates the full structure.
std::string save_policy(const SingleArmPolicy& policy);
SingleArmPolicy load_policy(const std::string& text,
                            std::shared_ptr<const OutcomeDag> dag);

/// Step strategies serialize as the table of reachable observations
/// (t, posterior key, pending window) -> action, enumerated by the same
/// forward walk the evaluator uses.  Loading builds a lookup-backed rule.
std::string save_step_policy(const StepPolicy& policy);
StepPolicy load_step_policy(const std::string& text,
                            std::shared_ptr<const OutcomeDag> dag);

/// Solver report: price, objective, plays, duality gap, iteration count and
/// per-arm (reward, plays) shares; when `scaled` is given (the same solution
/// divided down for execution) both objectives appear side by side.
std::string solver_report(const LpSolution& sol,
                          const std::vector<ArmSpec>& arms,
                          const LpSolution* scaled = nullptr);

/// Transform pipeline report: one record per stage with the checked bound,
/// input/output (reward, plays) and the slack of the asserted inequality.
std::string transform_report_text(const std::vector<TransformReport>& reports);

/// Trajectory trace: one JSON record per step, fields in a fixed order
/// (step, arm, action, outcome, reward, disclosed), suitable for diffing.
std::string trace_to_text(const SimTrace& trace);

/// Estimate rows: "instance,policy,trials,mean,stderr,seed".
std::string estimates_csv_header();
std::string estimates_csv_row(const std::string& instance,
                              const std::string& policy, long trials,
                              double mean, double stderr_value,
                              std::uint64_t seed);

/// Allocation documents extend the instance format with bidder and type
/// lists plus the bidder-by-type pair matrix:
///
///   {"bidders": [{"id": "a", "budget": 2.0}],
///    "types": [{"id": "x", "arrivals": 4}],
///    "pairs": [[{"bid": 1.0, "delay": 0, "prior": {...}}]]}
std::string save_allocation(const AllocationInstance& inst);
AllocationInstance load_allocation(const std::string& text);
AllocationInstance load_allocation_file(const std::string& path);

/// Revenue report: planned objective, per-pair shares and shadow budgets,
/// per-bidder totals with reward prices, per-type play prices, planner
/// warnings, and (when given) the executed revenue estimate.
std::string revenue_report(const BudgetedPlan& plan,
                           const AllocationInstance& inst,
                           const BudgetedEstimate* estimate = nullptr);

}  // namespace dmab
