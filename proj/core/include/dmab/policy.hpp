#pragma once

#include <memory>
#include <vector>

#include "dmab/block_kernel.hpp"
#include "dmab/outcome_dag.hpp"

namespace dmab {

/// One randomized choice at a policy node.
///
/// PlayBlock: commit `plays` plays (0 allowed: an idle block), then advance
/// to `children[j]`, where j indexes the landing states of
/// kernel_row(dag, dag_node, plays).outcomes in that order (ascending DAG
/// index; for count-keyed DAGs this is ascending success count).
///
/// Switch: consume no time and no plays; move the node from Regular to
/// NoDelay mode at the same posterior.  `children` holds the single target.
struct PolicyChoice {
  enum class Kind { PlayBlock, Switch };
  Kind kind = Kind::PlayBlock;
  double weight = 0.0;
  int plays = 0;
  std::vector<int> children;
};

struct PolicyNode {
  BlockState state;
  double quit_weight = 0.0;
  std::vector<PolicyChoice> choices;
};

/// A block-structured strategy for a single arm: a rooted DAG of policy
/// nodes (sharing allowed).  Weights at each node (quit + choices) form a
/// probability distribution.  Plays must land inside `horizon` steps; block
/// spans may trail past it (trailing waits make no further decisions).
///
/// `delay_free_c` and `well_structured_alpha` are structure declarations:
/// zero means "not claimed".  A policy declared c-delay-free keeps every
/// Regular block at most ceil(c*delay) plays (validated), with NoDelay tails
/// allowed past the declared switch points.  A policy declared
/// alpha-well-structured additionally went through block grouping; grouping
/// inflates blocks past the c*delay cap, so claiming alpha clears c.
struct SingleArmPolicy {
  std::shared_ptr<const OutcomeDag> dag;
  int delay = 0;
  int horizon = 0;
  std::vector<PolicyNode> nodes;
  int root = 0;
  double delay_free_c = 0.0;
  double well_structured_alpha = 0.0;

  const PolicyNode& at(int i) const { return nodes[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(nodes.size()); }
};

/// Checks structural invariants and throws std::invalid_argument with a
/// description of the first violation:
///  - weights nonnegative, quit + sum(choices) == 1 within kMassTol;
///  - Regular blocks play 0..delay+1, NoDelay blocks 0..1;
///  - any positive-play choice fits: elapsed + plays <= horizon;
///  - children match the kernel landing states positionally, with
///    elapsed advanced by the block span and mode preserved;
///  - Switch only from Regular mode, to the same posterior and elapsed;
///  - declared delay_free_c caps Regular blocks at ceil(c*delay) plays;
///  - the node graph is acyclic (guaranteed by the elapsed/mode ordering).
void validate_policy(const SingleArmPolicy& policy);

/// Node indices sorted so every edge goes forward: ascending (elapsed, mode,
/// dag depth).  Stable for deterministic evaluation order.
std::vector<int> topo_order(const SingleArmPolicy& policy);

/// Incremental construction helper used by generators and tests.
class PolicyBuilder {
 public:
  PolicyBuilder(std::shared_ptr<const OutcomeDag> dag, int delay, int horizon);

  int add_node(int dag_node, int elapsed, BlockMode mode);
  void set_quit(int node, double weight);
  /// Adds a PlayBlock choice; children must already exist.
  void add_block(int node, double weight, int plays, std::vector<int> children);
  void add_switch(int node, double weight, int child);
  void set_root(int node);

  /// Finalizes and validates.  The builder is left empty.
  SingleArmPolicy build();

 private:
  SingleArmPolicy policy_;
};

}  // namespace dmab
