#include "dmab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dmab/block_kernel.hpp"

namespace dmab {
namespace {

std::string describe(const SingleArmPolicy& p, int i) {
  const PolicyNode& n = p.at(i);
  return "node " + std::to_string(i) + " (" + p.dag->at(n.state.dag_node).key +
         ", elapsed " + std::to_string(n.state.elapsed) +
         (n.state.mode == BlockMode::Regular ? ", regular)" : ", no-delay)");
}

[[noreturn]] void fail(const SingleArmPolicy& p, int i, const std::string& what) {
  throw std::invalid_argument("policy: " + describe(p, i) + ": " + what);
}

}  // namespace

void validate_policy(const SingleArmPolicy& policy) {
  if (!policy.dag) throw std::invalid_argument("policy: missing outcome DAG");
  if (policy.delay < 0) throw std::invalid_argument("policy: negative delay");
  if (policy.horizon < 0) throw std::invalid_argument("policy: negative horizon");
  if (policy.nodes.empty()) throw std::invalid_argument("policy: no nodes");
  if (policy.root < 0 || policy.root >= policy.size()) {
    throw std::invalid_argument("policy: root index out of range");
  }
  if (policy.delay_free_c < 0.0 || policy.well_structured_alpha < 0.0) {
    throw std::invalid_argument("policy: negative structure declaration");
  }
  if (policy.delay_free_c > 0.0 && policy.well_structured_alpha > 0.0) {
    throw std::invalid_argument(
        "policy: well-structured grouping inflates blocks past the c*delay cap; "
        "declare at most one of delay_free_c / well_structured_alpha");
  }
  const int regular_cap = policy.delay_free_c > 0.0
                              ? ceil_int(policy.delay_free_c * policy.delay)
                              : policy.delay + 1;

  const OutcomeDag& dag = *policy.dag;
  for (int i = 0; i < policy.size(); ++i) {
    const PolicyNode& n = policy.at(i);
    if (n.state.dag_node < 0 || n.state.dag_node >= dag.size()) {
      fail(policy, i, "DAG node out of range");
    }
    if (n.state.elapsed < 0) fail(policy, i, "negative elapsed");

    double total = n.quit_weight;
    if (n.quit_weight < 0.0) fail(policy, i, "negative quit weight");
    for (const PolicyChoice& c : n.choices) {
      if (c.weight < 0.0) fail(policy, i, "negative choice weight");
      total += c.weight;

      if (c.kind == PolicyChoice::Kind::Switch) {
        if (n.state.mode != BlockMode::Regular) {
          fail(policy, i, "switch from no-delay mode");
        }
        if (c.plays != 0) fail(policy, i, "switch with plays");
        if (c.children.size() != 1) fail(policy, i, "switch needs one child");
        const int ch = c.children.front();
        if (ch < 0 || ch >= policy.size()) fail(policy, i, "child out of range");
        const BlockState& cs = policy.at(ch).state;
        if (cs.dag_node != n.state.dag_node || cs.elapsed != n.state.elapsed ||
            cs.mode != BlockMode::NoDelay) {
          fail(policy, i, "switch child must keep posterior and elapsed, mode no-delay");
        }
        continue;
      }

      const int max_plays = n.state.mode == BlockMode::Regular
                                ? std::min(policy.delay + 1, regular_cap)
                                : 1;
      if (c.plays < 0 || c.plays > max_plays) {
        fail(policy, i, "block of " + std::to_string(c.plays) + " plays exceeds mode limit " +
                            std::to_string(max_plays));
      }
      if (c.plays > 0 && n.state.elapsed + c.plays > policy.horizon) {
        fail(policy, i, "plays run past horizon " + std::to_string(policy.horizon));
      }
      const KernelRow row = kernel_row(dag, n.state.dag_node, c.plays);
      if (c.children.size() != row.outcomes.size()) {
        fail(policy, i, "block of " + std::to_string(c.plays) + " plays needs " +
                            std::to_string(row.outcomes.size()) + " children, has " +
                            std::to_string(c.children.size()));
      }
      const int span = block_span(n.state.mode, policy.delay);
      for (std::size_t j = 0; j < c.children.size(); ++j) {
        const int ch = c.children[j];
        if (ch < 0 || ch >= policy.size()) fail(policy, i, "child out of range");
        const BlockState& cs = policy.at(ch).state;
        if (cs.dag_node != row.outcomes[j].node) {
          fail(policy, i, "child posterior mismatch at outcome " + std::to_string(j));
        }
        if (cs.elapsed != n.state.elapsed + span) {
          fail(policy, i, "child elapsed must advance by the block span");
        }
        if (cs.mode != n.state.mode) fail(policy, i, "child mode mismatch");
      }
    }
    if (std::abs(total - 1.0) > kMassTol) {
      fail(policy, i, "weights sum to " + std::to_string(total));
    }
  }
}

std::vector<int> topo_order(const SingleArmPolicy& policy) {
  std::vector<int> order(static_cast<std::size_t>(policy.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const BlockState& sa = policy.at(a).state;
    const BlockState& sb = policy.at(b).state;
    if (sa.elapsed != sb.elapsed) return sa.elapsed < sb.elapsed;
    if (sa.mode != sb.mode) return sa.mode == BlockMode::Regular;
    return policy.dag->at(sa.dag_node).depth < policy.dag->at(sb.dag_node).depth;
  });
  return order;
}

PolicyBuilder::PolicyBuilder(std::shared_ptr<const OutcomeDag> dag, int delay,
                             int horizon) {
  policy_.dag = std::move(dag);
  policy_.delay = delay;
  policy_.horizon = horizon;
}

int PolicyBuilder::add_node(int dag_node, int elapsed, BlockMode mode) {
  PolicyNode n;
  n.state = {dag_node, elapsed, mode};
  policy_.nodes.push_back(std::move(n));
  return policy_.size() - 1;
}

void PolicyBuilder::set_quit(int node, double weight) {
  policy_.nodes[static_cast<std::size_t>(node)].quit_weight = weight;
}

void PolicyBuilder::add_block(int node, double weight, int plays,
                              std::vector<int> children) {
  PolicyChoice c;
  c.kind = PolicyChoice::Kind::PlayBlock;
  c.weight = weight;
  c.plays = plays;
  c.children = std::move(children);
  policy_.nodes[static_cast<std::size_t>(node)].choices.push_back(std::move(c));
}

void PolicyBuilder::add_switch(int node, double weight, int child) {
  PolicyChoice c;
  c.kind = PolicyChoice::Kind::Switch;
  c.weight = weight;
  c.children = {child};
  policy_.nodes[static_cast<std::size_t>(node)].choices.push_back(std::move(c));
}

void PolicyBuilder::set_root(int node) { policy_.root = node; }

SingleArmPolicy PolicyBuilder::build() {
  validate_policy(policy_);
  SingleArmPolicy out = std::move(policy_);
  policy_ = SingleArmPolicy{};
  return out;
}

}  // namespace dmab
