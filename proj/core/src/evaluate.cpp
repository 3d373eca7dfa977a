#include "dmab/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

#include "dmab/block_kernel.hpp"

namespace dmab {
namespace {

EvalDetail propagate(const SingleArmPolicy& policy, bool conditional, double mu) {
  const OutcomeDag& dag = *policy.dag;
  EvalDetail out;
  out.reach.assign(static_cast<std::size_t>(policy.size()), 0.0);
  out.reach[static_cast<std::size_t>(policy.root)] = 1.0;

  std::map<int, double> stop_mass;  // dag node -> mass
  for (int i : topo_order(policy)) {
    const double reach = out.reach[static_cast<std::size_t>(i)];
    if (reach <= 0.0) continue;
    const PolicyNode& n = policy.at(i);
    if (n.quit_weight > 0.0) {
      stop_mass[n.state.dag_node] += reach * n.quit_weight;
    }
    for (const PolicyChoice& c : n.choices) {
      if (c.weight <= 0.0) continue;
      const double m = reach * c.weight;
      if (c.kind == PolicyChoice::Kind::Switch) {
        out.reach[static_cast<std::size_t>(c.children.front())] += m;
        continue;
      }
      const KernelRow row =
          conditional ? kernel_row_given_mean(dag, n.state.dag_node, c.plays, mu)
                      : kernel_row(dag, n.state.dag_node, c.plays);
      out.value.reward += m * row.expected_reward;
      out.value.plays += m * c.plays;
      for (std::size_t j = 0; j < c.children.size(); ++j) {
        out.reach[static_cast<std::size_t>(c.children[j])] +=
            m * row.outcomes[j].prob;
      }
    }
  }
  out.stops.reserve(stop_mass.size());
  for (const auto& [v, m] : stop_mass) {
    out.stops.push_back({v, dag.at(v).depth, m});
  }
  return out;
}

}  // namespace

PolicyValue evaluate(const SingleArmPolicy& policy) {
  return propagate(policy, false, 0.0).value;
}

PolicyValue evaluate_given_mean(const SingleArmPolicy& policy, double mu) {
  return propagate(policy, true, mu).value;
}

EvalDetail evaluate_detailed(const SingleArmPolicy& policy) {
  return propagate(policy, false, 0.0);
}

ConditionalValue evaluate_conditional(const SingleArmPolicy& policy, double mu) {
  EvalDetail d = propagate(policy, true, mu);
  const int root_depth =
      policy.dag->at(policy.at(policy.root).state.dag_node).depth;
  ConditionalValue cv;
  cv.true_mean = mu;
  cv.reward_given_mean = d.value.reward;
  cv.path_length = d.value.plays;
  cv.stop_distribution = std::move(d.stops);
  for (StopAtom& a : cv.stop_distribution) a.plays -= root_depth;
  return cv;
}

double claim1_gap(const ConditionalValue& cv, double bid) {
  double recomposed = 0.0;
  for (const StopAtom& a : cv.stop_distribution) {
    recomposed += cv.true_mean * bid * a.mass * static_cast<double>(a.plays);
  }
  return std::abs(cv.reward_given_mean - recomposed);
}

double stop_reward_gap(const SingleArmPolicy& policy, double bid, double budget) {
  if (bid <= 0.0) throw std::invalid_argument("stop_reward_gap: bid must be positive");
  const long paying = std::isinf(budget)
                          ? std::numeric_limits<long>::max()
                          : static_cast<long>(std::ceil(budget / bid - 1e-12));
  const EvalDetail d = evaluate_detailed(policy);
  double collected = 0.0;
  for (const StopAtom& a : d.stops) {
    const long s = policy.dag->at(a.dag_node).successes;
    collected += a.mass * bid * static_cast<double>(std::min(s, paying));
  }
  return std::abs(d.value.reward - collected);
}

int max_path_plays(const SingleArmPolicy& policy) {
  std::vector<int> order = topo_order(policy);
  std::vector<int> longest(static_cast<std::size_t>(policy.size()), 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const PolicyNode& n = policy.at(*it);
    int best = 0;
    for (const PolicyChoice& c : n.choices) {
      if (c.weight <= 0.0) continue;
      int below = 0;
      for (int ch : c.children) {
        below = std::max(below, longest[static_cast<std::size_t>(ch)]);
      }
      best = std::max(best, c.plays + below);
    }
    longest[static_cast<std::size_t>(*it)] = best;
  }
  return longest[static_cast<std::size_t>(policy.root)];
}

SingleArmPolicy cap_plays(const SingleArmPolicy& policy, int cap) {
  if (cap < 0) throw std::invalid_argument("cap_plays: negative cap");
  const OutcomeDag& dag = *policy.dag;
  const int root_depth = dag.at(policy.at(policy.root).state.dag_node).depth;

  SingleArmPolicy out;
  out.dag = policy.dag;
  out.delay = policy.delay;
  out.horizon = policy.horizon;
  // Shrinking blocks keeps any declared per-block play cap valid, but breaks
  // the block-grouping shape a well-structured declaration promises.
  out.delay_free_c = policy.delay_free_c;
  out.well_structured_alpha = 0.0;

  std::vector<int> rewritten(static_cast<std::size_t>(policy.size()), -1);
  std::map<std::tuple<int, int, int>, int> quit_nodes;

  auto make_quit = [&](int dag_node, int elapsed, BlockMode mode) {
    const auto key = std::make_tuple(dag_node, elapsed, static_cast<int>(mode));
    auto it = quit_nodes.find(key);
    if (it != quit_nodes.end()) return it->second;
    PolicyNode q;
    q.state = {dag_node, elapsed, mode};
    q.quit_weight = 1.0;
    out.nodes.push_back(std::move(q));
    const int id = out.size() - 1;
    quit_nodes.emplace(key, id);
    return id;
  };

  // Children precede parents in reverse topological order, so each node can
  // be rewritten in one pass.
  std::vector<int> order = topo_order(policy);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int i = *it;
    const PolicyNode& n = policy.at(i);
    const int made = dag.at(n.state.dag_node).depth - root_depth;
    const int remaining = cap - made;

    if (remaining <= 0) {
      rewritten[static_cast<std::size_t>(i)] =
          make_quit(n.state.dag_node, n.state.elapsed, n.state.mode);
      continue;
    }

    PolicyNode copy;
    copy.state = n.state;
    copy.quit_weight = n.quit_weight;
    for (const PolicyChoice& c : n.choices) {
      PolicyChoice nc = c;
      if (c.kind == PolicyChoice::Kind::PlayBlock && c.plays > remaining) {
        nc.plays = remaining;
        nc.children.clear();
        const int span = block_span(n.state.mode, policy.delay);
        for (const BlockOutcome& o :
             kernel_row(dag, n.state.dag_node, nc.plays).outcomes) {
          nc.children.push_back(
              make_quit(o.node, n.state.elapsed + span, n.state.mode));
        }
      } else {
        for (int& ch : nc.children) {
          ch = rewritten[static_cast<std::size_t>(ch)];
        }
      }
      copy.choices.push_back(std::move(nc));
    }
    out.nodes.push_back(std::move(copy));
    rewritten[static_cast<std::size_t>(i)] = out.size() - 1;
  }
  out.root = rewritten[static_cast<std::size_t>(policy.root)];
  validate_policy(out);
  return out;
}

TruncationResult truncate_plays(const SingleArmPolicy& policy, double beta) {
  if (!(beta > 0.0) || beta > 1.0) {
    throw std::invalid_argument("truncate_plays: beta must lie in (0, 1]");
  }
  const int bound = max_path_plays(policy);
  int cap = 0;
  if (bound > 0) {
    cap = std::max(1, static_cast<int>(std::ceil(beta * bound - 1e-12)));
  }
  return {cap_plays(policy, cap), cap};
}

}  // namespace dmab
