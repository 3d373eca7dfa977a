#include "dmab/planner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace dmab {
namespace {

enum class DpKind { Quit, Play, SwitchMode };

struct DpEntry {
  double value = 0.0;
  DpKind kind = DpKind::Quit;
  int plays = 0;
};

// Backward induction over the per-arm block-state space under a play-price.
class ArmDp {
 public:
  ArmDp(std::shared_ptr<const OutcomeDag> dag, int delay, double lambda,
        int horizon, bool delayed, double alpha, double c)
      : dag_ptr_(std::move(dag)),
        dag_(*dag_ptr_),
        delay_(delay),
        lambda_(lambda),
        horizon_(horizon),
        delayed_(delayed) {
    const bool blocked = delayed_ && delay_ >= 1;
    play_horizon_ = blocked ? horizon_ / 2 : horizon_;
    span_ = blocked ? 2 * delay_ + 1 : 1;
    reg_cap_ = blocked ? ceil_int(alpha * static_cast<double>(horizon_) /
                                  static_cast<double>(delay_))
                       : 0;
    reg_plays_ = blocked ? ceil_int(c * delay_) : 0;
    allow_wait_ = delayed_;
  }

  ArmDpResult solve() {
    ArmDpResult result;
    SingleArmPolicy policy;
    policy.dag = dag_ptr_;
    const bool blocked = delayed_ && delay_ >= 1;
    policy.delay = blocked ? delay_ : 0;
    policy.horizon = play_horizon_;
    out_ = &policy;
    if (blocked) {
      reg_value(0);
      policy.root = reg_node(dag_.root, 0);
    } else {
      nd_value(dag_.root, 0);
      policy.root = nd_node(dag_.root, 0);
    }
    validate_policy(policy);
    result.value = evaluate(policy);
    const double replayed = result.value.reward - lambda_ * result.value.plays;
    const double computed = blocked ? reg_value(0).value
                                    : nd_value(dag_.root, 0).value;
    if (std::abs(replayed - computed) > 1e-9) {
      throw std::logic_error("arm DP: extracted policy disagrees with value");
    }
    result.policy = std::move(policy);
    return result;
  }

 private:
  // Regular-phase value at (posterior u implicit in the key, k blocks used).
  // Candidates in preference order: quit, fewer plays, then switch.
  const DpEntry& reg_value_at(int u, int k) {
    const auto key = std::make_pair(u, k);
    auto it = reg_memo_.find(key);
    if (it != reg_memo_.end()) return it->second;
    const int elapsed = k * span_;
    DpEntry best;  // quit, value 0
    if (k < reg_cap_) {
      const int l_max = std::min(reg_plays_, play_horizon_ - elapsed);
      for (int l = allow_wait_ ? 0 : 1; l <= l_max; ++l) {
        const KernelRow row = kernel_row(dag_, u, l);
        double v = row.expected_reward - lambda_ * l;
        for (const BlockOutcome& o : row.outcomes) {
          v += o.prob * reg_value_at(o.node, k + 1).value;
        }
        if (v > best.value) best = {v, DpKind::Play, l};
      }
    }
    const double switch_v = nd_value(u, elapsed).value;
    if (switch_v > best.value) best = {switch_v, DpKind::SwitchMode, 0};
    return reg_memo_.emplace(key, best).first->second;
  }

  const DpEntry& reg_value(int k) { return reg_value_at(dag_.root, k); }

  const DpEntry& nd_value(int u, int e) {
    const auto key = std::make_pair(u, e);
    auto it = nd_memo_.find(key);
    if (it != nd_memo_.end()) return it->second;
    DpEntry best;  // quit
    if (e < play_horizon_) {
      if (allow_wait_) {
        const double v = nd_value(u, e + 1).value;
        if (v > best.value) best = {v, DpKind::Play, 0};
      }
      const KernelRow row = kernel_row(dag_, u, 1);
      double v = row.expected_reward - lambda_;
      for (const BlockOutcome& o : row.outcomes) {
        v += o.prob * nd_value(o.node, e + 1).value;
      }
      if (v > best.value) best = {v, DpKind::Play, 1};
    }
    return nd_memo_.emplace(key, best).first->second;
  }

  int add_node(int u, int e, BlockMode mode, double quit) {
    PolicyNode n;
    n.state = {u, e, mode};
    n.quit_weight = quit;
    out_->nodes.push_back(std::move(n));
    return out_->size() - 1;
  }

  int reg_node(int u, int k) {
    const auto key = std::make_pair(u, k);
    auto it = reg_nodes_.find(key);
    if (it != reg_nodes_.end()) return it->second;
    const DpEntry& entry = reg_value_at(u, k);
    const int elapsed = k * span_;
    int id;
    if (entry.kind == DpKind::Quit) {
      id = add_node(u, elapsed, BlockMode::Regular, 1.0);
    } else if (entry.kind == DpKind::SwitchMode) {
      id = add_node(u, elapsed, BlockMode::Regular, 0.0);
      reg_nodes_.emplace(key, id);  // pre-register: children cannot recurse here
      PolicyChoice c;
      c.kind = PolicyChoice::Kind::Switch;
      c.weight = 1.0;
      c.children = {nd_node(u, elapsed)};
      out_->nodes[static_cast<std::size_t>(id)].choices.push_back(std::move(c));
      return id;
    } else {
      id = add_node(u, elapsed, BlockMode::Regular, 0.0);
      reg_nodes_.emplace(key, id);
      PolicyChoice c;
      c.weight = 1.0;
      c.plays = entry.plays;
      for (const BlockOutcome& o : kernel_row(dag_, u, entry.plays).outcomes) {
        c.children.push_back(reg_node(o.node, k + 1));
      }
      out_->nodes[static_cast<std::size_t>(id)].choices.push_back(std::move(c));
      return id;
    }
    reg_nodes_.emplace(key, id);
    return id;
  }

  int nd_node(int u, int e) {
    const auto key = std::make_pair(u, e);
    auto it = nd_nodes_.find(key);
    if (it != nd_nodes_.end()) return it->second;
    const DpEntry& entry = nd_value(u, e);
    int id;
    if (entry.kind == DpKind::Quit) {
      id = add_node(u, e, BlockMode::NoDelay, 1.0);
    } else {
      id = add_node(u, e, BlockMode::NoDelay, 0.0);
      nd_nodes_.emplace(key, id);
      PolicyChoice c;
      c.weight = 1.0;
      c.plays = entry.plays;
      if (entry.plays == 0) {
        c.children = {nd_node(u, e + 1)};
      } else {
        for (const BlockOutcome& o : kernel_row(dag_, u, 1).outcomes) {
          c.children.push_back(nd_node(o.node, e + 1));
        }
      }
      out_->nodes[static_cast<std::size_t>(id)].choices.push_back(std::move(c));
      return id;
    }
    nd_nodes_.emplace(key, id);
    return id;
  }

  std::shared_ptr<const OutcomeDag> dag_ptr_;
  const OutcomeDag& dag_;
  int delay_ = 0;
  double lambda_ = 0.0;
  int horizon_ = 0;
  bool delayed_ = false;
  int play_horizon_ = 0;
  int span_ = 1;
  int reg_cap_ = 0;
  int reg_plays_ = 0;
  bool allow_wait_ = false;
  SingleArmPolicy* out_ = nullptr;
  std::map<std::pair<int, int>, DpEntry> reg_memo_;
  std::map<std::pair<int, int>, DpEntry> nd_memo_;
  std::map<std::pair<int, int>, int> reg_nodes_;
  std::map<std::pair<int, int>, int> nd_nodes_;
};

using StateKey = std::tuple<int, int, int>;  // (dag node, elapsed, mode)

StateKey key_of(const BlockState& s) {
  return {s.dag_node, s.elapsed, static_cast<int>(s.mode)};
}

int state_index(ArmOccupancy& occ, std::map<StateKey, int>& index,
                const BlockState& s) {
  const StateKey key = key_of(s);
  auto it = index.find(key);
  if (it != index.end()) return it->second;
  occ.states.push_back(s);
  occ.x.push_back(0.0);
  occ.y.emplace_back();
  occ.z.push_back(0.0);
  const int id = static_cast<int>(occ.states.size()) - 1;
  index.emplace(key, id);
  return id;
}

// Folds one deterministic (or randomized) policy, weighted, into an arm's
// occupancy view by forward mass propagation.
void accumulate_occupancy(const SingleArmPolicy& policy, double weight,
                          ArmOccupancy& occ, std::map<StateKey, int>& index) {
  if (weight <= 0.0) return;
  const OutcomeDag& dag = *policy.dag;
  std::vector<double> mass(static_cast<std::size_t>(policy.size()), 0.0);
  mass[static_cast<std::size_t>(policy.root)] = weight;
  for (int i : topo_order(policy)) {
    const double m = mass[static_cast<std::size_t>(i)];
    if (m <= 0.0) continue;
    const PolicyNode& n = policy.at(i);
    const int s = state_index(occ, index, n.state);
    occ.x[static_cast<std::size_t>(s)] += m;
    for (const PolicyChoice& c : n.choices) {
      const double cm = m * c.weight;
      if (cm <= 0.0) continue;
      if (c.kind == PolicyChoice::Kind::Switch) {
        occ.z[static_cast<std::size_t>(s)] += cm;
        mass[static_cast<std::size_t>(c.children.front())] += cm;
        continue;
      }
      occ.y[static_cast<std::size_t>(s)][c.plays] += cm;
      const KernelRow row = kernel_row(dag, n.state.dag_node, c.plays);
      occ.reward += cm * row.expected_reward;
      occ.plays += cm * c.plays;
      for (std::size_t j = 0; j < row.outcomes.size(); ++j) {
        mass[static_cast<std::size_t>(c.children[j])] +=
            cm * row.outcomes[j].prob;
      }
    }
  }
}

struct PriceEval {
  double lambda = 0.0;
  double total_reward = 0.0;
  double total_plays = 0.0;
  double total_value = 0.0;
  std::vector<ArmDpResult> arms;
};

}  // namespace

double composition_gamma(double alpha) {
  return 2.0 * (1.0 + 1.0 / alpha) * (1.0 + 2.0 / alpha);
}

ArmDpResult solve_arm_dp(std::shared_ptr<const OutcomeDag> dag, int delay,
                         double lambda, int horizon, bool delayed, double alpha,
                         double c) {
  if (!dag) throw std::invalid_argument("arm DP: missing DAG");
  if (lambda < 0.0) throw std::invalid_argument("arm DP: negative play-price");
  if (horizon < 0) throw std::invalid_argument("arm DP: negative horizon");
  if (delay < 0) throw std::invalid_argument("arm DP: negative delay");
  return ArmDp(std::move(dag), delay, lambda, horizon, delayed, alpha, c).solve();
}

LpSolution solve_coupled(const std::vector<ArmSpec>& arms, int horizon,
                         double budget, bool delayed,
                         const LagrangianConfig& config) {
  if (arms.empty()) throw std::invalid_argument("coupled solve: no arms");
  if (!(budget > 0.0)) {
    throw std::invalid_argument("coupled solve: budget must be positive");
  }
  if (horizon < 0) throw std::invalid_argument("coupled solve: negative horizon");
  if (std::abs(config.gamma - composition_gamma(config.alpha)) > 1e-6) {
    throw std::invalid_argument(
        "coupled solve: gamma inconsistent with 2(1+1/alpha)(1+2/alpha)");
  }

  std::vector<std::shared_ptr<const OutcomeDag>> dags;
  dags.reserve(arms.size());
  double max_bid = 0.0;
  for (const ArmSpec& arm : arms) {
    dags.push_back(build_arm_dag(arm, horizon));
    max_bid = std::max(max_bid, arm.bid);
  }

  // Identical arm specs share one DP solve per price (and one DAG), so a
  // fleet of equal arms costs the same as a single one.
  std::vector<std::size_t> rep(arms.size());
  {
    auto same_spec = [](const ArmSpec& a, const ArmSpec& b) {
      if (a.delay != b.delay || a.bid != b.bid || a.budget != b.budget)
        return false;  // note inf == inf holds, so unbudgeted pairs match
      const PriorSpec& p = a.prior;
      const PriorSpec& q = b.prior;
      if (p.kind != q.kind) return false;
      switch (p.kind) {
        case PriorSpec::Kind::Beta:
          return p.alpha1 == q.alpha1 && p.alpha0 == q.alpha0;
        case PriorSpec::Kind::Mixture:
          return p.weights == q.weights && p.means == q.means;
        case PriorSpec::Kind::ExplicitDag:
          return p.dag == q.dag;
      }
      return false;
    };
    for (std::size_t i = 0; i < arms.size(); ++i) {
      rep[i] = i;
      for (std::size_t j = 0; j < i; ++j) {
        if (rep[j] == j && same_spec(arms[i], arms[j])) {
          rep[i] = j;
          break;
        }
      }
      if (rep[i] != i) dags[i] = dags[rep[i]];
    }
  }

  auto eval_price = [&](double lambda) {
    PriceEval ev;
    ev.lambda = lambda;
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (rep[i] == i) {
        ev.arms.push_back(solve_arm_dp(dags[i], arms[i].delay, lambda, horizon,
                                       delayed, config.alpha, config.c));
      } else {
        ev.arms.push_back(ev.arms[rep[i]]);
      }
      ev.total_reward += ev.arms.back().value.reward;
      ev.total_plays += ev.arms.back().value.plays;
    }
    ev.total_value = ev.total_reward - lambda * ev.total_plays;
    return ev;
  };

  std::vector<PriceEval> trace;
  const double lambda_top = config.lambda_hi < 0.0 ? max_bid : config.lambda_hi;
  const double width_stop = std::max(config.tolerance * std::max(lambda_top, 1e-30),
                                     1e-15);

  PriceEval low = eval_price(config.lambda_lo);
  trace.push_back(low);
  PriceEval high;
  if (low.total_plays <= budget + 1e-12) {
    high = low;  // the unconstrained optimum is already feasible
  } else {
    high = eval_price(lambda_top);
    trace.push_back(high);
    if (high.total_plays > budget + 1e-12) {
      throw std::logic_error(
          "coupled solve: plays remain above budget at the top price");
    }
    while (high.lambda - low.lambda > width_stop) {
      const double mid = 0.5 * (low.lambda + high.lambda);
      PriceEval ev = eval_price(mid);
      trace.push_back(ev);
      if (ev.total_plays <= budget + 1e-12) {
        high = std::move(ev);
      } else {
        low = std::move(ev);
      }
    }
  }

  // Per-arm play counts must fall as the price rises.
  std::sort(trace.begin(), trace.end(),
            [](const PriceEval& a, const PriceEval& b) {
              return a.lambda < b.lambda;
            });
  for (std::size_t t = 1; t < trace.size(); ++t) {
    if (std::abs(trace[t].lambda - trace[t - 1].lambda) < 1e-18) continue;
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (trace[t].arms[i].value.plays >
          trace[t - 1].arms[i].value.plays + 1e-9) {
        throw std::logic_error(
            "coupled solve: per-arm plays increased with the play-price");
      }
    }
  }

  double w_high = 1.0;
  if (high.total_plays < budget - 1e-12 &&
      low.total_plays > budget + 1e-12) {
    w_high = (low.total_plays - budget) / (low.total_plays - high.total_plays);
  }

  LpSolution sol;
  sol.lambda = high.lambda;
  sol.budget = budget;
  sol.mix_high_weight = w_high;
  sol.iterations = static_cast<int>(trace.size());
  sol.dual_upper = high.total_value + high.lambda * budget;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    ArmOccupancy occ;
    occ.arm = static_cast<int>(i);
    occ.dag = dags[i];
    occ.delay = high.arms[i].policy.delay;
    occ.horizon = high.arms[i].policy.horizon;
    std::map<StateKey, int> index;
    const BlockState root_state = high.arms[i].policy.at(high.arms[i].policy.root).state;
    occ.root_state = state_index(occ, index, root_state);
    accumulate_occupancy(high.arms[i].policy, w_high, occ, index);
    accumulate_occupancy(low.arms[i].policy, 1.0 - w_high, occ, index);
    sol.objective += occ.reward;
    sol.expected_plays += occ.plays;
    sol.arms.push_back(std::move(occ));
    sol.low_policies.push_back(low.arms[i].policy);
    sol.high_policies.push_back(high.arms[i].policy);
  }

  if (sol.expected_plays > budget + kSolveTol) {
    throw std::logic_error("coupled solve: mixed plays exceed the budget");
  }
  if (sol.dual_upper < sol.objective - kSolveTol) {
    throw std::logic_error("coupled solve: duality sandwich inverted");
  }
  return sol;
}

void validate_lp_solution(const LpSolution& sol) {
  auto fail = [](const std::string& what) { throw std::logic_error("occupancies: " + what); };
  double total_plays = 0.0;
  for (const ArmOccupancy& occ : sol.arms) {
    const OutcomeDag& dag = *occ.dag;
    const std::size_t n = occ.states.size();
    if (occ.x.size() != n || occ.y.size() != n || occ.z.size() != n) {
      fail("ragged arrays");
    }
    std::map<std::pair<int, int>, double> level_mass;
    std::vector<double> inflow(n, 0.0);
    std::map<StateKey, int> index;
    for (std::size_t s = 0; s < n; ++s) {
      index.emplace(key_of(occ.states[s]), static_cast<int>(s));
    }
    double reward = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (occ.x[s] < -kMassTol) fail("negative x");
      level_mass[{occ.states[s].elapsed,
                  static_cast<int>(occ.states[s].mode)}] += occ.x[s];
      double committed = occ.z[s];
      if (occ.z[s] < -kMassTol) fail("negative z");
      if (occ.z[s] > 0.0) {
        BlockState t = occ.states[s];
        if (t.mode != BlockMode::Regular) fail("switch mass on a no-delay state");
        t.mode = BlockMode::NoDelay;
        auto it = index.find(key_of(t));
        if (it == index.end()) fail("switch target state missing");
        inflow[static_cast<std::size_t>(it->second)] += occ.z[s];
      }
      const int span = block_span(occ.states[s].mode, occ.delay);
      for (const auto& [plays, m] : occ.y[s]) {
        if (m < -kMassTol) fail("negative y");
        committed += m;
        total_plays += m * plays;
        const KernelRow row = kernel_row(dag, occ.states[s].dag_node, plays);
        reward += m * row.expected_reward;
        for (const BlockOutcome& o : row.outcomes) {
          BlockState t{o.node, occ.states[s].elapsed + span,
                       occ.states[s].mode};
          auto it = index.find(key_of(t));
          if (it == index.end()) {
            if (m * o.prob > kMassTol) fail("landing state missing");
            continue;
          }
          inflow[static_cast<std::size_t>(it->second)] += m * o.prob;
        }
      }
      if (committed > occ.x[s] + kMassTol) fail("y + z mass above x");
    }
    for (const auto& [level, m] : level_mass) {
      if (m > 1.0 + kMassTol) fail("x mass above 1 on a time level");
    }
    for (std::size_t s = 0; s < n; ++s) {
      if (static_cast<int>(s) == occ.root_state) {
        if (occ.x[s] > 1.0 + kMassTol) fail("root mass above 1");
        if (inflow[s] > occ.x[s] + kMassTol) fail("root inflow above x");
        continue;
      }
      if (std::abs(inflow[s] - occ.x[s]) > kMassTol) {
        fail("flow conservation violated");
      }
    }
    if (std::abs(reward - occ.reward) > kSolveTol) {
      fail("stored reward disagrees with occupancies");
    }
  }
  if (total_plays > sol.budget + kSolveTol) fail("plays above budget");
  if (std::abs(total_plays - sol.expected_plays) > kSolveTol) {
    fail("stored plays disagree with occupancies");
  }
}

SingleArmPolicy extract_randomized(const LpSolution& sol, int arm) {
  const ArmOccupancy& occ = sol.arms.at(static_cast<std::size_t>(arm));
  const OutcomeDag& dag = *occ.dag;
  const std::size_t n = occ.states.size();

  SingleArmPolicy policy;
  policy.dag = occ.dag;
  policy.delay = occ.delay;
  policy.horizon = occ.horizon;

  std::map<StateKey, int> index;
  for (std::size_t s = 0; s < n; ++s) {
    index.emplace(key_of(occ.states[s]), static_cast<int>(s));
  }
  std::vector<int> node_of(n, -1);

  // Build states bottom-up: landings always carry x mass when y mass feeds
  // them (flow conservation), so children exist before parents need them.
  std::vector<std::size_t> order(n);
  for (std::size_t s = 0; s < n; ++s) order[s] = s;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const BlockState& sa = occ.states[a];
    const BlockState& sb = occ.states[b];
    return std::tie(sa.elapsed, sa.mode, sa.dag_node) >
           std::tie(sb.elapsed, sb.mode, sb.dag_node);
  });

  for (std::size_t s : order) {
    double committed = occ.z[s];
    for (const auto& [plays, m] : occ.y[s]) committed += m;
    if (occ.x[s] <= kMassTol) {
      if (committed > kMassTol) {
        throw std::invalid_argument(
            "extraction: play mass on a state the policy never reaches");
      }
      continue;
    }
    // The root is entered with probability 1 regardless of x (mass that the
    // occupancies never start is realized as an immediate quit), so its
    // weights are absolute; every other state is entered with probability x.
    const double denom =
        static_cast<int>(s) == occ.root_state ? 1.0 : occ.x[s];
    PolicyNode node;
    node.state = occ.states[s];
    double weight_sum = 0.0;
    const int span = block_span(node.state.mode, occ.delay);
    for (const auto& [plays, m] : occ.y[s]) {
      if (m <= 0.0) continue;
      PolicyChoice c;
      c.weight = m / denom;
      c.plays = plays;
      for (const BlockOutcome& o :
           kernel_row(dag, node.state.dag_node, plays).outcomes) {
        const StateKey key{o.node, node.state.elapsed + span,
                           static_cast<int>(node.state.mode)};
        auto it = index.find(key);
        if (it == index.end() ||
            node_of[static_cast<std::size_t>(it->second)] < 0) {
          throw std::invalid_argument("extraction: landing state missing");
        }
        c.children.push_back(node_of[static_cast<std::size_t>(it->second)]);
      }
      weight_sum += c.weight;
      node.choices.push_back(std::move(c));
    }
    if (occ.z[s] > 0.0) {
      PolicyChoice c;
      c.kind = PolicyChoice::Kind::Switch;
      c.weight = occ.z[s] / denom;
      const StateKey key{node.state.dag_node, node.state.elapsed,
                         static_cast<int>(BlockMode::NoDelay)};
      auto it = index.find(key);
      if (it == index.end() || node_of[static_cast<std::size_t>(it->second)] < 0) {
        throw std::invalid_argument("extraction: switch target missing");
      }
      c.children.push_back(node_of[static_cast<std::size_t>(it->second)]);
      weight_sum += c.weight;
      node.choices.push_back(std::move(c));
    }
    node.quit_weight = std::max(0.0, 1.0 - weight_sum);
    policy.nodes.push_back(std::move(node));
    node_of[s] = policy.size() - 1;
  }

  if (node_of[static_cast<std::size_t>(occ.root_state)] < 0) {
    // Degenerate: the solution never plays this arm at all.
    PolicyNode node;
    node.state = occ.states[static_cast<std::size_t>(occ.root_state)];
    node.quit_weight = 1.0;
    policy.nodes.push_back(std::move(node));
    node_of[static_cast<std::size_t>(occ.root_state)] = policy.size() - 1;
  }
  policy.root = node_of[static_cast<std::size_t>(occ.root_state)];
  validate_policy(policy);

  const PolicyValue v = evaluate(policy);
  if (std::abs(v.reward - occ.reward) > kValueTol ||
      std::abs(v.plays - occ.plays) > kValueTol) {
    throw std::logic_error("extraction: policy value drifted from occupancies");
  }
  return policy;
}

LpSolution scale_down(const LpSolution& sol, double gamma) {
  if (gamma < 1.0) throw std::invalid_argument("scale-down: gamma must be >= 1");
  LpSolution out = sol;
  const double inv = 1.0 / gamma;
  out.objective *= inv;
  out.expected_plays *= inv;
  out.budget *= inv;
  for (ArmOccupancy& occ : out.arms) {
    occ.reward *= inv;
    occ.plays *= inv;
    for (double& v : occ.x) v *= inv;
    for (double& v : occ.z) v *= inv;
    for (auto& row : occ.y) {
      for (auto& [plays, m] : row) m *= inv;
    }
  }
  return out;
}

}  // namespace dmab
