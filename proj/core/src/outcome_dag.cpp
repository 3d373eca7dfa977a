#include "dmab/outcome_dag.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dmab {
namespace {

// Depth-major layout for count-keyed DAGs: level d holds d+1 states
// (successes 0..d), so level d starts at d*(d+1)/2.
int level_offset(int depth) { return depth * (depth + 1) / 2; }

int count_index(int depth, int successes) {
  return level_offset(depth) + successes;
}

}  // namespace

int OutcomeDag::find(const std::string& key) const {
  for (int i = 0; i < size(); ++i) {
    if (states[static_cast<std::size_t>(i)].key == key) return i;
  }
  return -1;
}

OutcomeDag build_beta_dag(int alpha1, int alpha0, double bid, int max_depth) {
  if (alpha1 <= 0 || alpha0 <= 0) {
    throw std::invalid_argument("beta prior parameters must be positive");
  }
  if (max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");

  OutcomeDag dag;
  dag.max_depth = max_depth;
  dag.exchangeable = true;
  dag.states.resize(static_cast<std::size_t>(level_offset(max_depth + 1)));
  for (int d = 0; d <= max_depth; ++d) {
    for (int s = 0; s <= d; ++s) {
      DagState& st = dag.states[static_cast<std::size_t>(count_index(d, s))];
      const int a1 = alpha1 + s;
      const int a0 = alpha0 + (d - s);
      st.key = "b:" + std::to_string(a1) + "," + std::to_string(a0);
      st.depth = d;
      st.successes = s;
      st.mean = static_cast<double>(a1) / static_cast<double>(a1 + a0);
      st.success_prob = st.mean;
      st.effective_reward = bid;
      if (d < max_depth) {
        st.success_child = count_index(d + 1, s + 1);
        st.failure_child = count_index(d + 1, s);
      }
    }
  }
  return dag;
}

OutcomeDag build_mixture_dag(const std::vector<double>& weights,
                             const std::vector<double>& means, double bid,
                             int max_depth) {
  if (weights.empty() || weights.size() != means.size()) {
    throw std::invalid_argument("mixture prior needs matching nonempty weights/means");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("mixture weights must be nonnegative");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("mixture weights must sum > 0");
  for (double m : means) {
    if (m < 0.0 || m > 1.0) throw std::invalid_argument("mixture means must lie in [0,1]");
  }
  if (max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");

  OutcomeDag dag;
  dag.max_depth = max_depth;
  dag.exchangeable = true;
  dag.hyp_weights.reserve(weights.size());
  for (double w : weights) dag.hyp_weights.push_back(w / total);
  dag.hyp_means = means;

  const std::size_t k = means.size();
  dag.states.resize(static_cast<std::size_t>(level_offset(max_depth + 1)));
  // Posterior after s successes in d plays is exchangeable, so count-keyed
  // states are exact.  Unnormalized hypothesis weight: w_j * m_j^s (1-m_j)^(d-s).
  std::vector<double> post(k);
  for (int d = 0; d <= max_depth; ++d) {
    for (int s = 0; s <= d; ++s) {
      DagState& st = dag.states[static_cast<std::size_t>(count_index(d, s))];
      st.key = "m:" + std::to_string(d) + "," + std::to_string(s);
      st.depth = d;
      st.successes = s;
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        post[j] = dag.hyp_weights[j] * std::pow(means[j], s) *
                  std::pow(1.0 - means[j], d - s);
        z += post[j];
      }
      if (z > 0.0) {
        double mu = 0.0;
        for (std::size_t j = 0; j < k; ++j) mu += post[j] * means[j];
        st.mean = mu / z;
      } else {
        // Unreachable state (zero prior mass on any consistent hypothesis).
        st.mean = 0.0;
      }
      st.success_prob = st.mean;
      st.effective_reward = bid;
      if (d < max_depth) {
        st.success_child = count_index(d + 1, s + 1);
        st.failure_child = count_index(d + 1, s);
      }
    }
  }
  return dag;
}

OutcomeDag fold_budget(const OutcomeDag& dag, double budget, double bid) {
  OutcomeDag out = dag;
  if (std::isinf(budget)) return out;
  if (budget < 0.0) throw std::invalid_argument("budget must be nonnegative");
  for (DagState& st : out.states) {
    if (static_cast<double>(st.successes) * bid >= budget) {
      st.effective_reward = 0.0;
    }
  }
  return out;
}

double validate_martingale(const OutcomeDag& dag) {
  double worst = 0.0;
  for (int i = 0; i < dag.size(); ++i) {
    const DagState& st = dag.at(i);
    if (st.success_child < 0 && st.failure_child < 0) continue;
    if (st.success_child < 0 || st.failure_child < 0 ||
        st.success_child >= dag.size() || st.failure_child >= dag.size()) {
      throw std::runtime_error("state " + st.key + " has broken child references");
    }
    const double recomposed =
        st.success_prob * dag.at(st.success_child).mean +
        (1.0 - st.success_prob) * dag.at(st.failure_child).mean;
    worst = std::max(worst, std::abs(st.mean - recomposed));
  }
  return worst;
}

std::shared_ptr<const OutcomeDag> build_arm_dag(const ArmSpec& arm, int max_depth) {
  OutcomeDag dag;
  switch (arm.prior.kind) {
    case PriorSpec::Kind::Beta:
      dag = build_beta_dag(arm.prior.alpha1, arm.prior.alpha0, arm.bid, max_depth);
      break;
    case PriorSpec::Kind::Mixture:
      dag = build_mixture_dag(arm.prior.weights, arm.prior.means, arm.bid, max_depth);
      break;
    case PriorSpec::Kind::ExplicitDag: {
      if (!arm.prior.dag) {
        throw std::invalid_argument(
            "arm " + arm.id +
            " has an explicit-DAG prior with no DAG attached; load the "
            "instance through the loader");
      }
      dag = *arm.prior.dag;
      for (const DagState& st : dag.states) {
        if (st.depth < max_depth && st.success_child < 0) {
          throw std::invalid_argument(
              "arm " + arm.id + ": explicit prior DAG reaches a frontier at " +
              std::to_string(st.depth) + " plays but " +
              std::to_string(max_depth) + " are needed");
        }
      }
      for (DagState& st : dag.states) st.effective_reward = arm.bid;
      break;
    }
  }
  dag = fold_budget(dag, arm.budget, arm.bid);
  return std::make_shared<const OutcomeDag>(std::move(dag));
}

}  // namespace dmab
