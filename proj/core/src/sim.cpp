#include "dmab/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmab/block_kernel.hpp"
#include "dmab/rng.hpp"

namespace dmab {

namespace {

constexpr long kUnlimitedPays = std::numeric_limits<long>::max() / 2;

/// Number of successes that still pay out `bid` before the arm's budget is
/// exhausted.  Matches the budget folding used by the posterior DAGs.
long paying_cap(const ArmSpec& arm) {
  if (is_unbudgeted(arm.budget)) return kUnlimitedPays;
  if (!(arm.bid > 0.0)) return 0;
  return std::max(0, ceil_int(arm.budget / arm.bid));
}

std::shared_ptr<const OutcomeDag> dag_for(
    const std::vector<ArmSpec>& arms,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags, int i,
    int depth) {
  if (static_cast<std::size_t>(i) < dags.size() && dags[i]) return dags[i];
  if (arms[i].prior.kind == PriorSpec::Kind::ExplicitDag) {
    // The attached prior DAG may be shallower than `depth`; policies over it
    // cannot reach past its frontier anyway, so attach it folded as-is.
    if (!arms[i].prior.dag)
      throw std::invalid_argument("arm " + arms[i].id +
                                  " has an explicit-DAG prior but no DAG was "
                                  "supplied for it");
    OutcomeDag folded = *arms[i].prior.dag;
    for (DagState& st : folded.states) st.effective_reward = arms[i].bid;
    folded = fold_budget(folded, arms[i].budget, arms[i].bid);
    return std::make_shared<const OutcomeDag>(std::move(folded));
  }
  return build_arm_dag(arms[i], depth);
}

struct PendingPlay {
  int due = 0;
  int played_at = 0;
  int outcome = 0;
};

/// Run state of one arm inside one trajectory.
struct ArmRun {
  const SingleArmPolicy* pol = nullptr;
  bool participating = true;
  bool done = false;
  int node = -1;
  int choice = -1;      // sampled choice at `node`, -1 when quit/unset
  int plays_left = 0;   // plays still to issue in the current block
  int block_plays = 0;  // total plays of the current block
  int fed = 0;          // block outcomes disclosed so far
  int succ = 0;         // successes among them
  int wait_until = -1;  // completion step of a zero-play block
  long plays_made = 0;
  long pays_left = 0;
  double reward = 0.0;
  std::deque<PendingPlay> pending;
  RandomStream choice_rng;
};

/// Executes one trajectory of a global policy against a drawn ground truth.
/// Plays are block-synchronous: a block's plays go out on the arm's turns
/// and the policy advances only once every outcome of the block has been
/// disclosed, so each decision uses exactly the information a real run
/// would have.
class TrialRunner {
 public:
  TrialRunner(const GlobalPolicy& global, const std::vector<ArmSpec>& arms,
              std::uint64_t seed, std::uint64_t trial, bool audit)
      : global_(global), arms_spec_(arms), audit_(audit) {
    const int n = static_cast<int>(arms.size());
    runs_.resize(static_cast<std::size_t>(n));
    RandomStream part(seed, mix_ids(hash_label("sim-participate"), trial));
    for (int i = 0; i < n; ++i) {
      ArmRun& a = runs_[static_cast<std::size_t>(i)];
      a.pol = &global.policies[static_cast<std::size_t>(i)];
      a.pays_left = paying_cap(arms[static_cast<std::size_t>(i)]);
      a.choice_rng =
          RandomStream(seed, mix_ids(hash_label("sim-choice"), trial,
                                     static_cast<std::uint64_t>(i)));
      a.participating = global.mode != GlobalPolicy::Mode::Combine ||
                        part.bernoulli(global.participation);
    }
  }

  double run(const GroundTruth& truth, SimTrace* trace) {
    const int n = static_cast<int>(runs_.size());
    for (int i = 0; i < n; ++i) enter(i, runs_[static_cast<std::size_t>(i)].pol->root, 0);
    for (int s = 0; s < global_.horizon; ++s) {
      TraceEvent ev;
      ev.step = s;
      for (int i = 0; i < n; ++i) disclose(i, s, &ev);
      const int p = pick_player();
      if (p >= 0) play(p, s, truth, &ev);
      if (trace) trace->push_back(std::move(ev));
    }
    double total = 0.0;
    for (const ArmRun& a : runs_) total += a.reward;
    return total;
  }

  double arm_reward(int i) const { return runs_[static_cast<std::size_t>(i)].reward; }

 private:
  /// Moves arm i to `node`, resolving switches in place and sampling the
  /// node's randomized choice.  Quit (or a negative node) finishes the arm.
  void enter(int i, int node, int step) {
    ArmRun& a = runs_[static_cast<std::size_t>(i)];
    for (;;) {
      a.node = node;
      a.choice = -1;
      a.plays_left = a.block_plays = a.fed = a.succ = 0;
      a.wait_until = -1;
      if (node < 0) {
        a.done = true;
        return;
      }
      const PolicyNode& pn = a.pol->nodes[static_cast<std::size_t>(node)];
      weights_.clear();
      weights_.push_back(pn.quit_weight);
      for (const PolicyChoice& c : pn.choices) weights_.push_back(c.weight);
      const std::size_t pick = a.choice_rng.categorical(weights_);
      if (pick == 0) {
        a.done = true;
        return;
      }
      const PolicyChoice& c = pn.choices[pick - 1];
      if (c.kind == PolicyChoice::Kind::Switch) {
        node = c.children.front();
        continue;
      }
      a.choice = static_cast<int>(pick) - 1;
      a.block_plays = c.plays;
      a.plays_left = c.plays;
      if (c.plays == 0)
        a.wait_until = step + block_span(pn.state.mode, a.pol->delay);
      return;
    }
  }

  /// Advances past a completed block along the child picked by the observed
  /// success count.
  void advance_block(int i, int step) {
    ArmRun& a = runs_[static_cast<std::size_t>(i)];
    const PolicyNode& pn = a.pol->nodes[static_cast<std::size_t>(a.node)];
    const PolicyChoice& c = pn.choices[static_cast<std::size_t>(a.choice)];
    enter(i, c.children[static_cast<std::size_t>(a.succ)], step);
  }

  void disclose(int i, int s, TraceEvent* ev) {
    ArmRun& a = runs_[static_cast<std::size_t>(i)];
    while (!a.pending.empty() && a.pending.front().due == s) {
      const PendingPlay p = a.pending.front();
      a.pending.pop_front();
      if (audit_ &&
          p.played_at + arms_spec_[static_cast<std::size_t>(i)].delay != s)
        throw std::logic_error("feasibility audit: an outcome was disclosed " +
                               std::to_string(s - p.played_at) +
                               " steps after its play instead of the delay");
      ev->disclosed.push_back(Disclosure{i, p.outcome});
      a.fed += 1;
      a.succ += p.outcome;
      if (a.fed > a.block_plays)
        throw std::logic_error(
            "feasibility audit: more disclosures than plays in a block");
      if (a.fed == a.block_plays && a.plays_left == 0 && !a.done)
        advance_block(i, s);
    }
    if (!a.done && a.wait_until == s && a.choice >= 0 && a.block_plays == 0)
      advance_block(i, s);
  }

  /// The slot goes to the highest-priority arm that is mid-block with plays
  /// still to issue.  Sequential mode never looks past the first unfinished
  /// arm; combine mode skips non-participating arms unless the slot would
  /// otherwise idle and opportunistic play is enabled.
  int pick_player() const {
    if (global_.mode == GlobalPolicy::Mode::SequentialRatio) {
      for (const int i : global_.order) {
        const ArmRun& a = runs_[static_cast<std::size_t>(i)];
        if (a.done) continue;
        return a.plays_left > 0 ? i : -1;
      }
      return -1;
    }
    for (const int i : global_.order) {
      const ArmRun& a = runs_[static_cast<std::size_t>(i)];
      if (a.participating && !a.done && a.plays_left > 0) return i;
    }
    if (global_.opportunistic) {
      for (const int i : global_.order) {
        const ArmRun& a = runs_[static_cast<std::size_t>(i)];
        if (!a.participating && !a.done && a.plays_left > 0) return i;
      }
    }
    return -1;
  }

  void play(int p, int s, const GroundTruth& truth, TraceEvent* ev) {
    ArmRun& a = runs_[static_cast<std::size_t>(p)];
    const ArmSpec& spec = arms_spec_[static_cast<std::size_t>(p)];
    if (audit_) audit_play(p);
    const std::vector<std::uint8_t>& tape = truth.tape[static_cast<std::size_t>(p)];
    if (a.plays_made >= static_cast<long>(tape.size()))
      throw std::logic_error("ground-truth tape exhausted mid-trajectory");
    const int o = tape[static_cast<std::size_t>(a.plays_made)];
    a.plays_made += 1;
    total_plays_ += 1;
    if (audit_ && total_plays_ > static_cast<long>(global_.horizon))
      throw std::logic_error("feasibility audit: plays exceeded the horizon");
    a.plays_left -= 1;
    double r = 0.0;
    if (o != 0 && a.pays_left > 0) {
      r = spec.bid;
      a.pays_left -= 1;
    }
    a.reward += r;
    ev->arm = p;
    ev->outcome = o;
    ev->reward = r;
    if (spec.delay == 0) {
      a.fed += 1;
      a.succ += o;
      if (a.fed == a.block_plays && a.plays_left == 0) advance_block(p, s);
    } else {
      a.pending.push_back(PendingPlay{s + spec.delay, s, o});
    }
  }

  void audit_play(int p) const {
    const ArmRun& a = runs_[static_cast<std::size_t>(p)];
    if (a.done || a.plays_left <= 0)
      throw std::logic_error("feasibility audit: a passive arm played");
    if (global_.mode != GlobalPolicy::Mode::Combine) return;
    if (!a.participating && !global_.opportunistic)
      throw std::logic_error(
          "feasibility audit: a non-participating arm played");
    for (const int j : global_.order) {
      if (j == p) break;
      const ArmRun& b = runs_[static_cast<std::size_t>(j)];
      if (b.participating && !b.done && b.plays_left > 0)
        throw std::logic_error(
            "feasibility audit: a higher-priority active arm was skipped");
    }
  }

  const GlobalPolicy& global_;
  const std::vector<ArmSpec>& arms_spec_;
  bool audit_ = false;
  long total_plays_ = 0;
  std::vector<ArmRun> runs_;
  std::vector<double> weights_;
};

/// Exact expected value of the undisclosed plays left at the end of a
/// brute-force trajectory: each pending play resolves in age order from the
/// then-current posterior.
double drain_pending(const OutcomeDag& dag, int u, unsigned pattern,
                     int bits) {
  if (bits == 0 || pattern == 0) return 0.0;
  const bool played = ((pattern >> (bits - 1)) & 1u) != 0;
  const unsigned rest = pattern & ((1u << (bits - 1)) - 1u);
  if (!played) return drain_pending(dag, u, rest, bits - 1);
  const DagState& st = dag.at(u);
  const double p = st.success_prob;
  return p * (st.effective_reward +
              drain_pending(dag, st.success_child, rest, bits - 1)) +
         (1.0 - p) * drain_pending(dag, st.failure_child, rest, bits - 1);
}

/// Backward induction over the joint information state: per arm the
/// posterior over disclosed outcomes plus the pattern of undisclosed plays
/// in the last delay slots (bit j set = a play went out j+1 slots ago).
class BruteForce {
 public:
  BruteForce(const std::vector<ArmSpec>& arms, int horizon,
             const std::vector<std::shared_ptr<const OutcomeDag>>& dags)
      : horizon_(horizon) {
    const int n = static_cast<int>(arms.size());
    double estimate = horizon_ + 1.0;
    int bits = std::bit_width(static_cast<unsigned>(std::max(horizon_, 1)));
    for (int i = 0; i < n; ++i) {
      dags_.push_back(dag_for(arms, dags, i, horizon_));
      delay_.push_back(arms[static_cast<std::size_t>(i)].delay);
      node_bits_.push_back(std::bit_width(
          static_cast<unsigned>(std::max(dags_.back()->size() - 1, 1))));
      estimate *= static_cast<double>(dags_.back()->size()) *
                  std::ldexp(1.0, delay_.back());
      bits += node_bits_.back() + delay_.back();
    }
    if (estimate > 1e7 || bits > 63) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3g", estimate);
      throw std::runtime_error(
          "brute-force state space has about " + std::string(buf) +
          " states; refusing to enumerate more than 1e7");
    }
  }

  double solve() {
    std::vector<int> us;
    std::vector<unsigned> ps;
    for (const auto& d : dags_) {
      us.push_back(d->root);
      ps.push_back(0);
    }
    return value(0, us, ps);
  }

 private:
  std::uint64_t pack(int s, const std::vector<int>& us,
                     const std::vector<unsigned>& ps) const {
    std::uint64_t key = static_cast<std::uint64_t>(s);
    for (std::size_t i = 0; i < us.size(); ++i) {
      key = (key << node_bits_[i]) | static_cast<std::uint64_t>(us[i]);
      key = (key << delay_[i]) | ps[i];
    }
    return key;
  }

  double value(int s, std::vector<int>& us, std::vector<unsigned>& ps) {
    if (s == horizon_) {
      double v = 0.0;
      for (std::size_t i = 0; i < us.size(); ++i)
        v += drain_pending(*dags_[i], us[i], ps[i], delay_[i]);
      return v;
    }
    const std::uint64_t key = pack(s, us, ps);
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double v = resolve(0, s, us, ps);
    memo_.emplace(key, v);
    return v;
  }

  /// Branches on the disclosures due this slot, arm by arm, then picks the
  /// best action with the disclosed information in hand.
  double resolve(int i, int s, std::vector<int>& us,
                 std::vector<unsigned>& ps) {
    if (i == static_cast<int>(us.size())) return act(s, us, ps);
    const int d = delay_[static_cast<std::size_t>(i)];
    if (d == 0 || ((ps[static_cast<std::size_t>(i)] >> (d - 1)) & 1u) == 0)
      return resolve(i + 1, s, us, ps);
    const DagState& st =
        dags_[static_cast<std::size_t>(i)]->at(us[static_cast<std::size_t>(i)]);
    const int keep = us[static_cast<std::size_t>(i)];
    us[static_cast<std::size_t>(i)] = st.success_child;
    const double on = st.effective_reward + resolve(i + 1, s, us, ps);
    us[static_cast<std::size_t>(i)] = st.failure_child;
    const double off = resolve(i + 1, s, us, ps);
    us[static_cast<std::size_t>(i)] = keep;
    return st.success_prob * on + (1.0 - st.success_prob) * off;
  }

  double act(int s, const std::vector<int>& us,
             const std::vector<unsigned>& ps) {
    const int n = static_cast<int>(us.size());
    std::vector<int> nus = us;
    std::vector<unsigned> nps = ps;
    for (int i = 0; i < n; ++i)
      nps[static_cast<std::size_t>(i)] = shifted(ps[static_cast<std::size_t>(i)],
                                                 delay_[static_cast<std::size_t>(i)], 0);
    double best = value(s + 1, nus, nps);  // idle
    for (int i = 0; i < n; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const DagState& st = dags_[ui]->at(us[ui]);
      if (st.success_child < 0)
        throw std::logic_error("brute force walked past the DAG frontier");
      double v = 0.0;
      if (delay_[ui] == 0) {
        nus[ui] = st.success_child;
        const double on = st.effective_reward + value(s + 1, nus, nps);
        nus[ui] = st.failure_child;
        const double off = value(s + 1, nus, nps);
        nus[ui] = us[ui];
        v = st.success_prob * on + (1.0 - st.success_prob) * off;
      } else {
        nps[ui] = shifted(ps[ui], delay_[ui], 1);
        v = value(s + 1, nus, nps);
        nps[ui] = shifted(ps[ui], delay_[ui], 0);
      }
      best = std::max(best, v);
    }
    return best;
  }

  static unsigned shifted(unsigned pattern, int delay, unsigned play) {
    if (delay == 0) return 0;
    return ((pattern << 1) | play) & ((1u << delay) - 1u);
  }

  int horizon_ = 0;
  std::vector<std::shared_ptr<const OutcomeDag>> dags_;
  std::vector<int> delay_;
  std::vector<int> node_bits_;
  std::unordered_map<std::uint64_t, double> memo_;
};

struct MomentAccumulator {
  double sum = 0.0;
  double sumsq = 0.0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
  }
  double mean(long trials) const { return sum / static_cast<double>(trials); }
  double std_error(long trials) const {
    if (trials < 2) return 0.0;
    const double m = mean(trials);
    const double var =
        std::max(0.0, (sumsq - static_cast<double>(trials) * m * m) /
                          static_cast<double>(trials - 1));
    return std::sqrt(var / static_cast<double>(trials));
  }
};

}  // namespace

GroundTruth draw_ground_truth(
    const std::vector<ArmSpec>& arms,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags, int max_plays,
    std::uint64_t seed, std::uint64_t trial) {
  GroundTruth gt;
  const int n = static_cast<int>(arms.size());
  gt.theta.resize(static_cast<std::size_t>(n));
  gt.tape.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const ArmSpec& arm = arms[static_cast<std::size_t>(i)];
    RandomStream rng(seed, mix_ids(hash_label("sim-truth"), trial,
                                   static_cast<std::uint64_t>(i)));
    std::vector<std::uint8_t>& tape = gt.tape[static_cast<std::size_t>(i)];
    tape.reserve(static_cast<std::size_t>(max_plays));
    switch (arm.prior.kind) {
      case PriorSpec::Kind::Beta:
      case PriorSpec::Kind::Mixture: {
        double theta = 0.0;
        if (arm.prior.kind == PriorSpec::Kind::Beta) {
          theta = rng.beta_integer(arm.prior.alpha1, arm.prior.alpha0);
        } else {
          const std::size_t k = rng.categorical(arm.prior.weights);
          theta = arm.prior.means[k];
        }
        gt.theta[static_cast<std::size_t>(i)] = theta;
        for (int t = 0; t < max_plays; ++t)
          tape.push_back(rng.bernoulli(theta) ? 1 : 0);
        break;
      }
      case PriorSpec::Kind::ExplicitDag: {
        const std::shared_ptr<const OutcomeDag> src =
            static_cast<std::size_t>(i) < dags.size() && dags[static_cast<std::size_t>(i)]
                ? dags[static_cast<std::size_t>(i)]
                : arm.prior.dag;
        if (!src)
          throw std::invalid_argument(
              "arm " + arm.id +
              " has an explicit-DAG prior but no DAG was supplied for it");
        const OutcomeDag& dag = *src;
        gt.theta[static_cast<std::size_t>(i)] =
            std::numeric_limits<double>::quiet_NaN();
        // The tape ends at the DAG frontier: no policy validated against this
        // DAG can play past it, so the missing entries are never read.
        int u = dag.root;
        for (int t = 0; t < max_plays && dag.at(u).success_child >= 0; ++t) {
          const DagState& st = dag.at(u);
          const bool o = rng.bernoulli(st.success_prob);
          tape.push_back(o ? 1 : 0);
          u = o ? st.success_child : st.failure_child;
        }
        break;
      }
    }
  }
  return gt;
}

TrajectoryResult run_trajectory(const GlobalPolicy& global,
                                const std::vector<ArmSpec>& arms,
                                const GroundTruth& truth, std::uint64_t seed,
                                std::uint64_t trial, SimTrace* trace,
                                bool audit) {
  if (global.policies.size() != arms.size())
    throw std::invalid_argument(
        "the global policy must carry one per-arm policy per arm");
  TrialRunner runner(global, arms, seed, trial, audit);
  TrajectoryResult out;
  out.total = runner.run(truth, trace);
  out.arm_reward.resize(arms.size());
  for (std::size_t i = 0; i < arms.size(); ++i)
    out.arm_reward[i] = runner.arm_reward(static_cast<int>(i));
  return out;
}

Estimate run_mc(const GlobalPolicy& global, const std::vector<ArmSpec>& arms,
                long trials, std::uint64_t seed,
                const std::vector<std::shared_ptr<const OutcomeDag>>& dags,
                SimTrace* first_trial_trace, bool audit) {
  const int n = static_cast<int>(arms.size());
  if (global.policies.size() != arms.size())
    throw std::invalid_argument(
        "the global policy must carry one per-arm policy per arm");
  if (trials < 1) throw std::invalid_argument("at least one trial is needed");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  if (static_cast<int>(global.order.size()) != n)
    throw std::invalid_argument("the priority order must list every arm");
  for (const int i : global.order) {
    if (i < 0 || i >= n || seen[static_cast<std::size_t>(i)])
      throw std::invalid_argument("the priority order must be a permutation");
    seen[static_cast<std::size_t>(i)] = 1;
  }
  for (int i = 0; i < n; ++i) {
    if (global.policies[static_cast<std::size_t>(i)].delay !=
        arms[static_cast<std::size_t>(i)].delay)
      throw std::invalid_argument(
          "policy and arm disagree on the feedback delay");
  }
  if (first_trial_trace) first_trial_trace->clear();

  MomentAccumulator total;
  std::vector<MomentAccumulator> per_arm(static_cast<std::size_t>(n));
  for (long t = 0; t < trials; ++t) {
    const GroundTruth truth = draw_ground_truth(
        arms, dags, global.horizon + 1, seed, static_cast<std::uint64_t>(t));
    const TrajectoryResult res =
        run_trajectory(global, arms, truth, seed, static_cast<std::uint64_t>(t),
                       t == 0 ? first_trial_trace : nullptr, audit);
    total.add(res.total);
    for (int i = 0; i < n; ++i)
      per_arm[static_cast<std::size_t>(i)].add(
          res.arm_reward[static_cast<std::size_t>(i)]);
  }

  Estimate est;
  est.trials = trials;
  est.mean = total.mean(trials);
  est.std_error = total.std_error(trials);
  est.arm_mean.resize(static_cast<std::size_t>(n));
  est.arm_std_error.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    est.arm_mean[static_cast<std::size_t>(i)] = per_arm[static_cast<std::size_t>(i)].mean(trials);
    est.arm_std_error[static_cast<std::size_t>(i)] =
        per_arm[static_cast<std::size_t>(i)].std_error(trials);
  }
  return est;
}

double brute_force_opt(
    const std::vector<ArmSpec>& arms, int horizon,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags) {
  if (arms.empty()) throw std::invalid_argument("no arms to optimize over");
  if (horizon < 0) throw std::invalid_argument("negative horizon");
  BruteForce bf(arms, horizon, dags);
  return bf.solve();
}

TightExample make_tight_example(int n) {
  if (n < 2)
    throw std::invalid_argument("the tight family needs at least two arms");
  const double nn = static_cast<double>(n);
  const double p = 1.0 / (nn * nn);
  const double s = 1.0 - 1.0 / nn;
  TightExample ex;
  ex.horizon = n;
  for (int i = 0; i < n; ++i) {
    ArmSpec arm;
    arm.id = "tight-" + std::to_string(i);
    arm.prior = PriorSpec::mixture({p, 1.0 - p}, {s, 0.0});
    ex.arms.push_back(std::move(arm));
  }
  const double q = p * s;
  double opt = 0.0;
  for (int x = 0; x < n; ++x)
    opt += std::pow(1.0 - q, x) * q * (1.0 + (nn - 1.0 - x) * s);
  ex.opt_exact = opt;
  return ex;
}

Estimate run_baseline_mc(
    const std::vector<ArmSpec>& arms, int horizon, BaselineKind kind,
    long trials, std::uint64_t seed, double explore_fraction,
    const std::vector<std::shared_ptr<const OutcomeDag>>& dags) {
  const int n = static_cast<int>(arms.size());
  if (n == 0) throw std::invalid_argument("no arms to simulate");
  if (trials < 1) throw std::invalid_argument("at least one trial is needed");
  std::vector<std::shared_ptr<const OutcomeDag>> use;
  for (int i = 0; i < n; ++i) use.push_back(dag_for(arms, dags, i, horizon));

  const int explore_slots =
      kind == BaselineKind::ExploreThenExploit
          ? static_cast<int>(std::floor(explore_fraction * horizon))
          : 0;

  MomentAccumulator total;
  std::vector<MomentAccumulator> per_arm(static_cast<std::size_t>(n));
  std::vector<int> node(static_cast<std::size_t>(n));
  std::vector<long> pays(static_cast<std::size_t>(n));
  std::vector<long> made(static_cast<std::size_t>(n));
  std::vector<double> reward(static_cast<std::size_t>(n));
  std::vector<std::deque<PendingPlay>> pending(static_cast<std::size_t>(n));

  for (long t = 0; t < trials; ++t) {
    const GroundTruth truth = draw_ground_truth(
        arms, use, horizon + 1, seed, static_cast<std::uint64_t>(t));
    for (int i = 0; i < n; ++i) {
      node[static_cast<std::size_t>(i)] = use[static_cast<std::size_t>(i)]->root;
      pays[static_cast<std::size_t>(i)] = paying_cap(arms[static_cast<std::size_t>(i)]);
      made[static_cast<std::size_t>(i)] = 0;
      reward[static_cast<std::size_t>(i)] = 0.0;
      pending[static_cast<std::size_t>(i)].clear();
    }
    int committed = -1;
    for (int s = 0; s < horizon; ++s) {
      for (int i = 0; i < n; ++i) {
        auto& q = pending[static_cast<std::size_t>(i)];
        while (!q.empty() && q.front().due == s) {
          const DagState& st =
              use[static_cast<std::size_t>(i)]->at(node[static_cast<std::size_t>(i)]);
          node[static_cast<std::size_t>(i)] =
              q.front().outcome ? st.success_child : st.failure_child;
          q.pop_front();
        }
      }
      int a = -1;
      if (kind == BaselineKind::ExploreThenExploit && s < explore_slots) {
        a = s % n;
      } else if (kind == BaselineKind::ExploreThenExploit && committed >= 0) {
        a = committed;
      } else {
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
          const DagState& st =
              use[static_cast<std::size_t>(i)]->at(node[static_cast<std::size_t>(i)]);
          if (st.success_child < 0) continue;  // model exhausted: unplayable
          const double score =
              pays[static_cast<std::size_t>(i)] > 0
                  ? st.mean * arms[static_cast<std::size_t>(i)].bid
                  : 0.0;
          if (score > best + 1e-15) {
            best = score;
            a = i;
          }
        }
        if (kind == BaselineKind::ExploreThenExploit) committed = a;
      }
      if (a < 0) continue;  // every arm's model is exhausted: idle slot
      const std::size_t ua = static_cast<std::size_t>(a);
      const DagState& st = use[ua]->at(node[ua]);
      if (st.success_child < 0) continue;  // committed/explored arm exhausted
      const int o = truth.tape[ua][static_cast<std::size_t>(made[ua])];
      made[ua] += 1;
      if (o != 0 && pays[ua] > 0) {
        reward[ua] += arms[ua].bid;
        pays[ua] -= 1;
      }
      if (arms[ua].delay == 0)
        node[ua] = o ? st.success_child : st.failure_child;
      else
        pending[ua].push_back(PendingPlay{s + arms[ua].delay, s, o});
    }
    double rt = 0.0;
    for (int i = 0; i < n; ++i) {
      rt += reward[static_cast<std::size_t>(i)];
      per_arm[static_cast<std::size_t>(i)].add(reward[static_cast<std::size_t>(i)]);
    }
    total.add(rt);
  }

  Estimate est;
  est.trials = trials;
  est.mean = total.mean(trials);
  est.std_error = total.std_error(trials);
  est.arm_mean.resize(static_cast<std::size_t>(n));
  est.arm_std_error.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    est.arm_mean[static_cast<std::size_t>(i)] = per_arm[static_cast<std::size_t>(i)].mean(trials);
    est.arm_std_error[static_cast<std::size_t>(i)] =
        per_arm[static_cast<std::size_t>(i)].std_error(trials);
  }
  return est;
}

}  // namespace dmab
