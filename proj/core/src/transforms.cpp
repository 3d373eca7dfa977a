#include "dmab/transforms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace dmab {
namespace {

// Binomial coefficients as doubles, grown on demand.
double binom(int n, int k) {
  static std::vector<std::vector<double>> table{{1.0}};
  if (k < 0 || k > n) return 0.0;
  while (static_cast<int>(table.size()) <= n) {
    const std::vector<double>& prev = table.back();
    std::vector<double> row(prev.size() + 1, 1.0);
    for (std::size_t i = 1; i + 1 < row.size(); ++i) row[i] = prev[i - 1] + prev[i];
    table.push_back(std::move(row));
  }
  return table[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)];
}

int success_delta(const OutcomeDag& dag, int from, int to) {
  return dag.at(to).successes - dag.at(from).successes;
}

// Children of one PlayBlock choice keyed by the block's success count.
std::map<int, int> children_by_delta(const SingleArmPolicy& p, int node,
                                     const PolicyChoice& c) {
  const OutcomeDag& dag = *p.dag;
  const int u = p.at(node).state.dag_node;
  const KernelRow row = kernel_row(dag, u, c.plays);
  std::map<int, int> out;
  for (std::size_t i = 0; i < row.outcomes.size(); ++i) {
    out[success_delta(dag, u, row.outcomes[i].node)] =
        c.children[i];
  }
  if (out.size() != row.outcomes.size()) {
    throw std::invalid_argument(
        "transform: outcome DAG merges states across success counts");
  }
  return out;
}

// A policy-node decision under assembly: quit mass plus weighted choices.
struct Decision {
  double quit_weight = 0.0;
  std::vector<PolicyChoice> choices;

  void merge(const Decision& other, double scale) {
    quit_weight += scale * other.quit_weight;
    for (PolicyChoice c : other.choices) {
      c.weight *= scale;
      choices.push_back(std::move(c));
    }
  }
};

void set_value_report(TransformReport* report, std::string bound,
                      PolicyValue in, PolicyValue out, double slack) {
  if (!report) return;
  report->bound_checked = std::move(bound);
  report->input_value = in;
  report->output_value = out;
  report->slack = slack;
}

// ---------------------------------------------------------------------------
// Block structuring: chunks of delay+1 steps -> blocks of span 2*delay+1.
// ---------------------------------------------------------------------------

// A chunk state is (chunk start t, disclosed node v, window plays P, window
// outcomes O).  Window offset w in [0, delay) is the step t-delay+w; bit w of
// P marks a play there and bit w of O its outcome.  Given the state, the
// per-step strategy's behaviour over the chunk is deterministic: outcomes of
// the chunk's own plays disclose only after the chunk ends.
class BlockStructurer {
 public:
  explicit BlockStructurer(const StepPolicy& sp)
      : sp_(sp), dag_(*sp.dag), delta_(sp.delay), horizon_(sp.horizon) {
    out_.dag = sp.dag;
    out_.delay = delta_;
    out_.horizon = 2 * horizon_;
  }

  SingleArmPolicy run() {
    out_.root = state_node(0, dag_.root, 0, 0);
    validate_policy(out_);
    return std::move(out_);
  }

 private:
  using StateKey = std::tuple<int, int, std::uint32_t, std::uint32_t>;

  struct ChunkRun {
    int plays = 0;
    std::uint32_t play_offsets = 0;  // bit s: play at chunk offset s
    bool quit = false;
  };

  int advance(int v, int outcome) const {
    const DagState& st = dag_.at(v);
    const int ch = outcome ? st.success_child : st.failure_child;
    if (ch < 0) throw std::logic_error("block structuring: DAG too shallow");
    return ch;
  }

  // Disclosed node once every window outcome has landed (play order).
  int advance_window(int v, std::uint32_t P, std::uint32_t O) const {
    for (int w = 0; w < delta_; ++w) {
      if ((P >> w) & 1u) v = advance(v, static_cast<int>((O >> w) & 1u));
    }
    return v;
  }

  int elapsed_of(int t) const { return (t / (delta_ + 1)) * (2 * delta_ + 1); }

  // Replays the strategy over one chunk.  Window slot j-1 discloses right
  // before the decision at chunk offset j; the chunk's own plays stay dark.
  ChunkRun run_chunk(int t, int v, std::uint32_t P, std::uint32_t O) const {
    ChunkRun r;
    int v_cur = v;
    for (int j = 0; j <= delta_ && t + j < horizon_; ++j) {
      if (j >= 1 && ((P >> (j - 1)) & 1u)) {
        v_cur = advance(v_cur, static_cast<int>((O >> (j - 1)) & 1u));
      }
      std::uint32_t mask = 0;  // pending bit i: play at step t+j-1-i
      for (int i = 0; i < j; ++i) {
        if ((r.play_offsets >> (j - 1 - i)) & 1u) mask |= (1u << i);
      }
      for (int i = j; i < delta_; ++i) {
        if ((P >> (delta_ + j - 1 - i)) & 1u) mask |= (1u << i);
      }
      const StepAction a = sp_.action({t + j, v_cur, mask});
      if (a == StepAction::Quit) {
        r.quit = true;
        break;
      }
      if (a == StepAction::Play) {
        r.plays += 1;
        r.play_offsets |= (1u << j);
      }
    }
    return r;
  }

  int quit_node(int v, int e) {
    const auto key = std::make_pair(v, e);
    auto it = quit_nodes_.find(key);
    if (it != quit_nodes_.end()) return it->second;
    PolicyNode q;
    q.state = {v, e, BlockMode::Regular};
    q.quit_weight = 1.0;
    out_.nodes.push_back(std::move(q));
    const int id = out_.size() - 1;
    quit_nodes_.emplace(key, id);
    return id;
  }

  int make_node(int v, int e, Decision d) {
    PolicyNode n;
    n.state = {v, e, BlockMode::Regular};
    n.quit_weight = d.quit_weight;
    n.choices = std::move(d.choices);
    out_.nodes.push_back(std::move(n));
    return out_.size() - 1;
  }

  int state_node(int t, int v, std::uint32_t P, std::uint32_t O) {
    const StateKey key{t, v, P, O};
    auto it = state_nodes_.find(key);
    if (it != state_nodes_.end()) return it->second;
    const int u = advance_window(v, P, O);
    const int id = make_node(u, elapsed_of(t), decide(t, v, P, O));
    state_nodes_.emplace(key, id);
    return id;
  }

  // The (deterministic) block decision of one chunk state, as a Decision
  // relative to dag node advance_window(v, P, O).
  Decision decide(int t, int v, std::uint32_t P, std::uint32_t O) {
    const auto key = StateKey{t, v, P, O};
    auto it = decisions_.find(key);
    if (it != decisions_.end()) return it->second;

    Decision d;
    if (t >= horizon_) {
      d.quit_weight = 1.0;
      decisions_.emplace(key, d);
      return d;
    }
    const ChunkRun r = run_chunk(t, v, P, O);
    const int u = advance_window(v, P, O);
    if (r.quit && r.plays == 0) {
      d.quit_weight = 1.0;
      decisions_.emplace(key, d);
      return d;
    }

    const int t_next = t + delta_ + 1;
    const int e_next = elapsed_of(t) + 2 * delta_ + 1;
    PolicyChoice c;
    c.kind = PolicyChoice::Kind::PlayBlock;
    c.weight = 1.0;
    c.plays = r.plays;
    const KernelRow row = kernel_row(dag_, u, r.plays);
    for (const BlockOutcome& o : row.outcomes) {
      const int jj = success_delta(dag_, u, o.node);
      if (r.quit) {
        c.children.push_back(quit_node(o.node, e_next));
      } else if (r.plays == 0) {
        c.children.push_back(state_node(t_next, u, 0, 0));
      } else {
        c.children.push_back(
            pattern_mixture(t, u, r.play_offsets, r.plays, jj, o.node, e_next));
      }
    }
    d.choices.push_back(std::move(c));
    decisions_.emplace(key, d);
    return d;
  }

  // Landing node after jj successes among the chunk's plays: the success
  // pattern is uniform over the C(plays, jj) arrangements (exchangeability),
  // and each arrangement fixes the next chunk's window and disclosed node.
  int pattern_mixture(int t, int u, std::uint32_t S, int plays, int jj,
                      int landing, int e_next) {
    const int t_next = t + delta_ + 1;
    const double w_pattern = 1.0 / binom(plays, jj);
    Decision d;
    std::uint32_t A = S;
    while (true) {
      if (std::popcount(A) == jj) {
        int v_next = u;
        if (S & 1u) v_next = advance(u, static_cast<int>(A & 1u));
        const std::uint32_t P_next = S >> 1;
        const std::uint32_t O_next = A >> 1;
        d.merge(decide(t_next, v_next, P_next, O_next), w_pattern);
      }
      if (A == 0) break;
      A = (A - 1) & S;
    }
    return make_node(landing, e_next, std::move(d));
  }

  const StepPolicy& sp_;
  const OutcomeDag& dag_;
  int delta_ = 0;
  int horizon_ = 0;
  SingleArmPolicy out_;
  std::map<StateKey, int> state_nodes_;
  std::map<StateKey, Decision> decisions_;
  std::map<std::pair<int, int>, int> quit_nodes_;
};

// ---------------------------------------------------------------------------
// Delay-free conversion: threshold blocks switch to a continuous-play
// pipeline that feeds outcomes to a lag-delay simulation of the input.
// ---------------------------------------------------------------------------

class DelayFreer {
 public:
  DelayFreer(const SingleArmPolicy& in, double c)
      : in_(in), dag_(*in.dag), delta_(in.delay) {
    threshold_ = ceil_int(c * delta_);
    out_.dag = in.dag;
    out_.delay = delta_;
    out_.horizon = in.horizon + delta_;
    out_.delay_free_c = c;
  }

  SingleArmPolicy run() {
    out_.root = copy_spine(in_.root);
    validate_policy(out_);
    return std::move(out_);
  }

 private:
  // (sim node, sim choice, fed successes, fed failures, queue bits, queue
  // len, dag node, elapsed)
  using MidKey =
      std::tuple<int, int, int, int, std::uint32_t, int, int, int>;
  // (sim node about to decide, queue bits, queue len, dag node, elapsed)
  using SupKey = std::tuple<int, std::uint32_t, int, int, int>;

  struct CommitAtom {
    int node = -1;   // input policy node
    int ci = -1;     // index of a PlayBlock choice with >= 1 play
    double weight = 0.0;
  };
  struct ResolvedDist {
    double quit = 0.0;
    std::vector<CommitAtom> commits;
  };

  // Collapses zero-play blocks: the distribution over "input quits" and
  // "input commits to this nonempty block" reachable without spending plays.
  const ResolvedDist& resolve(int w) {
    auto it = resolved_.find(w);
    if (it != resolved_.end()) return it->second;
    ResolvedDist r;
    const PolicyNode& n = in_.at(w);
    r.quit = n.quit_weight;
    for (std::size_t ci = 0; ci < n.choices.size(); ++ci) {
      const PolicyChoice& c = n.choices[ci];
      if (c.plays >= 1) {
        r.commits.push_back({w, static_cast<int>(ci), c.weight});
      } else {
        const ResolvedDist& sub = resolve(c.children.front());
        r.quit += c.weight * sub.quit;
        for (CommitAtom a : sub.commits) {
          a.weight *= c.weight;
          r.commits.push_back(a);
        }
      }
    }
    return resolved_.emplace(w, std::move(r)).first->second;
  }

  int copy_spine(int w) {
    auto it = copied_.find(w);
    if (it != copied_.end()) return it->second;
    const PolicyNode& n = in_.at(w);
    PolicyNode outn;
    outn.state = n.state;
    outn.quit_weight = n.quit_weight;
    std::vector<PolicyChoice> choices;
    for (std::size_t ci = 0; ci < n.choices.size(); ++ci) {
      const PolicyChoice& c = n.choices[ci];
      PolicyChoice nc;
      nc.weight = c.weight;
      if (c.plays >= threshold_) {
        nc.kind = PolicyChoice::Kind::Switch;
        nc.plays = 0;
        nc.children = {pipeline_entry(w, static_cast<int>(ci))};
      } else {
        nc.kind = PolicyChoice::Kind::PlayBlock;
        nc.plays = c.plays;
        for (int ch : c.children) nc.children.push_back(copy_spine(ch));
      }
      choices.push_back(std::move(nc));
    }
    outn.choices = std::move(choices);
    out_.nodes.push_back(std::move(outn));
    const int id = out_.size() - 1;
    copied_.emplace(w, id);
    return id;
  }

  int pipeline_entry(int w, int ci) {
    const PolicyNode& n = in_.at(w);
    const PolicyChoice& c = n.choices[static_cast<std::size_t>(ci)];
    const int v = n.state.dag_node;
    const int e = n.state.elapsed;
    if (c.plays >= 1) return mid_node(w, ci, 0, 0, 0u, 0, v, e);
    // A zero-play trigger (delay 0 only): resolve at its landing directly.
    return sup_node(c.children.front(), 0u, 0, v, e);
  }

  int make_nodelay(int v, int e, Decision d) {
    PolicyNode n;
    n.state = {v, e, BlockMode::NoDelay};
    n.quit_weight = d.quit_weight;
    n.choices = std::move(d.choices);
    out_.nodes.push_back(std::move(n));
    return out_.size() - 1;
  }

  // Both children of one pipeline play from `v`: push the outcome on the
  // feedback queue; once the queue exceeds the delay, pop the oldest bit and
  // feed it to the simulated input.
  std::vector<int> play_children(int w, int ci, int a, int b,
                                 std::uint32_t q, int qlen, int v, int e) {
    if (e + 1 > out_.horizon) {
      throw std::logic_error("delay-free pipeline: play past the horizon");
    }
    const int ell = in_.at(w).choices[static_cast<std::size_t>(ci)].plays;
    const KernelRow row = kernel_row(dag_, v, 1);
    std::vector<int> children;
    for (const BlockOutcome& o : row.outcomes) {
      const int bit = success_delta(dag_, v, o.node);
      std::uint32_t nq = (q << 1) | static_cast<std::uint32_t>(bit);
      int nlen = qlen + 1;
      if (nlen <= delta_) {
        children.push_back(mid_node(w, ci, a, b, nq, nlen, o.node, e + 1));
        continue;
      }
      const int oldest = static_cast<int>((nq >> (nlen - 1)) & 1u);
      nq &= (1u << (nlen - 1)) - 1u;
      nlen -= 1;
      const int na = a + oldest;
      const int nb = b + (1 - oldest);
      if (na + nb < ell) {
        children.push_back(mid_node(w, ci, na, nb, nq, nlen, o.node, e + 1));
      } else {
        const int landing =
            children_by_delta(in_, w, in_.at(w).choices[static_cast<std::size_t>(ci)])
                .at(na);
        children.push_back(sup_node(landing, nq, nlen, o.node, e + 1));
      }
    }
    return children;
  }

  // Mid-commitment pipeline node: the simulated input still owes plays on
  // its current block, so the pipeline plays unconditionally.
  int mid_node(int w, int ci, int a, int b, std::uint32_t q, int qlen, int v,
               int e) {
    const MidKey key{w, ci, a, b, q, qlen, v, e};
    auto it = mid_nodes_.find(key);
    if (it != mid_nodes_.end()) return it->second;
    Decision d;
    PolicyChoice c;
    c.kind = PolicyChoice::Kind::PlayBlock;
    c.weight = 1.0;
    c.plays = 1;
    c.children = play_children(w, ci, a, b, q, qlen, v, e);
    d.choices.push_back(std::move(c));
    const int id = make_nodelay(v, e, std::move(d));
    mid_nodes_.emplace(key, id);
    return id;
  }

  // The simulated input just finished a block at node `w`: mix over its next
  // commitments.  A simulated quit quits the pipeline (outcomes still in the
  // queue were already played and paid).
  int sup_node(int w, std::uint32_t q, int qlen, int v, int e) {
    const SupKey key{w, q, qlen, v, e};
    auto it = sup_nodes_.find(key);
    if (it != sup_nodes_.end()) return it->second;
    const ResolvedDist& dist = resolve(w);
    Decision d;
    d.quit_weight = dist.quit;
    for (const CommitAtom& atom : dist.commits) {
      PolicyChoice c;
      c.kind = PolicyChoice::Kind::PlayBlock;
      c.weight = atom.weight;
      c.plays = 1;
      c.children = play_children(atom.node, atom.ci, 0, 0, q, qlen, v, e);
      d.choices.push_back(std::move(c));
    }
    const int id = make_nodelay(v, e, std::move(d));
    sup_nodes_.emplace(key, id);
    return id;
  }

  const SingleArmPolicy& in_;
  const OutcomeDag& dag_;
  int delta_ = 0;
  int threshold_ = 0;
  SingleArmPolicy out_;
  std::map<int, int> copied_;
  std::map<int, ResolvedDist> resolved_;
  std::map<MidKey, int> mid_nodes_;
  std::map<SupKey, int> sup_nodes_;
};

// ---------------------------------------------------------------------------
// Well-structuring: group nonempty blocks under inflated roots, replay
// eliminated blocks from stored outcomes.
// ---------------------------------------------------------------------------

class WellStructurer {
 public:
  WellStructurer(const SingleArmPolicy& in, double alpha)
      : in_(in), dag_(*in.dag), delta_(in.delay), alpha_(alpha) {
    elim_quota_ = static_cast<int>(std::floor(1.0 / alpha + 1e-9));
    out_.dag = in.dag;
    out_.delay = delta_;
    out_.horizon = in.horizon + delta_;
    out_.well_structured_alpha = alpha;
  }

  int tape_size(int plays) const {
    return static_cast<int>(std::floor(2.0 * plays / alpha_ + 1e-9));
  }

  SingleArmPolicy run() {
    const int u0 = in_.at(in_.root).state.dag_node;
    out_.root = make_regular(u0, 0, decide_reg(in_.root, {}, u0, 0));
    validate_policy(out_);
    return std::move(out_);
  }

 private:
  struct GroupRoot {
    int cls = 0;    // size class: plays in [2^cls, 2^(cls+1))
    int quota = 0;  // eliminations left
    int a = 0;      // stored successes
    int b = 0;      // stored failures
  };
  using Roots = std::vector<GroupRoot>;
  using RegKey = std::tuple<int, int, int, std::vector<int>>;
  using TailKey = std::tuple<int, int, int>;

  static std::vector<int> flat(const Roots& roots) {
    std::vector<int> f;
    f.reserve(roots.size() * 4);
    for (const GroupRoot& r : roots) {
      f.push_back(r.cls);
      f.push_back(r.quota);
      f.push_back(r.a);
      f.push_back(r.b);
    }
    return f;
  }

  int make_regular(int v, int e, Decision d) {
    PolicyNode n;
    n.state = {v, e, BlockMode::Regular};
    n.quit_weight = d.quit_weight;
    n.choices = std::move(d.choices);
    out_.nodes.push_back(std::move(n));
    return out_.size() - 1;
  }

  int make_nodelay(int v, int e, Decision d) {
    PolicyNode n;
    n.state = {v, e, BlockMode::NoDelay};
    n.quit_weight = d.quit_weight;
    n.choices = std::move(d.choices);
    out_.nodes.push_back(std::move(n));
    return out_.size() - 1;
  }

  // Decision for the regular phase at input node `w`, open roots `roots`,
  // output posterior `u`, output elapsed `e`.  Zero-play blocks splice away
  // and eliminated blocks consume stored outcomes, both without output time.
  Decision decide_reg(int w, const Roots& roots, int u, int e) {
    const RegKey key{w, u, e, flat(roots)};
    auto it = reg_decisions_.find(key);
    if (it != reg_decisions_.end()) return it->second;

    Decision d;
    const PolicyNode& n = in_.at(w);
    d.quit_weight = n.quit_weight;
    for (const PolicyChoice& c : n.choices) {
      if (c.kind == PolicyChoice::Kind::Switch) {
        PolicyChoice nc;
        nc.kind = PolicyChoice::Kind::Switch;
        nc.weight = c.weight;
        nc.children = {tail_node(c.children.front(), u, e)};
        d.choices.push_back(std::move(nc));
        continue;
      }
      if (c.plays == 0) {
        d.merge(decide_reg(c.children.front(), roots, u, e), c.weight);
        continue;
      }
      const int cls = std::bit_width(static_cast<unsigned>(c.plays)) - 1;
      int host = -1;
      for (std::size_t i = 0; i < roots.size(); ++i) {
        if (roots[i].cls >= cls) {
          host = static_cast<int>(i);
          break;
        }
      }
      const std::map<int, int> by_delta = children_by_delta(in_, w, c);
      if (host >= 0) {
        eliminate(d, c, by_delta, roots, host, u, e);
      } else {
        d.choices.push_back(new_root(c, by_delta, roots, cls, u, e));
      }
    }
    reg_decisions_.emplace(key, d);
    return d;
  }

  // Replay an eliminated block from the host root's stored outcomes: a
  // hypergeometric draw of successes, no plays, no time.
  void eliminate(Decision& d, const PolicyChoice& c,
                 const std::map<int, int>& by_delta, const Roots& roots,
                 int host, int u, int e) {
    const GroupRoot& r = roots[static_cast<std::size_t>(host)];
    const int ell = c.plays;
    if (r.a + r.b < ell) {
      throw std::logic_error("well-structuring: stored-outcome tape underflow");
    }
    const double denom = binom(r.a + r.b, ell);
    for (int j = std::max(0, ell - r.b); j <= std::min(r.a, ell); ++j) {
      const double h = binom(r.a, j) * binom(r.b, ell - j) / denom;
      if (h <= 0.0) continue;
      Roots next = roots;
      GroupRoot& nr = next[static_cast<std::size_t>(host)];
      nr.a -= j;
      nr.b -= ell - j;
      nr.quota -= 1;
      if (nr.quota == 0) next.erase(next.begin() + host);
      d.merge(decide_reg(by_delta.at(j), next, u, e), c.weight * h);
    }
  }

  // Open a new group root: play the block inflated by its stored-outcome
  // tape; each landing splits hypergeometrically between the outcomes the
  // input branches on now and the outcomes stored for later replays.
  PolicyChoice new_root(const PolicyChoice& c, const std::map<int, int>& by_delta,
                        const Roots& roots, int cls, int u, int e) {
    const int ell = c.plays;
    const int tsz = tape_size(ell);
    const int inflated = ell + tsz;
    if (inflated > delta_ + 1) {
      throw std::logic_error("well-structuring: inflated block exceeds play cap");
    }
    const int e_next = e + 2 * delta_ + 1;
    if (e + inflated > out_.horizon) {
      throw std::logic_error("well-structuring: inflated block past horizon");
    }
    PolicyChoice nc;
    nc.kind = PolicyChoice::Kind::PlayBlock;
    nc.weight = c.weight;
    nc.plays = inflated;
    const KernelRow row = kernel_row(dag_, u, inflated);
    for (const BlockOutcome& o : row.outcomes) {
      const int sigma = success_delta(dag_, u, o.node);
      Decision d;
      const double denom = binom(inflated, sigma);
      for (int j = std::max(0, sigma - tsz); j <= std::min(ell, sigma); ++j) {
        const double h = binom(ell, j) * binom(tsz, sigma - j) / denom;
        if (h <= 0.0) continue;
        Roots next = roots;
        next.push_back({cls, elim_quota_, sigma - j, tsz - (sigma - j)});
        d.merge(decide_reg(by_delta.at(j), next, o.node, e_next), h);
      }
      nc.children.push_back(make_regular(o.node, e_next, std::move(d)));
    }
    return nc;
  }

  Decision decide_tail(int x, int u, int e) {
    Decision d;
    const PolicyNode& n = in_.at(x);
    d.quit_weight = n.quit_weight;
    for (const PolicyChoice& c : n.choices) {
      if (c.plays == 0) {
        d.merge(decide_tail(c.children.front(), u, e), c.weight);
        continue;
      }
      if (e + 1 > out_.horizon) {
        throw std::logic_error("well-structuring: tail play past horizon");
      }
      const std::map<int, int> by_delta = children_by_delta(in_, x, c);
      PolicyChoice nc;
      nc.kind = PolicyChoice::Kind::PlayBlock;
      nc.weight = c.weight;
      nc.plays = 1;
      const KernelRow row = kernel_row(dag_, u, 1);
      for (const BlockOutcome& o : row.outcomes) {
        const int bit = success_delta(dag_, u, o.node);
        nc.children.push_back(tail_node(by_delta.at(bit), o.node, e + 1));
      }
      d.choices.push_back(std::move(nc));
    }
    return d;
  }

  // One-play-per-step tail, coupled to the input tail node `x` while the
  // output posterior `u` runs ahead by the unconsumed stored outcomes.
  int tail_node(int x, int u, int e) {
    const TailKey key{x, u, e};
    auto it = tail_nodes_.find(key);
    if (it != tail_nodes_.end()) return it->second;
    const int id = make_nodelay(u, e, decide_tail(x, u, e));
    tail_nodes_.emplace(key, id);
    return id;
  }

  const SingleArmPolicy& in_;
  const OutcomeDag& dag_;
  int delta_ = 0;
  double alpha_ = 0.0;
  int elim_quota_ = 0;
  SingleArmPolicy out_;
  std::map<RegKey, Decision> reg_decisions_;
  std::map<TailKey, int> tail_nodes_;
};

}  // namespace

// ---------------------------------------------------------------------------

SingleArmPolicy to_block_structured(const StepPolicy& p, int delay, int horizon,
                                    TransformReport* report) {
  if (!p.dag) throw std::invalid_argument("block structuring: missing DAG");
  if (delay != p.delay || horizon != p.horizon) {
    throw std::invalid_argument(
        "block structuring: delay/horizon do not match the strategy");
  }
  if (delay < 0 || delay > 3) {
    throw std::invalid_argument("block structuring: delay must lie in [0, 3]");
  }
  if (horizon < 0 || horizon > 24) {
    throw std::invalid_argument("block structuring: horizon must lie in [0, 24]");
  }
  if (!p.dag->exchangeable) {
    throw std::invalid_argument(
        "block structuring: outcome law must be exchangeable "
        "(count-keyed DAG)");
  }

  SingleArmPolicy out = BlockStructurer(p).run();
  if (report) {
    const PolicyValue in_v = evaluate_step_policy(p);
    const PolicyValue out_v = evaluate(out);
    set_value_report(report,
                     "block-structuring: R(out) >= R(in), N(out) <= N(in)",
                     in_v, out_v,
                     std::min(out_v.reward - in_v.reward, in_v.plays - out_v.plays));
  }
  return out;
}

SingleArmPolicy to_delay_free(const SingleArmPolicy& p, double c,
                              TransformReport* report) {
  if (!(c > 0.0) || c > 1.0) {
    throw std::invalid_argument("delay-free conversion: c must lie in (0, 1]");
  }
  for (int i = 0; i < p.size(); ++i) {
    if (p.at(i).state.mode != BlockMode::Regular) {
      throw std::invalid_argument(
          "delay-free conversion: input must be block-structured (all-regular)");
    }
    for (const PolicyChoice& ch : p.at(i).choices) {
      if (ch.kind != PolicyChoice::Kind::PlayBlock) {
        throw std::invalid_argument(
            "delay-free conversion: input must not already contain switches");
      }
    }
  }

  SingleArmPolicy out = DelayFreer(p, c).run();
  if (report) {
    const PolicyValue in_v = evaluate(p);
    const PolicyValue out_v = evaluate(out);
    set_value_report(
        report, "delay-free conversion: R(out) >= R(in), N(out) <= (1+1/c)*N(in)",
        in_v, out_v,
        std::min(out_v.reward - in_v.reward,
                 (1.0 + 1.0 / c) * in_v.plays - out_v.plays));
  }
  return out;
}

SingleArmPolicy to_well_structured(const SingleArmPolicy& p, double alpha,
                                   double c, int q_blocks,
                                   TransformReport* report) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::invalid_argument("well-structuring: alpha must lie in (0, 1]");
  }
  if (c > alpha / (alpha + 2.0) + 1e-12) {
    throw std::invalid_argument("well-structuring: requires c <= alpha/(alpha+2)");
  }
  if (!(p.delay_free_c > 0.0)) {
    throw std::invalid_argument(
        "well-structuring: input must be declared delay-free");
  }
  if (std::abs(p.delay_free_c - c) > 1e-9) {
    throw std::invalid_argument(
        "well-structuring: c does not match the input's declaration");
  }
  if (!p.dag->exchangeable) {
    throw std::invalid_argument(
        "well-structuring: outcome law must be exchangeable (count-keyed DAG)");
  }
  WellStructurer ws(p, alpha);
  for (int i = 0; i < p.size(); ++i) {
    if (p.at(i).state.mode != BlockMode::Regular) continue;
    for (const PolicyChoice& ch : p.at(i).choices) {
      if (ch.kind != PolicyChoice::Kind::PlayBlock || ch.plays == 0) continue;
      if (ch.plays + ws.tape_size(ch.plays) > p.delay + 1) {
        throw std::invalid_argument(
            "well-structuring: a block of " + std::to_string(ch.plays) +
            " plays cannot absorb its stored-outcome tape within delay+1");
      }
    }
  }
  const int k_in = max_regular_blocks_per_path(p);
  if (k_in > q_blocks) {
    throw std::invalid_argument(
        "well-structuring: input runs " + std::to_string(k_in) +
        " nonempty regular blocks on some path, above the declared budget " +
        std::to_string(q_blocks));
  }

  SingleArmPolicy out = ws.run();
  if (report) {
    const PolicyValue in_v = evaluate(p);
    const PolicyValue out_v = evaluate(out);
    const int k_out = max_regular_blocks_per_path(out);
    const int allowance =
        ceil_int(alpha * q_blocks) + well_structured_additive(p.delay, alpha);
    const double audit_slack = static_cast<double>(allowance - k_out);
    set_value_report(
        report,
        "well-structuring: R(out) >= R(in), N(out) <= (1+2/alpha)*N(in), "
        "per-path nonempty regular blocks <= ceil(alpha*Q) + "
        "ceil(log2(delay)/alpha)",
        in_v, out_v,
        std::min({out_v.reward - in_v.reward,
                  (1.0 + 2.0 / alpha) * in_v.plays - out_v.plays, audit_slack}));
  }
  return out;
}

SingleArmPolicy truncate_half(const SingleArmPolicy& p, int horizon,
                              TransformReport* report) {
  if (!(p.well_structured_alpha > 0.0)) {
    throw std::invalid_argument(
        "truncation: input must be declared well-structured");
  }
  if (horizon < 0) throw std::invalid_argument("truncation: negative horizon");
  const int cut = horizon / 2;
  const OutcomeDag& dag = *p.dag;

  SingleArmPolicy out;
  out.dag = p.dag;
  out.delay = p.delay;
  out.horizon = p.horizon;

  std::vector<int> rewritten(static_cast<std::size_t>(p.size()), -1);
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

  std::vector<int> order = topo_order(p);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int i = *it;
    const PolicyNode& n = p.at(i);
    if (n.state.elapsed >= cut) {
      rewritten[static_cast<std::size_t>(i)] =
          make_quit(n.state.dag_node, n.state.elapsed, n.state.mode);
      continue;
    }
    PolicyNode copy;
    copy.state = n.state;
    copy.quit_weight = n.quit_weight;
    for (const PolicyChoice& c : n.choices) {
      PolicyChoice nc = c;
      if (c.kind == PolicyChoice::Kind::PlayBlock && c.plays > 0 &&
          n.state.elapsed + c.plays > cut) {
        nc.plays = cut - n.state.elapsed;
        nc.children.clear();
        const int span = block_span(n.state.mode, p.delay);
        for (const BlockOutcome& o :
             kernel_row(dag, n.state.dag_node, nc.plays).outcomes) {
          nc.children.push_back(
              make_quit(o.node, n.state.elapsed + span, n.state.mode));
        }
      } else {
        for (int& ch : nc.children) ch = rewritten[static_cast<std::size_t>(ch)];
      }
      copy.choices.push_back(std::move(nc));
    }
    out.nodes.push_back(std::move(copy));
    rewritten[static_cast<std::size_t>(i)] = out.size() - 1;
  }
  out.root = rewritten[static_cast<std::size_t>(p.root)];
  validate_policy(out);

  if (report) {
    const PolicyValue in_v = evaluate(p);
    const PolicyValue out_v = evaluate(out);
    set_value_report(
        report, "truncation at half horizon: R(out) >= R(in)/8, N(out) <= N(in)",
        in_v, out_v,
        std::min(out_v.reward - in_v.reward / 8.0, in_v.plays - out_v.plays));
  }
  return out;
}

int max_regular_blocks_per_path(const SingleArmPolicy& p) {
  std::vector<int> order = topo_order(p);
  std::vector<int> depth(static_cast<std::size_t>(p.size()), 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const PolicyNode& n = p.at(*it);
    int best = 0;
    for (const PolicyChoice& c : n.choices) {
      if (c.weight <= 0.0) continue;
      int below = 0;
      for (int ch : c.children) {
        below = std::max(below, depth[static_cast<std::size_t>(ch)]);
      }
      const int own = (c.kind == PolicyChoice::Kind::PlayBlock && c.plays >= 1 &&
                       n.state.mode == BlockMode::Regular)
                          ? 1
                          : 0;
      best = std::max(best, own + below);
    }
    depth[static_cast<std::size_t>(*it)] = best;
  }
  return depth[static_cast<std::size_t>(p.root)];
}

int well_structured_additive(int delay, double alpha) {
  if (delay <= 1) return 0;
  return ceil_int(std::log2(static_cast<double>(delay)) / alpha);
}

PipelineResult transform_pipeline(const StepPolicy& p, double alpha, double c) {
  PipelineResult result;
  result.reports.resize(5);
  SingleArmPolicy bs =
      to_block_structured(p, p.delay, p.horizon, &result.reports[0]);
  SingleArmPolicy df = to_delay_free(bs, c, &result.reports[1]);
  const int q_blocks = std::max(1, max_regular_blocks_per_path(df));
  SingleArmPolicy ws =
      to_well_structured(df, alpha, c, q_blocks, &result.reports[2]);
  result.policy = truncate_half(ws, 2 * p.horizon, &result.reports[3]);

  const PolicyValue in_v = result.reports[0].input_value;
  const PolicyValue out_v = result.reports[3].output_value;
  const double gamma = 2.0 * (1.0 + 1.0 / alpha) * (1.0 + 2.0 / alpha);
  set_value_report(
      &result.reports[4],
      "composition: R(final) >= alpha*R(input), N(final) <= gamma*N(input)",
      in_v, out_v,
      std::min(out_v.reward - alpha * in_v.reward,
               gamma * in_v.plays - out_v.plays));
  return result;
}

}  // namespace dmab
