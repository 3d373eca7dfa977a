#include "dmab/instance_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "json.hpp"

namespace dmab {
namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument(what);
}

const ordered_json& require(const ordered_json& j, const char* key,
                            const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) fail(ctx + ": missing field \"" + key + "\"");
  return j.at(key);
}

std::string require_str(const ordered_json& j, const char* key,
                        const std::string& ctx) {
  const ordered_json& v = require(j, key, ctx);
  if (!v.is_string()) fail(ctx + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

long long require_int(const ordered_json& j, const char* key,
                      const std::string& ctx) {
  const ordered_json& v = require(j, key, ctx);
  if (!v.is_number_integer()) fail(ctx + ": \"" + key + "\" must be an integer");
  return v.get<long long>();
}

double require_num(const ordered_json& j, const char* key,
                   const std::string& ctx) {
  const ordered_json& v = require(j, key, ctx);
  if (!v.is_number()) fail(ctx + ": \"" + key + "\" must be a number");
  return v.get<double>();
}

double optional_num(const ordered_json& j, const char* key, double fallback,
                    const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const ordered_json& v = j.at(key);
  if (!v.is_number()) fail(ctx + ": \"" + key + "\" must be a number");
  return v.get<double>();
}

long long optional_int(const ordered_json& j, const char* key,
                       long long fallback, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const ordered_json& v = j.at(key);
  if (!v.is_number_integer()) fail(ctx + ": \"" + key + "\" must be an integer");
  return v.get<long long>();
}

std::string shortest(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// ---------------------------------------------------------------------------
// explicit posterior DAGs

std::shared_ptr<const OutcomeDag> load_explicit_dag(const ordered_json& jd,
                                                    const std::string& ctx) {
  const ordered_json& jstates = require(jd, "states", ctx);
  if (!jstates.is_array() || jstates.empty())
    fail(ctx + ": \"states\" must be a nonempty array");

  struct RawState {
    std::string id;
    double mean = 0.0;
    bool frontier = true;
    double p1 = 0.0;
    int succ = -1;
    int fail_to = -1;
  };
  std::vector<RawState> raw;
  std::map<std::string, int> by_id;
  std::vector<std::pair<std::string, std::string>> child_ids;  // (succ, fail)
  for (const ordered_json& js : jstates) {
    const std::string sc =
        ctx + ", state " + std::to_string(raw.size());
    RawState r;
    r.id = require_str(js, "id", sc);
    if (r.id.empty()) fail(sc + ": state id must be nonempty");
    if (!by_id.emplace(r.id, static_cast<int>(raw.size())).second)
      fail(ctx + ": duplicate state id \"" + r.id + "\"");
    r.mean = require_num(js, "mean", sc);
    if (!(r.mean >= 0.0 && r.mean <= 1.0))
      fail(sc + " (\"" + r.id + "\"): mean must lie in [0, 1]");
    const ordered_json& edges = require(js, "edges", sc);
    if (!edges.is_array()) fail(sc + ": \"edges\" must be an array");
    std::string succ_id;
    std::string fail_id;
    if (edges.empty()) {
      r.frontier = true;
    } else if (edges.size() == 2) {
      r.frontier = false;
      bool seen1 = false;
      bool seen0 = false;
      double p0 = 0.0;
      for (const ordered_json& je : edges) {
        const long long outcome = require_int(je, "outcome", sc);
        const double prob = require_num(je, "prob", sc);
        const std::string child = require_str(je, "child", sc);
        if (!(prob >= 0.0 && prob <= 1.0))
          fail(sc + " (\"" + r.id + "\"): edge prob must lie in [0, 1]");
        if (outcome == 1 && !seen1) {
          seen1 = true;
          r.p1 = prob;
          succ_id = child;
        } else if (outcome == 0 && !seen0) {
          seen0 = true;
          p0 = prob;
          fail_id = child;
        } else {
          fail(sc + " (\"" + r.id + "\"): edges must cover outcomes 1 and 0 once each");
        }
      }
      if (!seen1 || !seen0)
        fail(sc + " (\"" + r.id + "\"): edges must cover outcomes 1 and 0 once each");
      if (std::abs(r.p1 + p0 - 1.0) > kMassTol)
        fail(sc + " (\"" + r.id + "\"): edge probabilities must sum to 1");
    } else {
      fail(sc + " (\"" + r.id + "\"): a state has zero edges or one per outcome");
    }
    raw.push_back(r);
    child_ids.emplace_back(succ_id, fail_id);
  }
  const int n = static_cast<int>(raw.size());
  for (int i = 0; i < n; ++i) {
    if (raw[static_cast<std::size_t>(i)].frontier) continue;
    const auto& [sid, fid] = child_ids[static_cast<std::size_t>(i)];
    const auto si = by_id.find(sid);
    const auto fi = by_id.find(fid);
    if (si == by_id.end())
      fail(ctx + ": state \"" + raw[static_cast<std::size_t>(i)].id +
           "\" points to unknown child \"" + sid + "\"");
    if (fi == by_id.end())
      fail(ctx + ": state \"" + raw[static_cast<std::size_t>(i)].id +
           "\" points to unknown child \"" + fid + "\"");
    raw[static_cast<std::size_t>(i)].succ = si->second;
    raw[static_cast<std::size_t>(i)].fail_to = fi->second;
  }

  // Leveling pass from the root (the first listed state): each state must
  // sit at one depth with one success count however it is reached.
  std::vector<int> depth(static_cast<std::size_t>(n), -1);
  std::vector<int> successes(static_cast<std::size_t>(n), -1);
  std::vector<int> queue{0};
  depth[0] = 0;
  successes[0] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int u = queue[head];
    const RawState& r = raw[static_cast<std::size_t>(u)];
    if (r.frontier) continue;
    const int children[2] = {r.succ, r.fail_to};
    const int gain[2] = {1, 0};
    for (int k = 0; k < 2; ++k) {
      const int v = children[k];
      const int d = depth[static_cast<std::size_t>(u)] + 1;
      const int s = successes[static_cast<std::size_t>(u)] + gain[k];
      if (depth[static_cast<std::size_t>(v)] < 0) {
        depth[static_cast<std::size_t>(v)] = d;
        successes[static_cast<std::size_t>(v)] = s;
        queue.push_back(v);
      } else if (depth[static_cast<std::size_t>(v)] != d) {
        fail(ctx + ": state \"" + raw[static_cast<std::size_t>(v)].id +
             "\" is reached at two different depths; the DAG must be leveled");
      } else if (successes[static_cast<std::size_t>(v)] != s) {
        fail(ctx + ": state \"" + raw[static_cast<std::size_t>(v)].id +
             "\" is reached with two different success counts");
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (depth[static_cast<std::size_t>(i)] < 0)
      fail(ctx + ": state \"" + raw[static_cast<std::size_t>(i)].id +
           "\" is unreachable from the root");
  }
  std::map<std::pair<int, int>, int> seen;
  for (int i = 0; i < n; ++i) {
    const auto key = std::make_pair(depth[static_cast<std::size_t>(i)],
                                    successes[static_cast<std::size_t>(i)]);
    const auto [it, fresh] = seen.emplace(key, i);
    if (!fresh)
      fail(ctx + ": states \"" + raw[static_cast<std::size_t>(it->second)].id +
           "\" and \"" + raw[static_cast<std::size_t>(i)].id +
           "\" share depth and success count; block executors identify "
           "outcomes by success count, so these must be one state");
  }

  // Reindex levels by ascending success count: block expansions enumerate
  // landing states in index order and executors index them by count.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::make_pair(depth[static_cast<std::size_t>(a)],
                          successes[static_cast<std::size_t>(a)]) <
           std::make_pair(depth[static_cast<std::size_t>(b)],
                          successes[static_cast<std::size_t>(b)]);
  });
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;

  OutcomeDag dag;
  dag.root = 0;
  for (int i = 0; i < n; ++i) {
    const int src = order[static_cast<std::size_t>(i)];
    const RawState& r = raw[static_cast<std::size_t>(src)];
    DagState st;
    st.key = r.id;
    st.depth = depth[static_cast<std::size_t>(src)];
    st.successes = successes[static_cast<std::size_t>(src)];
    st.mean = r.mean;
    st.success_prob = r.frontier ? 0.0 : r.p1;
    st.effective_reward = 0.0;  // rebased on the arm's bid at build time
    st.success_child = r.frontier ? -1 : pos[static_cast<std::size_t>(r.succ)];
    st.failure_child = r.frontier ? -1 : pos[static_cast<std::size_t>(r.fail_to)];
    dag.max_depth = std::max(dag.max_depth, st.depth);
    dag.states.push_back(std::move(st));
  }

  const double worst = validate_martingale(dag);
  if (worst > kLoadMartingaleTol)
    fail(ctx + ": martingale violation " + shortest(worst) +
         " exceeds the 1e-06 load tolerance");

  // Exchangeability: success-then-failure and failure-then-success commute
  // in landing state and in probability everywhere both are possible.
  bool exch = true;
  for (const DagState& st : dag.states) {
    if (st.success_child < 0) continue;
    const DagState& su = dag.at(st.success_child);
    const DagState& fu = dag.at(st.failure_child);
    if (su.success_child < 0 || fu.success_child < 0) continue;
    if (su.failure_child != fu.success_child) {
      exch = false;
      break;
    }
    const double p10 = st.success_prob * (1.0 - su.success_prob);
    const double p01 = (1.0 - st.success_prob) * fu.success_prob;
    if (std::abs(p10 - p01) > 1e-12) {
      exch = false;
      break;
    }
  }
  dag.exchangeable = exch;
  return std::make_shared<const OutcomeDag>(std::move(dag));
}

ordered_json explicit_dag_to_json(const OutcomeDag& dag) {
  ordered_json jstates = ordered_json::array();
  for (const DagState& st : dag.states) {
    ordered_json js;
    js["id"] = st.key;
    js["mean"] = st.mean;
    ordered_json edges = ordered_json::array();
    if (st.success_child >= 0) {
      edges.push_back({{"outcome", 1},
                       {"prob", st.success_prob},
                       {"child", dag.at(st.success_child).key}});
      edges.push_back({{"outcome", 0},
                       {"prob", 1.0 - st.success_prob},
                       {"child", dag.at(st.failure_child).key}});
    }
    js["edges"] = std::move(edges);
    jstates.push_back(std::move(js));
  }
  ordered_json jd;
  jd["states"] = std::move(jstates);
  return jd;
}

// ---------------------------------------------------------------------------
// priors and arms

PriorSpec parse_prior(const ordered_json& jp, const std::string& ctx) {
  if (!jp.is_object()) fail(ctx + ": \"prior\" must be an object");
  if (jp.contains("alpha1") || jp.contains("alpha0")) {
    const long long a1 = require_int(jp, "alpha1", ctx);
    const long long a0 = require_int(jp, "alpha0", ctx);
    if (a1 < 1 || a0 < 1) fail(ctx + ": Beta parameters must be positive integers");
    return PriorSpec::beta(static_cast<int>(a1), static_cast<int>(a0));
  }
  if (jp.contains("weights") || jp.contains("means")) {
    const ordered_json& jw = require(jp, "weights", ctx);
    const ordered_json& jm = require(jp, "means", ctx);
    if (!jw.is_array() || !jm.is_array() || jw.empty() || jw.size() != jm.size())
      fail(ctx + ": mixture \"weights\" and \"means\" must be equal-length nonempty arrays");
    std::vector<double> w;
    std::vector<double> m;
    double total = 0.0;
    for (std::size_t k = 0; k < jw.size(); ++k) {
      if (!jw[k].is_number() || !jm[k].is_number())
        fail(ctx + ": mixture entries must be numbers");
      w.push_back(jw[k].get<double>());
      m.push_back(jm[k].get<double>());
      if (w.back() < 0.0) fail(ctx + ": mixture weights must be nonnegative");
      if (m.back() < 0.0 || m.back() > 1.0)
        fail(ctx + ": mixture means must lie in [0, 1]");
      total += w.back();
    }
    if (std::abs(total - 1.0) > kMassTol)
      fail(ctx + ": mixture weights must sum to 1");
    return PriorSpec::mixture(std::move(w), std::move(m));
  }
  if (jp.contains("dag")) {
    return PriorSpec::explicit_dag(load_explicit_dag(jp.at("dag"), ctx));
  }
  fail(ctx + ": prior must be {alpha1, alpha0}, {weights, means}, or {dag}");
}

ordered_json prior_to_json(const PriorSpec& prior, const std::string& ctx) {
  ordered_json jp;
  switch (prior.kind) {
    case PriorSpec::Kind::Beta:
      jp["alpha1"] = prior.alpha1;
      jp["alpha0"] = prior.alpha0;
      break;
    case PriorSpec::Kind::Mixture:
      jp["weights"] = prior.weights;
      jp["means"] = prior.means;
      break;
    case PriorSpec::Kind::ExplicitDag:
      if (!prior.dag) fail(ctx + ": explicit prior has no DAG attached");
      jp["dag"] = explicit_dag_to_json(*prior.dag);
      break;
  }
  return jp;
}

ArmSpec parse_arm(const ordered_json& ja, const std::string& ctx) {
  if (!ja.is_object()) fail(ctx + ": each arm must be an object");
  ArmSpec arm;
  arm.id = require_str(ja, "id", ctx);
  if (arm.id.empty()) fail(ctx + ": arm id must be nonempty");
  const std::string actx = ctx + " (id \"" + arm.id + "\")";
  arm.prior = parse_prior(require(ja, "prior", actx), actx);
  const long long delay = optional_int(ja, "delay", 0, actx);
  if (delay < 0) fail(actx + ": delay must be nonnegative");
  arm.delay = static_cast<int>(delay);
  if (ja.contains("budget") && !ja.at("budget").is_null()) {
    arm.budget = require_num(ja, "budget", actx);
    if (!(arm.budget >= 0.0) || std::isnan(arm.budget))
      fail(actx + ": budget must be nonnegative");
  } else {
    arm.budget = kInfiniteBudget;
  }
  arm.bid = optional_num(ja, "bid", 1.0, actx);
  if (!(arm.bid > 0.0) || !std::isfinite(arm.bid))
    fail(actx + ": bid must be positive");
  return arm;
}

ordered_json arm_to_json(const ArmSpec& arm) {
  ordered_json ja;
  ja["id"] = arm.id;
  ja["prior"] = prior_to_json(arm.prior, "arm \"" + arm.id + "\"");
  ja["delay"] = arm.delay;
  if (!is_unbudgeted(arm.budget)) ja["budget"] = arm.budget;
  ja["bid"] = arm.bid;
  return ja;
}

ordered_json parse_document(const std::string& text) {
  return ordered_json::parse(text);
}

std::string render(const ordered_json& j) { return j.dump(2) + "\n"; }

// Converts a byte offset from a parse error into line:column.
std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

template <typename Loader>
auto load_file(const std::string& path, Loader loader)
    -> decltype(loader(std::string())) {
  const std::string text = read_text_file(path);
  try {
    return loader(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ":" + locate(text, e.byte) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

const char* mode_name(BlockMode mode) {
  return mode == BlockMode::Regular ? "regular" : "no-delay";
}

BlockMode parse_mode(const std::string& name, const std::string& ctx) {
  if (name == "regular") return BlockMode::Regular;
  if (name == "no-delay") return BlockMode::NoDelay;
  fail(ctx + ": mode must be \"regular\" or \"no-delay\"");
}

const char* action_name(StepAction a) {
  switch (a) {
    case StepAction::Play: return "play";
    case StepAction::Wait: return "wait";
    case StepAction::Quit: return "quit";
  }
  return "quit";
}

StepAction parse_action(const std::string& name, const std::string& ctx) {
  if (name == "play") return StepAction::Play;
  if (name == "wait") return StepAction::Wait;
  if (name == "quit") return StepAction::Quit;
  fail(ctx + ": action must be \"play\", \"wait\", or \"quit\"");
}

ordered_json occupancy_rows(const LpSolution& sol,
                            const std::vector<ArmSpec>& arms) {
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < sol.arms.size(); ++i) {
    ordered_json row;
    row["id"] = i < arms.size() ? arms[i].id : std::to_string(i);
    row["reward"] = sol.arms[i].reward;
    row["plays"] = sol.arms[i].plays;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// files

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw std::runtime_error("error while reading " + path);
  return std::move(buf).str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("error while writing " + path);
}

// ---------------------------------------------------------------------------
// instances

std::string save_instance(const Instance& inst) {
  ordered_json j;
  j["horizon"] = inst.horizon;
  ordered_json arms = ordered_json::array();
  for (const ArmSpec& arm : inst.arms) arms.push_back(arm_to_json(arm));
  j["arms"] = std::move(arms);
  return render(j);
}

Instance load_instance(const std::string& text) {
  const ordered_json j = parse_document(text);
  if (!j.is_object()) fail("instance: top level must be an object");
  Instance inst;
  const long long horizon = require_int(j, "horizon", "instance");
  if (horizon < 0) fail("instance: horizon must be nonnegative");
  inst.horizon = static_cast<int>(horizon);
  const ordered_json& jarms = require(j, "arms", "instance");
  if (!jarms.is_array() || jarms.empty())
    fail("instance: \"arms\" must be a nonempty array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < jarms.size(); ++i) {
    inst.arms.push_back(parse_arm(jarms[i], "arm " + std::to_string(i)));
    if (!ids.insert(inst.arms.back().id).second)
      fail("instance: duplicate arm id \"" + inst.arms.back().id + "\"");
  }
  return inst;
}

Instance load_instance_file(const std::string& path) {
  return load_file(path, [](const std::string& text) { return load_instance(text); });
}

// ---------------------------------------------------------------------------
// block policies

std::string save_policy(const SingleArmPolicy& policy) {
  if (!policy.dag) fail("policy dump: the policy has no DAG attached");
  const OutcomeDag& dag = *policy.dag;
  ordered_json j;
  j["kind"] = "policy";
  j["delay"] = policy.delay;
  j["horizon"] = policy.horizon;
  j["root"] = policy.root;
  j["delay_free_c"] = policy.delay_free_c;
  j["well_structured_alpha"] = policy.well_structured_alpha;
  ordered_json nodes = ordered_json::array();
  for (int i = 0; i < policy.size(); ++i) {
    const PolicyNode& node = policy.at(i);
    ordered_json jn;
    jn["id"] = i;
    ordered_json js;
    js["node"] = dag.at(node.state.dag_node).key;
    js["elapsed"] = node.state.elapsed;
    js["mode"] = mode_name(node.state.mode);
    jn["state"] = std::move(js);
    jn["quit"] = node.quit_weight;
    ordered_json choices = ordered_json::array();
    for (const PolicyChoice& ch : node.choices) {
      ordered_json jc;
      if (ch.kind == PolicyChoice::Kind::PlayBlock) {
        jc["kind"] = "block";
        jc["weight"] = ch.weight;
        jc["plays"] = ch.plays;
        jc["children"] = ch.children;
      } else {
        jc["kind"] = "switch";
        jc["weight"] = ch.weight;
        jc["child"] = ch.children.empty() ? -1 : ch.children.front();
      }
      choices.push_back(std::move(jc));
    }
    jn["choices"] = std::move(choices);
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  return render(j);
}

SingleArmPolicy load_policy(const std::string& text,
                            std::shared_ptr<const OutcomeDag> dag) {
  if (!dag) fail("policy load: a DAG is required to resolve posterior keys");
  const ordered_json j = parse_document(text);
  if (!j.is_object() || require_str(j, "kind", "policy") != "policy")
    fail("policy: document kind must be \"policy\"");
  SingleArmPolicy p;
  p.dag = dag;
  p.delay = static_cast<int>(require_int(j, "delay", "policy"));
  p.horizon = static_cast<int>(require_int(j, "horizon", "policy"));
  p.root = static_cast<int>(require_int(j, "root", "policy"));
  p.delay_free_c = require_num(j, "delay_free_c", "policy");
  p.well_structured_alpha = require_num(j, "well_structured_alpha", "policy");
  const ordered_json& jnodes = require(j, "nodes", "policy");
  if (!jnodes.is_array() || jnodes.empty())
    fail("policy: \"nodes\" must be a nonempty array");
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const std::string ctx = "policy node " + std::to_string(i);
    const ordered_json& jn = jnodes[i];
    if (require_int(jn, "id", ctx) != static_cast<long long>(i))
      fail(ctx + ": ids must equal positions");
    const ordered_json& js = require(jn, "state", ctx);
    PolicyNode node;
    const std::string key = require_str(js, "node", ctx);
    node.state.dag_node = dag->find(key);
    if (node.state.dag_node < 0)
      fail(ctx + ": posterior key \"" + key + "\" is not in the DAG");
    node.state.elapsed = static_cast<int>(require_int(js, "elapsed", ctx));
    node.state.mode = parse_mode(require_str(js, "mode", ctx), ctx);
    node.quit_weight = require_num(jn, "quit", ctx);
    const ordered_json& jchoices = require(jn, "choices", ctx);
    if (!jchoices.is_array()) fail(ctx + ": \"choices\" must be an array");
    for (const ordered_json& jc : jchoices) {
      PolicyChoice ch;
      const std::string kind = require_str(jc, "kind", ctx);
      ch.weight = require_num(jc, "weight", ctx);
      if (kind == "block") {
        ch.kind = PolicyChoice::Kind::PlayBlock;
        ch.plays = static_cast<int>(require_int(jc, "plays", ctx));
        const ordered_json& jk = require(jc, "children", ctx);
        if (!jk.is_array()) fail(ctx + ": \"children\" must be an array");
        for (const ordered_json& c : jk) {
          if (!c.is_number_integer()) fail(ctx + ": children must be integers");
          ch.children.push_back(c.get<int>());
        }
      } else if (kind == "switch") {
        ch.kind = PolicyChoice::Kind::Switch;
        ch.children.push_back(static_cast<int>(require_int(jc, "child", ctx)));
      } else {
        fail(ctx + ": choice kind must be \"block\" or \"switch\"");
      }
      node.choices.push_back(std::move(ch));
    }
    p.nodes.push_back(std::move(node));
  }
  validate_policy(p);
  return p;
}

// ---------------------------------------------------------------------------
// step policies

std::string save_step_policy(const StepPolicy& policy) {
  if (!policy.dag) fail("step policy dump: missing outcome DAG");
  if (!policy.rule) fail("step policy dump: missing rule");
  if (policy.delay < 0 || policy.delay > 30)
    fail("step policy dump: delay must lie in [0, 30]");
  if (policy.horizon < 0) fail("step policy dump: negative horizon");
  if (policy.dag->max_depth < policy.horizon)
    fail("step policy dump: DAG shallower than the horizon");

  const OutcomeDag& dag = *policy.dag;
  const int delta = policy.delay;
  // (t, disclosed node, pending window) -> action over exactly the
  // observations the forward evaluation can reach.
  std::map<std::tuple<int, int, std::uint32_t>, StepAction> table;
  std::set<std::pair<int, std::uint32_t>> cur{{dag.root, 0u}};
  for (int t = 0; t < policy.horizon; ++t) {
    std::set<std::pair<int, std::uint32_t>> next;
    for (const auto& [node, pending] : cur) {
      const StepAction a = policy.action({t, node, pending});
      table[{t, node, pending}] = a;
      if (a == StepAction::Quit) continue;
      const std::uint32_t play_bit = a == StepAction::Play ? 1u : 0u;
      std::uint32_t resolved;
      std::uint32_t np;
      if (delta == 0) {
        resolved = play_bit;
        np = 0u;
      } else {
        resolved = (pending >> (delta - 1)) & 1u;
        np = ((pending << 1) | play_bit) & ((1u << delta) - 1u);
      }
      if (resolved) {
        const DagState& st = dag.at(node);
        next.insert({st.success_child, np});
        next.insert({st.failure_child, np});
      } else {
        next.insert({node, np});
      }
    }
    cur = std::move(next);
  }

  ordered_json j;
  j["kind"] = "step-policy";
  j["delay"] = policy.delay;
  j["horizon"] = policy.horizon;
  ordered_json entries = ordered_json::array();
  for (const auto& [obs, action] : table) {
    const auto& [t, node, pending] = obs;
    ordered_json je;
    je["t"] = t;
    je["node"] = dag.at(node).key;
    je["pending"] = pending;
    je["action"] = action_name(action);
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  return render(j);
}

StepPolicy load_step_policy(const std::string& text,
                            std::shared_ptr<const OutcomeDag> dag) {
  if (!dag) fail("step policy load: a DAG is required to resolve posterior keys");
  const ordered_json j = parse_document(text);
  if (!j.is_object() || require_str(j, "kind", "step policy") != "step-policy")
    fail("step policy: document kind must be \"step-policy\"");
  StepPolicy sp;
  sp.dag = dag;
  sp.delay = static_cast<int>(require_int(j, "delay", "step policy"));
  sp.horizon = static_cast<int>(require_int(j, "horizon", "step policy"));
  const ordered_json& jentries = require(j, "entries", "step policy");
  if (!jentries.is_array()) fail("step policy: \"entries\" must be an array");
  auto table = std::make_shared<
      std::map<std::tuple<int, int, std::uint32_t>, StepAction>>();
  for (std::size_t i = 0; i < jentries.size(); ++i) {
    const std::string ctx = "step policy entry " + std::to_string(i);
    const ordered_json& je = jentries[i];
    const int t = static_cast<int>(require_int(je, "t", ctx));
    const std::string key = require_str(je, "node", ctx);
    const int node = dag->find(key);
    if (node < 0) fail(ctx + ": posterior key \"" + key + "\" is not in the DAG");
    const long long pending = require_int(je, "pending", ctx);
    if (pending < 0) fail(ctx + ": pending window must be nonnegative");
    const StepAction action = parse_action(require_str(je, "action", ctx), ctx);
    const auto [it, fresh] = table->emplace(
        std::make_tuple(t, node, static_cast<std::uint32_t>(pending)), action);
    if (!fresh) fail(ctx + ": duplicate observation");
  }
  sp.rule = [table, dag](const StepObservation& o) -> StepAction {
    const auto it = table->find({o.t, o.disclosed, o.pending});
    if (it == table->end())
      throw std::runtime_error(
          "step policy table has no entry for step " + std::to_string(o.t) +
          ", posterior \"" + dag->at(o.disclosed).key + "\", pending " +
          std::to_string(o.pending));
    return it->second;
  };
  return sp;
}

// ---------------------------------------------------------------------------
// reports

std::string solver_report(const LpSolution& sol,
                          const std::vector<ArmSpec>& arms,
                          const LpSolution* scaled) {
  ordered_json j;
  j["kind"] = "solver-report";
  j["lambda"] = sol.lambda;
  j["objective"] = sol.objective;
  j["expected_plays"] = sol.expected_plays;
  j["play_budget"] = sol.budget;
  j["dual_upper"] = sol.dual_upper;
  j["duality_gap"] = sol.dual_upper - sol.objective;
  j["mix_high_weight"] = sol.mix_high_weight;
  j["iterations"] = sol.iterations;
  j["arms"] = occupancy_rows(sol, arms);
  if (scaled != nullptr) {
    ordered_json js;
    js["gamma"] = scaled->budget > 0.0 ? sol.budget / scaled->budget : 0.0;
    js["objective"] = scaled->objective;
    js["expected_plays"] = scaled->expected_plays;
    js["play_budget"] = scaled->budget;
    js["arms"] = occupancy_rows(*scaled, arms);
    j["scaled"] = std::move(js);
  }
  return render(j);
}

std::string transform_report_text(const std::vector<TransformReport>& reports) {
  ordered_json j;
  j["kind"] = "transform-report";
  ordered_json stages = ordered_json::array();
  for (const TransformReport& r : reports) {
    ordered_json js;
    js["bound"] = r.bound_checked;
    js["input_reward"] = r.input_value.reward;
    js["input_plays"] = r.input_value.plays;
    js["output_reward"] = r.output_value.reward;
    js["output_plays"] = r.output_value.plays;
    js["slack"] = r.slack;
    stages.push_back(std::move(js));
  }
  j["stages"] = std::move(stages);
  return render(j);
}

std::string trace_to_text(const SimTrace& trace) {
  std::string out;
  for (const TraceEvent& ev : trace) {
    ordered_json j;
    j["step"] = ev.step;
    j["arm"] = ev.arm;
    j["action"] = ev.arm >= 0 ? "play" : "idle";
    j["outcome"] = ev.outcome;
    j["reward"] = ev.reward;
    ordered_json disclosed = ordered_json::array();
    for (const Disclosure& d : ev.disclosed) {
      disclosed.push_back({{"arm", d.arm}, {"outcome", d.outcome}});
    }
    j["disclosed"] = std::move(disclosed);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string estimates_csv_header() {
  return "instance,policy,trials,mean,stderr,seed\n";
}

std::string estimates_csv_row(const std::string& instance,
                              const std::string& policy, long trials,
                              double mean, double stderr_value,
                              std::uint64_t seed) {
  std::string row = csv_field(instance);
  row += ',';
  row += csv_field(policy);
  row += ',';
  row += std::to_string(trials);
  row += ',';
  row += shortest(mean);
  row += ',';
  row += shortest(stderr_value);
  row += ',';
  row += std::to_string(seed);
  row += '\n';
  return row;
}

// ---------------------------------------------------------------------------
// allocation instances

std::string save_allocation(const AllocationInstance& inst) {
  ordered_json j;
  ordered_json bidders = ordered_json::array();
  for (const BidderSpec& b : inst.bidders) {
    ordered_json jb;
    jb["id"] = b.id;
    if (!is_unbudgeted(b.budget)) jb["budget"] = b.budget;
    bidders.push_back(std::move(jb));
  }
  j["bidders"] = std::move(bidders);
  ordered_json types = ordered_json::array();
  for (const TypeSpec& t : inst.types) {
    ordered_json jt;
    jt["id"] = t.id;
    jt["arrivals"] = t.arrivals;
    types.push_back(std::move(jt));
  }
  j["types"] = std::move(types);
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < inst.pairs.size(); ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t k = 0; k < inst.pairs[i].size(); ++k) {
      const PairSpec& pair = inst.pairs[i][k];
      ordered_json jp;
      jp["bid"] = pair.bid;
      jp["delay"] = pair.delay;
      jp["prior"] = prior_to_json(
          pair.prior, "pair (" + inst.bidders[i].id + ", " +
                          (k < inst.types.size() ? inst.types[k].id
                                                 : std::to_string(k)) +
                          ")");
      row.push_back(std::move(jp));
    }
    rows.push_back(std::move(row));
  }
  j["pairs"] = std::move(rows);
  return render(j);
}

AllocationInstance load_allocation(const std::string& text) {
  const ordered_json j = parse_document(text);
  if (!j.is_object()) fail("allocation: top level must be an object");
  AllocationInstance inst;
  const ordered_json& jbidders = require(j, "bidders", "allocation");
  if (!jbidders.is_array() || jbidders.empty())
    fail("allocation: \"bidders\" must be a nonempty array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < jbidders.size(); ++i) {
    const std::string ctx = "bidder " + std::to_string(i);
    BidderSpec b;
    b.id = require_str(jbidders[i], "id", ctx);
    if (b.id.empty()) fail(ctx + ": bidder id must be nonempty");
    if (!ids.insert(b.id).second)
      fail("allocation: duplicate bidder id \"" + b.id + "\"");
    if (jbidders[i].contains("budget") && !jbidders[i].at("budget").is_null()) {
      b.budget = require_num(jbidders[i], "budget", ctx);
      if (!(b.budget >= 0.0) || std::isnan(b.budget))
        fail(ctx + ": budget must be nonnegative");
    } else {
      b.budget = kInfiniteBudget;
    }
    inst.bidders.push_back(std::move(b));
  }
  const ordered_json& jtypes = require(j, "types", "allocation");
  if (!jtypes.is_array() || jtypes.empty())
    fail("allocation: \"types\" must be a nonempty array");
  ids.clear();
  for (std::size_t k = 0; k < jtypes.size(); ++k) {
    const std::string ctx = "type " + std::to_string(k);
    TypeSpec t;
    t.id = require_str(jtypes[k], "id", ctx);
    if (t.id.empty()) fail(ctx + ": type id must be nonempty");
    if (!ids.insert(t.id).second)
      fail("allocation: duplicate type id \"" + t.id + "\"");
    const long long arrivals = require_int(jtypes[k], "arrivals", ctx);
    if (arrivals < 0) fail(ctx + ": arrivals must be nonnegative");
    t.arrivals = static_cast<int>(arrivals);
    inst.types.push_back(std::move(t));
  }
  const ordered_json& jpairs = require(j, "pairs", "allocation");
  if (!jpairs.is_array() || jpairs.size() != inst.bidders.size())
    fail("allocation: \"pairs\" must hold one row per bidder");
  for (std::size_t i = 0; i < jpairs.size(); ++i) {
    if (!jpairs[i].is_array() || jpairs[i].size() != inst.types.size())
      fail("allocation: pair row for bidder \"" + inst.bidders[i].id +
           "\" must hold one entry per type");
    std::vector<PairSpec> row;
    for (std::size_t k = 0; k < jpairs[i].size(); ++k) {
      const std::string ctx = "pair (" + inst.bidders[i].id + ", " +
                              inst.types[k].id + ")";
      const ordered_json& jp = jpairs[i][k];
      PairSpec pair;
      pair.bid = optional_num(jp, "bid", 1.0, ctx);
      if (!(pair.bid > 0.0) || !std::isfinite(pair.bid))
        fail(ctx + ": bid must be positive");
      const long long delay = optional_int(jp, "delay", 0, ctx);
      if (delay < 0) fail(ctx + ": delay must be nonnegative");
      pair.delay = static_cast<int>(delay);
      pair.prior = parse_prior(require(jp, "prior", ctx), ctx);
      row.push_back(std::move(pair));
    }
    inst.pairs.push_back(std::move(row));
  }
  return inst;
}

AllocationInstance load_allocation_file(const std::string& path) {
  return load_file(path,
                   [](const std::string& text) { return load_allocation(text); });
}

std::string revenue_report(const BudgetedPlan& plan,
                           const AllocationInstance& inst,
                           const BudgetedEstimate* estimate) {
  const std::size_t nb = inst.bidders.size();
  const std::size_t nt = inst.types.size();
  ordered_json j;
  j["kind"] = "revenue-report";
  j["objective"] = plan.objective;
  ordered_json bidders = ordered_json::array();
  for (std::size_t i = 0; i < nb; ++i) {
    ordered_json jb;
    jb["id"] = inst.bidders[i].id;
    if (is_unbudgeted(inst.bidders[i].budget)) {
      jb["budget"] = nullptr;
    } else {
      jb["budget"] = inst.bidders[i].budget;
    }
    jb["mu"] = i < plan.mu.size() ? plan.mu[i] : 0.0;
    double planned = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
      const std::size_t flat = i * nt + k;
      if (flat < plan.pair_reward.size()) planned += plan.pair_reward[flat];
    }
    jb["planned_reward"] = planned;
    bidders.push_back(std::move(jb));
  }
  j["bidders"] = std::move(bidders);
  ordered_json types = ordered_json::array();
  for (std::size_t k = 0; k < nt; ++k) {
    ordered_json jt;
    jt["id"] = inst.types[k].id;
    jt["arrivals"] = inst.types[k].arrivals;
    jt["lambda"] = k < plan.lambda.size() ? plan.lambda[k] : 0.0;
    types.push_back(std::move(jt));
  }
  j["types"] = std::move(types);
  ordered_json pairs = ordered_json::array();
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t k = 0; k < nt; ++k) {
      ordered_json jp;
      jp["bidder"] = inst.bidders[i].id;
      jp["type"] = inst.types[k].id;
      const std::size_t flat = i * nt + k;
      jp["planned_reward"] =
          flat < plan.pair_reward.size() ? plan.pair_reward[flat] : 0.0;
      const double shadow = i < plan.shadow.amount.size() &&
                                    k < plan.shadow.amount[i].size()
                                ? plan.shadow.amount[i][k]
                                : 0.0;
      if (is_unbudgeted(shadow)) {
        jp["shadow_budget"] = nullptr;
      } else {
        jp["shadow_budget"] = shadow;
      }
      pairs.push_back(std::move(jp));
    }
  }
  j["pairs"] = std::move(pairs);
  j["warnings"] = plan.warnings;
  if (estimate != nullptr) {
    ordered_json je;
    je["trials"] = estimate->revenue.trials;
    je["revenue_mean"] = estimate->revenue.mean;
    je["revenue_stderr"] = estimate->revenue.std_error;
    ordered_json ebidders = ordered_json::array();
    for (std::size_t i = 0; i < nb && i < estimate->revenue.arm_mean.size(); ++i) {
      ordered_json jb;
      jb["id"] = inst.bidders[i].id;
      jb["revenue_mean"] = estimate->revenue.arm_mean[i];
      jb["revenue_stderr"] = i < estimate->revenue.arm_std_error.size()
                                 ? estimate->revenue.arm_std_error[i]
                                 : 0.0;
      ebidders.push_back(std::move(jb));
    }
    je["bidders"] = std::move(ebidders);
    ordered_json epairs = ordered_json::array();
    for (std::size_t i = 0; i < nb && i < estimate->pair_accrued_mean.size(); ++i) {
      for (std::size_t k = 0; k < nt && k < estimate->pair_accrued_mean[i].size(); ++k) {
        ordered_json jp;
        jp["bidder"] = inst.bidders[i].id;
        jp["type"] = inst.types[k].id;
        jp["accrued_mean"] = estimate->pair_accrued_mean[i][k];
        epairs.push_back(std::move(jp));
      }
    }
    je["pairs"] = std::move(epairs);
    j["estimate"] = std::move(je);
  }
  return render(j);
}

}  // namespace dmab
