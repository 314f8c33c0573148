#include "disasm/planner.hpp"

#include <algorithm>
#include <cmath>

#include "disasm/error.hpp"
#include "disasm/rng.hpp"

namespace disasm {

namespace {

constexpr double kTieTol = 1e-9;
constexpr double kClassifyTol = 1e-12;

}  // namespace

const char* to_string(PolicySource s) {
  switch (s) {
    case PolicySource::QLearn: return "qlearn";
    case PolicySource::ValueIteration: return "value_iteration";
    case PolicySource::DeterministicBaseline: return "deterministic_baseline";
  }
  return "?";
}

std::optional<std::size_t> greedy_index(const std::vector<double>& q) {
  if (q.empty()) return std::nullopt;
  double best = *std::max_element(q.begin(), q.end());
  double tol = kTieTol * std::max(1.0, std::abs(best));
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] >= best - tol) return i;
  return std::nullopt;
}

std::optional<Action> Policy::action(const PomdpGraph& graph, std::size_t node) const {
  if (node >= edge.size() || !edge[node]) return std::nullopt;
  return graph.nodes.at(node).edges.at(*edge[node]).action;
}

Policy policy_from_q(const PomdpGraph& graph, std::vector<std::vector<double>> q, PolicySource source) {
  Policy p;
  p.source = source;
  p.graph_key = graph.key;
  p.edge.resize(graph.nodes.size());
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) p.edge[n] = greedy_index(q[n]);
  p.q = std::move(q);
  return p;
}

nlohmann::json policy_to_json(const Policy& policy, const PomdpGraph& graph) {
  nlohmann::json actions = nlohmann::json::array();
  for (std::size_t n = 0; n < policy.edge.size(); ++n) {
    if (!policy.edge[n]) continue;
    const Action& a = graph.nodes[n].edges[*policy.edge[n]].action;
    actions.push_back({{"node", n}, {"edge", *policy.edge[n]}, {"action", action_to_json(a)}, {"label", graph.label(a)}});
  }
  return {{"graph_key", policy.graph_key},
          {"source", to_string(policy.source)},
          {"hyperparameters", policy.hyperparameters},
          {"actions", actions},
          {"q", policy.q}};
}

Policy policy_from_json(const nlohmann::json& j, const PomdpGraph& graph) {
  try {
    Policy p;
    p.graph_key = j.at("graph_key").get<std::string>();
    if (p.graph_key != graph.key)
      throw Error(ErrorKind::Incompatible,
                  "policy was trained on graph " + p.graph_key + " but the current graph is " + graph.key);
    const std::string src = j.at("source").get<std::string>();
    if (src == "qlearn") p.source = PolicySource::QLearn;
    else if (src == "value_iteration") p.source = PolicySource::ValueIteration;
    else if (src == "deterministic_baseline") p.source = PolicySource::DeterministicBaseline;
    else fail_input("unknown policy source '" + src + "'");
    p.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    p.q = j.at("q").get<std::vector<std::vector<double>>>();
    p.edge.resize(graph.nodes.size());
    for (const auto& a : j.at("actions")) {
      std::size_t n = a.at("node").get<std::size_t>();
      std::size_t e = a.at("edge").get<std::size_t>();
      if (n >= graph.nodes.size() || e >= graph.nodes[n].edges.size() ||
          !(graph.nodes[n].edges[e].action == action_from_json(a.at("action"))))
        throw Error(ErrorKind::Incompatible, "policy action does not match the graph");
      p.edge[n] = e;
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail_input(std::string("malformed policy file: ") + e.what());
  }
}

double absorbing_value(const PomdpGraph& graph, std::size_t node) {
  return graph.nodes[node].terminal ? 0.0 : -graph.options.dead_end_penalty;
}

double q_value(const PomdpGraph& graph, const GraphEdge& edge, const std::vector<double>& v) {
  double q = 0;
  for (const auto& o : edge.outcomes) q += o.prob * (o.reward + graph.options.gamma * v[o.next]);
  return q;
}

ValueIterationResult value_iteration(const PomdpGraph& graph, double tol, std::size_t max_sweeps) {
  const std::size_t n = graph.nodes.size();
  ValueIterationResult res;
  res.v.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (graph.nodes[i].edges.empty()) res.v[i] = absorbing_value(graph, i);
  std::vector<double> next = res.v;
  while (true) {
    double residual = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& edges = graph.nodes[i].edges;
      if (edges.empty()) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& e : edges) best = std::max(best, q_value(graph, e, res.v));
      next[i] = best;
      residual = std::max(residual, std::abs(best - res.v[i]));
    }
    res.v.swap(next);
    res.residuals.push_back(residual);
    ++res.sweeps;
    if (residual < tol) break;
    if (res.sweeps >= max_sweeps) fail_model("value iteration did not converge within the sweep cap");
  }
  res.q.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : graph.nodes[i].edges) res.q[i].push_back(q_value(graph, e, res.v));
  res.policy = policy_from_q(graph, res.q, PolicySource::ValueIteration);
  res.policy.hyperparameters = {{"gamma", graph.options.gamma}, {"tol", tol}};
  return res;
}

nlohmann::json QLearnParams::to_json() const {
  return {{"gamma", gamma},
          {"alpha0", alpha0},
          {"tau", tau},
          {"epsilon_start", epsilon_start},
          {"epsilon_end", epsilon_end},
          {"episodes", episodes},
          {"max_steps", max_steps},
          {"backward", backward},
          {"q_init", q_init}};
}

QLearnParams QLearnParams::from_json(const nlohmann::json& j) {
  QLearnParams p;
  p.gamma = j.value("gamma", p.gamma);
  p.alpha0 = j.value("alpha0", p.alpha0);
  p.tau = j.value("tau", p.tau);
  p.epsilon_start = j.value("epsilon_start", p.epsilon_start);
  p.epsilon_end = j.value("epsilon_end", p.epsilon_end);
  p.episodes = j.value("episodes", p.episodes);
  p.max_steps = j.value("max_steps", p.max_steps);
  p.backward = j.value("backward", p.backward);
  p.q_init = j.value("q_init", p.q_init);
  return p;
}

QTable q_learn(const PomdpGraph& graph, const QLearnParams& params, std::uint64_t seed) {
  if (params.episodes == 0) fail_input("episodes must be at least 1");
  if (!(params.gamma > 0 && params.gamma <= 1)) fail_input("gamma must lie in (0, 1]");
  QTable t;
  t.params = params;
  t.seed = seed;
  const std::size_t n = graph.nodes.size();
  t.q.resize(n);
  t.visits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.q[i].assign(graph.nodes[i].edges.size(), params.q_init);
    t.visits[i].assign(graph.nodes[i].edges.size(), 0);
  }
  const std::size_t max_steps =
      params.max_steps ? params.max_steps : std::max<std::size_t>(1, 10 * graph.part_names.size());
  // Bootstrap only from actions that have been tried; a node with none keeps q_init.
  auto value_of = [&](std::size_t s) {
    if (graph.nodes[s].edges.empty()) return absorbing_value(graph, s);
    bool any = false;
    double best = 0;
    for (std::size_t a = 0; a < t.q[s].size(); ++a) {
      if (!t.visits[s][a]) continue;
      best = any ? std::max(best, t.q[s][a]) : t.q[s][a];
      any = true;
    }
    return any ? best : params.q_init;
  };
  struct Step {
    std::size_t s, a, next;
    double reward;
  };
  auto update = [&](const Step& st) {
    double target = st.reward + params.gamma * value_of(st.next);
    double alpha = params.alpha0 / (1.0 + t.visits[st.s][st.a] / params.tau);
    ++t.visits[st.s][st.a];
    t.q[st.s][st.a] += alpha * (target - t.q[st.s][st.a]);
  };

  Rng rng(derive_seed(seed, 0x716c));
  std::vector<Step> episode;
  for (std::size_t ep = 0; ep < params.episodes; ++ep) {
    double frac = params.episodes > 1 ? double(ep) / double(params.episodes - 1) : 1.0;
    double eps = params.epsilon_start + (params.epsilon_end - params.epsilon_start) * frac;
    std::size_t s = graph.root;
    episode.clear();
    for (std::size_t step = 0; step < max_steps; ++step) {
      const auto& edges = graph.nodes[s].edges;
      if (edges.empty()) break;
      std::size_t a = rng.uniform() < eps ? rng.below(edges.size()) : *greedy_index(t.q[s]);
      const auto& outs = edges[a].outcomes;
      double u = rng.uniform(), acc = 0;
      std::size_t k = 0;
      for (; k + 1 < outs.size(); ++k) {
        acc += outs[k].prob;
        if (u < acc) break;
      }
      episode.push_back({s, a, outs[k].next, outs[k].reward});
      if (!params.backward) update(episode.back());
      s = outs[k].next;
    }
    if (params.backward)
      for (auto it = episode.rbegin(); it != episode.rend(); ++it) update(*it);
  }
  return t;
}

Policy policy_from_qtable(const PomdpGraph& graph, const QTable& table) {
  // Untried actions never win the greedy choice.
  auto q = table.q;
  for (std::size_t n = 0; n < q.size(); ++n) {
    bool any = std::any_of(table.visits[n].begin(), table.visits[n].end(), [](auto v) { return v > 0; });
    for (std::size_t a = 0; a < q[n].size(); ++a)
      if (any && !table.visits[n][a]) q[n][a] = std::numeric_limits<double>::lowest();
  }
  Policy p = policy_from_q(graph, std::move(q), PolicySource::QLearn);
  p.hyperparameters = table.params.to_json();
  p.hyperparameters["seed"] = table.seed;
  return p;
}

std::vector<bool> Belief::most_likely() const {
  std::vector<bool> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.5;
  return out;
}

Belief prior_belief(const Product& product) {
  Belief b;
  for (const auto& v : product.variables) b.p.push_back(v.prior);
  return b;
}

Belief belief_update(const Pomdp& model, const Belief& belief, std::uint64_t removed, const Action& action,
                     const std::vector<Observation>& obs) {
  Belief out = belief;
  const ObservationModel& om = model.cell().observer;
  const Product& product = model.product();

  if (action.kind == ActionKind::Inspect) {
    for (const auto& o : obs) {
      if (o.kind != ObsKind::Missing && o.kind != ObsKind::PresentConfirmed) continue;
      bool said_missing = o.kind == ObsKind::Missing;
      for (std::size_t v : model.missing_vars_of(o.part)) {
        // Condition present means the part is absent, i.e. not detected.
        double l_true = said_missing ? observe_missing(false, om) : 1 - observe_missing(false, om);
        double l_false = said_missing ? observe_missing(true, om) : 1 - observe_missing(true, om);
        double p = out.p[v];
        double z = p * l_true + (1 - p) * l_false;
        if (z <= 0) fail_model("observation has zero probability under the current belief");
        out.p[v] = p * l_true / z;
      }
    }
    return out;
  }
  if (action.kind == ActionKind::Destructive) return out;

  const std::size_t i = action.part;
  const Observation* attempt = nullptr;
  for (const auto& o : obs)
    if (o.part == i && (o.kind == ObsKind::Removed || o.kind == ObsKind::StuckDetected)) attempt = &o;
  if (!attempt) return out;

  const std::size_t n = product.size();
  std::uint64_t known_true = 0;
  std::vector<std::size_t> uncertain;
  for (const auto& v : product.variables) {
    double p = out.p[v.id];
    if (p >= 1.0) {
      known_true |= 1ULL << v.id;
      continue;
    }
    if (p <= 0.0) continue;
    bool affects = false;
    for (auto [a, b] : v.pairs)
      if (a == i && b != i && b < n && !((removed >> b) & 1ULL)) affects = true;
    if (affects) uncertain.push_back(v.id);
  }
  if (uncertain.size() > 20) fail_input("too many uncertain variables on one part");
  const Vec3 origin{0, 0, 0};
  const Vec3 pulled{0, 0, model.cell().pull_distance_mm};
  const double l_stuck_if_stuck = observe_stuck(origin, origin, om);
  const double l_stuck_if_moved = observe_stuck(origin, pulled, om);
  const bool said_stuck = attempt->kind == ObsKind::StuckDetected;

  std::vector<double> w(std::size_t{1} << uncertain.size());
  double z = 0;
  for (std::size_t a = 0; a < w.size(); ++a) {
    double pa = 1;
    std::uint64_t tv = known_true;
    for (std::size_t b = 0; b < uncertain.size(); ++b) {
      double p = out.p[uncertain[b]];
      if ((a >> b) & 1U) {
        pa *= p;
        tv |= 1ULL << uncertain[b];
      } else {
        pa *= 1 - p;
      }
    }
    double q = model.row_feasibility(i, removed, tv);
    double l_stuck = (1 - q) * l_stuck_if_stuck + q * l_stuck_if_moved;
    w[a] = pa * (said_stuck ? l_stuck : 1 - l_stuck);
    z += w[a];
  }
  if (z <= 0) fail_model("observation has zero probability under the current belief");
  for (std::size_t b = 0; b < uncertain.size(); ++b) {
    double m = 0;
    for (std::size_t a = 0; a < w.size(); ++a)
      if ((a >> b) & 1U) m += w[a];
    out.p[uncertain[b]] = std::clamp(m / z, 0.0, 1.0);
  }
  return out;
}

NodeKey knowledge_node(const Pomdp& model, const Belief& belief, std::uint64_t removed, std::uint32_t tool,
                       bool inspected) {
  NodeKey key;
  key.removed = removed;
  key.tool = tool;
  key.inspected = inspected;
  const auto& vars = model.product().variables;
  key.knowledge.resize(vars.size());
  for (std::size_t v = 0; v < vars.size(); ++v) {
    double p = belief.p[v];
    if (std::abs(p - vars[v].prior) <= kClassifyTol) key.knowledge[v] = Knowledge::Unknown;
    else if (p <= kClassifyTol) key.knowledge[v] = Knowledge::KnownFalse;
    else if (p >= 1 - kClassifyTol) key.knowledge[v] = Knowledge::KnownTrue;
    else key.knowledge[v] = p > 0.5 ? Knowledge::KnownTrue : Knowledge::KnownFalse;
  }
  return model.canonical(std::move(key));
}

std::optional<Action> select_action(const PomdpGraph& graph, const Policy& policy, const Pomdp& model,
                                    const Belief& belief, std::uint64_t removed, std::uint32_t tool,
                                    bool inspected) {
  NodeKey key = knowledge_node(model, belief, removed, tool, inspected);
  auto id = graph.find(key);
  if (!id) fail_model("most likely state " + key.encode() + " is not covered by the policy");
  return policy.action(graph, *id);
}

DeterministicBaseline::DeterministicBaseline(const Product& product, const Cell& cell, GraphOptions options)
    : model_(product.with_priors(std::vector<double>(product.variables.size(), 0.0)), cell, options.delta),
      options_(options) {
  nominal_graph_ = std::make_shared<PomdpGraph>(build_graph(model_, options_));
  nominal_solution_ = std::make_shared<ValueIterationResult>(value_iteration(*nominal_graph_));
  nominal_solution_->policy.source = PolicySource::DeterministicBaseline;
  absorb(*nominal_graph_, *nominal_solution_);
}

void DeterministicBaseline::absorb(const PomdpGraph& graph, const ValueIterationResult& sol) const {
  for (std::size_t n = 0; n < graph.nodes.size(); ++n)
    memo_.try_emplace(graph.nodes[n].key.encode(), sol.policy.action(graph, n));
}

std::optional<Action> DeterministicBaseline::plan(const NodeKey& node) const {
  NodeKey key = model_.canonical(node);
  std::string code = key.encode();
  std::lock_guard lock(mutex_);
  if (auto it = memo_.find(code); it != memo_.end()) return it->second;
  // Only the root of a replanned graph is memoized so the answer for a node
  // never depends on which graph reached it first.
  PomdpGraph g = build_graph_from(model_, key, options_);
  ValueIterationResult sol = value_iteration(g);
  ++replans_;
  return memo_.emplace(code, sol.policy.action(g, g.root)).first->second;
}

std::size_t DeterministicBaseline::replans() const {
  std::lock_guard lock(mutex_);
  return replans_;
}

}  // namespace disasm
