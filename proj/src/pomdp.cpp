#include "disasm/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>

#include "disasm/error.hpp"
#include "disasm/rng.hpp"

namespace disasm {

namespace {

constexpr double kClassifyTol = 1e-12;
constexpr std::size_t kMaxEnumerated = 20;
constexpr int kGraphFormat = 1;

char knowledge_char(Knowledge k) {
  switch (k) {
    case Knowledge::Unknown: return 'U';
    case Knowledge::KnownFalse: return 'F';
    case Knowledge::KnownTrue: return 'T';
  }
  return 'U';
}

Knowledge knowledge_from_char(char c) {
  switch (c) {
    case 'U': return Knowledge::Unknown;
    case 'F': return Knowledge::KnownFalse;
    case 'T': return Knowledge::KnownTrue;
  }
  fail_input(std::string("bad knowledge code '") + c + "'");
}

// Tri-state knowledge of one variable from its posterior marginal.
Knowledge classify(double posterior, double prior) {
  if (std::abs(posterior - prior) <= kClassifyTol) return Knowledge::Unknown;
  if (posterior <= kClassifyTol) return Knowledge::KnownFalse;
  if (posterior >= 1.0 - kClassifyTol) return Knowledge::KnownTrue;
  fail_model("observation leaves a variable partially resolved (posterior " + std::to_string(posterior) +
             ", prior " + std::to_string(prior) + ")");
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

const char* to_string(ObsKind k) {
  switch (k) {
    case ObsKind::Removed: return "removed";
    case ObsKind::StuckDetected: return "stuck";
    case ObsKind::Missing: return "missing";
    case ObsKind::PresentConfirmed: return "present";
    case ObsKind::NoObservation: return "none";
  }
  return "none";
}

std::string NodeKey::encode() const {
  std::string s = hex64(removed);
  s.push_back(':');
  for (auto k : knowledge) s.push_back(knowledge_char(k));
  s.push_back(':');
  s += std::to_string(tool);
  s.push_back(inspected ? 'i' : 'n');
  return s;
}

Pomdp::Pomdp(Product product, Cell cell, double delta)
    : product_(std::move(product)), cell_(std::move(cell)), delta_(delta) {
  const std::size_t n = product_.size();
  if (n > 64) fail_input("at most 64 parts are supported");
  if (product_.variables.size() > 64) fail_input("at most 64 end-of-life variables are supported");
  if (!(delta_ >= 0.0 && delta_ < 1.0)) fail_input("delta must lie in [0, 1)");
  pair_vars_.assign(n * n, {});
  for (const auto& v : product_.variables) {
    for (auto [i, j] : v.pairs) pair_vars_[i * n + j].push_back(v.id);
    if (v.kind == EolKind::Missing) missing_vars_.push_back(v.id);
  }
  for (auto& pv : pair_vars_) {
    std::sort(pv.begin(), pv.end());
    pv.erase(std::unique(pv.begin(), pv.end()), pv.end());
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (auto name = product_.tool_for(i); name && !cell_.tool_index(*name))
      fail_input("product '" + product_.name + "' needs tool '" + *name + "' which cell '" + cell_.name +
                 "' does not provide");
  }
}

Pomdp::Pomdp(const Pomdp& other)
    : product_(other.product_),
      cell_(other.cell_),
      delta_(other.delta_),
      pair_vars_(other.pair_vars_),
      missing_vars_(other.missing_vars_) {}

NodeKey Pomdp::initial_node() const {
  NodeKey key;
  key.knowledge.assign(product_.variables.size(), Knowledge::Unknown);
  key.tool = static_cast<std::uint32_t>(cell_.initial_tool);
  key.inspected = !has_inspection();
  return canonical(std::move(key));
}

bool Pomdp::variable_relevant(std::size_t var, std::uint64_t removed) const {
  for (auto [i, j] : product_.variables[var].pairs)
    if (!((removed >> i) & 1ULL) && !((removed >> j) & 1ULL)) return true;
  return false;
}

NodeKey Pomdp::canonical(NodeKey key) const {
  for (std::size_t v : missing_vars_)
    if (key.knowledge[v] == Knowledge::KnownTrue) key.removed |= 1ULL << *product_.variables[v].part;
  for (std::size_t v = 0; v < key.knowledge.size(); ++v)
    if (!variable_relevant(v, key.removed)) key.knowledge[v] = Knowledge::Unknown;
  return key;
}

bool Pomdp::is_terminal(const NodeKey& key) const {
  for (std::size_t t : product_.targets())
    if (!key.is_removed(t)) return false;
  return true;
}

std::uint64_t Pomdp::known_true_mask(const NodeKey& key) const {
  std::uint64_t m = 0;
  for (std::size_t v = 0; v < key.knowledge.size(); ++v)
    if (key.knowledge[v] == Knowledge::KnownTrue) m |= 1ULL << v;
  return m;
}

std::vector<std::size_t> Pomdp::relevant_unknowns(const NodeKey& key, std::size_t part) const {
  const std::size_t n = product_.size();
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == part || key.is_removed(j)) continue;
    for (std::size_t v : pair_vars_[part * n + j])
      if (key.knowledge[v] == Knowledge::Unknown) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> Pomdp::stuck_vars_of(std::size_t part) const {
  std::vector<std::size_t> out;
  for (const auto& v : product_.variables)
    if (v.kind == EolKind::Stuck && v.part == part) out.push_back(v.id);
  return out;
}

std::vector<std::size_t> Pomdp::missing_vars_of(std::size_t part) const {
  std::vector<std::size_t> out;
  for (const auto& v : product_.variables)
    if (v.kind == EolKind::Missing && v.part == part) out.push_back(v.id);
  return out;
}

double Pomdp::row_feasibility(std::size_t part, std::uint64_t removed, std::uint64_t true_vars) const {
  const std::size_t n = product_.size();
  std::uint64_t others = removed & ~(1ULL << part);
  std::uint64_t var_mask = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == part || ((others >> j) & 1ULL)) continue;
    for (std::size_t v : pair_vars_[part * n + j]) var_mask |= 1ULL << v;
  }
  const auto memo_key = std::make_tuple(part, others, true_vars & var_mask);
  {
    std::lock_guard lock(memo_mutex_);
    if (auto it = memo_.find(memo_key); it != memo_.end()) return it->second;
  }
  std::vector<DirectionGrid> row;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == part || ((others >> j) & 1ULL)) continue;
    DirectionGrid g = product_.nominal.at(part, j);
    for (std::size_t v : pair_vars_[part * n + j])
      if ((true_vars >> v) & 1ULL) g = apply_operator(g, product_.variables[v].op);
    row.push_back(std::move(g));
  }
  double p = row.empty() ? 1.0 : feasibility(std::span<const DirectionGrid>(row)).p;
  std::lock_guard lock(memo_mutex_);
  memo_.emplace(memo_key, p);
  return p;
}

double Pomdp::marginal_removal_probability(const NodeKey& key, std::size_t part, std::size_t tool) const {
  const auto unknown = relevant_unknowns(key, part);
  if (unknown.size() > kMaxEnumerated) fail_input("too many uncertain variables on one part");
  const std::uint64_t base = known_true_mask(key);
  double total = 0;
  for (std::uint64_t a = 0; a < (1ULL << unknown.size()); ++a) {
    double pa = 1;
    std::uint64_t tv = base;
    for (std::size_t b = 0; b < unknown.size(); ++b) {
      double pr = product_.variables[unknown[b]].prior;
      if ((a >> b) & 1ULL) {
        pa *= pr;
        tv |= 1ULL << unknown[b];
      } else {
        pa *= 1 - pr;
      }
    }
    if (pa == 0) continue;
    total += pa * row_feasibility(part, key.removed, tv);
  }
  return cell_.tools[tool].p_success * total;
}

bool Pomdp::stages_pass(std::size_t tool, std::size_t part) const {
  auto st = cell_.stages_for(tool, product_.parts[part].name);
  for (bool ok : st) {
    ++stage_evaluations_;
    if (!ok) return false;
  }
  return true;
}

std::vector<Action> Pomdp::enumerate_actions(const NodeKey& key) const {
  std::vector<Action> out;
  if (is_terminal(key)) return out;
  if (!key.inspected) {
    out.push_back({ActionKind::Inspect, kNoPart, key.tool});
    return out;
  }
  const auto mill = cell_.mill_tool();
  for (std::size_t i = 0; i < product_.size(); ++i) {
    if (key.is_removed(i)) continue;
    if (auto name = product_.tool_for(i)) {
      std::size_t k = *cell_.tool_index(*name);
      if (cell_.tools[k].kind != ToolKind::Mill && marginal_removal_probability(key, i, k) > delta_ &&
          stages_pass(k, i))
        out.push_back({ActionKind::NonDestructive, i, k});
    }
    const DestructiveSpec* ds = product_.destructive_for(i);
    if (ds && mill) {
      std::vector<DirectionGrid> row;
      for (std::size_t j = 0; j < product_.size(); ++j) {
        if (j == i || key.is_removed(j)) continue;
        if (std::binary_search(ds->collateral.begin(), ds->collateral.end(), j)) continue;
        auto it = ds->replacements.find(j);
        row.push_back(it != ds->replacements.end() ? it->second : DirectionGrid::ones(product_.grid));
      }
      double p = row.empty() ? 1.0 : feasibility(std::span<const DirectionGrid>(row)).p;
      if (p > 0 && stages_pass(*mill, i)) out.push_back({ActionKind::Destructive, i, *mill});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Action& a, const Action& b) { return std::tie(a.part, a.tool) < std::tie(b.part, b.tool); });
  return out;
}

double Pomdp::reward(const Action& a, std::optional<std::size_t> prev_tool) const {
  if (a.kind == ActionKind::Inspect) return 0.0;
  const std::string& pname = product_.parts.at(a.part).name;
  double t = cell_.action_time(a.tool, pname) + cell_.change_time(prev_tool, a.tool) + cell_.place_time(pname);
  if (a.kind == ActionKind::NonDestructive) return -t;
  double value = product_.parts[a.part].value_penalty;
  if (const auto* ds = product_.destructive_for(a.part))
    for (std::size_t c : ds->collateral)
      if (!product_.parts[c].is_target) value += product_.parts[c].value_penalty;
  return -(t + value);
}

std::vector<Transition> Pomdp::transition(const NodeKey& key, const Action& action) const {
  std::vector<Transition> out;

  if (action.kind == ActionKind::Inspect) {
    if (key.inspected) fail_input("inspection already performed");
    const auto& mv = missing_vars_;
    if (mv.size() > kMaxEnumerated) fail_input("too many missing-part variables");
    for (std::uint64_t a = 0; a < (1ULL << mv.size()); ++a) {
      Transition t;
      t.next = key;
      t.next.inspected = true;
      t.prob = 1;
      for (std::size_t b = 0; b < mv.size(); ++b) {
        const auto& v = product_.variables[mv[b]];
        bool val = (a >> b) & 1ULL;
        t.prob *= val ? v.prior : 1 - v.prior;
        t.next.knowledge[mv[b]] = val ? Knowledge::KnownTrue : Knowledge::KnownFalse;
        t.obs.push_back({val ? ObsKind::Missing : ObsKind::PresentConfirmed, *v.part});
      }
      if (t.prob <= 0) continue;
      t.next = canonical(std::move(t.next));
      out.push_back(std::move(t));
    }
    return out;
  }

  const std::size_t i = action.part;
  if (i >= product_.size() || key.is_removed(i)) fail_input("action on a missing or removed part");
  const std::string& pname = product_.parts[i].name;
  const double t_change = cell_.change_time(key.tool, action.tool);
  const double t_act = cell_.action_time(action.tool, pname);
  const double t_place = cell_.place_time(pname);

  if (action.kind == ActionKind::Destructive) {
    const DestructiveSpec* ds = product_.destructive_for(i);
    if (!ds) fail_input("part '" + pname + "' has no destructive removal");
    Transition t;
    t.next = key;
    t.next.tool = static_cast<std::uint32_t>(action.tool);
    t.next.removed |= 1ULL << i;
    t.prob = 1;
    t.time = t_act + t_change + t_place;
    double value = product_.parts[i].value_penalty;
    t.obs.push_back({ObsKind::Removed, i});
    for (std::size_t c : ds->collateral) {
      if (key.is_removed(c)) continue;
      t.next.removed |= 1ULL << c;
      if (!product_.parts[c].is_target) value += product_.parts[c].value_penalty;
      t.obs.push_back({ObsKind::Removed, c});
    }
    t.reward = -(t.time + value);
    t.next = canonical(std::move(t.next));
    out.push_back(std::move(t));
    return out;
  }

  const auto unknown = relevant_unknowns(key, i);
  if (unknown.size() > kMaxEnumerated) fail_input("too many uncertain variables on one part");
  const std::uint64_t base = known_true_mask(key);
  const double ps = cell_.tools[action.tool].p_success;
  const std::size_t na = std::size_t{1} << unknown.size();
  std::vector<double> w_ok(na), w_stuck(na);
  double p_ok = 0, p_stuck = 0;
  for (std::size_t a = 0; a < na; ++a) {
    double pa = 1;
    std::uint64_t tv = base;
    for (std::size_t b = 0; b < unknown.size(); ++b) {
      double pr = product_.variables[unknown[b]].prior;
      if ((a >> b) & 1U) {
        pa *= pr;
        tv |= 1ULL << unknown[b];
      } else {
        pa *= 1 - pr;
      }
    }
    if (pa == 0) continue;
    double q = row_feasibility(i, key.removed, tv);
    w_ok[a] = pa * ps * q;
    w_stuck[a] = pa * ps * (1 - q);
    p_ok += w_ok[a];
    p_stuck += w_stuck[a];
  }

  auto posterior_node = [&](const std::vector<double>& w, double total) {
    NodeKey next = key;
    next.tool = static_cast<std::uint32_t>(action.tool);
    for (std::size_t b = 0; b < unknown.size(); ++b) {
      double m = 0;
      for (std::size_t a = 0; a < na; ++a)
        if ((a >> b) & 1U) m += w[a];
      next.knowledge[unknown[b]] = classify(m / total, product_.variables[unknown[b]].prior);
    }
    return next;
  };

  if (p_ok > 0) {
    Transition t;
    t.next = posterior_node(w_ok, p_ok);
    t.next.removed |= 1ULL << i;
    t.next = canonical(std::move(t.next));
    t.prob = p_ok;
    t.time = t_act + t_change + t_place;
    t.reward = -t.time;
    t.obs.push_back({ObsKind::Removed, i});
    out.push_back(std::move(t));
  }
  if (p_stuck > 0) {
    Transition t;
    t.next = canonical(posterior_node(w_stuck, p_stuck));
    t.prob = p_stuck;
    t.time = t_act + t_change;
    t.reward = -t.time;
    t.obs.push_back({ObsKind::StuckDetected, i});
    out.push_back(std::move(t));
  }
  if (ps < 1) {
    Transition t;
    t.next = key;
    t.next.tool = static_cast<std::uint32_t>(action.tool);
    t.prob = 1 - ps;
    t.time = t_act + t_change;
    t.reward = -t.time;
    t.obs.push_back({ObsKind::NoObservation, i});
    out.push_back(std::move(t));
  }
  return out;
}

std::string Pomdp::label(const Action& a) const {
  switch (a.kind) {
    case ActionKind::Inspect: return "inspect";
    case ActionKind::NonDestructive:
      return cell_.tools[a.tool].name + "(" + product_.parts[a.part].name + ")";
    case ActionKind::Destructive: return "mill(" + product_.parts[a.part].name + ")";
  }
  return "?";
}

std::string Pomdp::label(const Observation& o) const {
  std::string s = to_string(o.kind);
  if (o.part != kNoPart) s += "(" + product_.parts[o.part].name + ")";
  return s;
}

double observe_stuck(const Vec3& pose_old, const Vec3& pose_new, const ObservationModel& model) {
  bool moved = norm(pose_new - pose_old) >= model.epsilon_mm;
  return moved ? model.p_fp : model.p_tp;
}

double observe_missing(bool detected, const ObservationModel& model) {
  return detected ? model.p_fn : model.p_tn;
}

std::pair<double, double> observe_glue(const ProductState& state, std::size_t part) {
  double q = state.part_feasibility(part).p;
  return {q, 1 - q};
}

std::optional<std::size_t> PomdpGraph::find(const NodeKey& k) const {
  auto it = index_.find(k.encode());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t PomdpGraph::edge_count() const {
  std::size_t e = 0;
  for (const auto& n : nodes) e += n.edges.size();
  return e;
}

void PomdpGraph::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) index_.emplace(nodes[i].key.encode(), i);
}

std::string PomdpGraph::label(const Action& a) const {
  switch (a.kind) {
    case ActionKind::Inspect: return "inspect";
    case ActionKind::NonDestructive: return tool_names.at(a.tool) + "(" + part_names.at(a.part) + ")";
    case ActionKind::Destructive: return "mill(" + part_names.at(a.part) + ")";
  }
  return "?";
}

std::string graph_key(const Product& product, const Cell& cell, const GraphOptions& options) {
  nlohmann::json j;
  j["format"] = kGraphFormat;
  j["product"] = save_product(product);
  j["cell"] = save_cell(cell);
  j["delta"] = options.delta;
  j["gamma"] = options.gamma;
  j["dead_end_penalty"] = options.dead_end_penalty;
  return hex64(fnv1a(j.dump()));
}

PomdpGraph build_graph_from(const Pomdp& model, const NodeKey& start, const GraphOptions& options) {
  if (std::abs(options.delta - model.delta()) > 0) fail_input("graph options and model disagree on delta");
  PomdpGraph g;
  g.options = options;
  g.key = graph_key(model.product(), model.cell(), options);
  g.product_name = model.product().name;
  g.cell_name = model.cell().name;
  for (const auto& p : model.product().parts) g.part_names.push_back(p.name);
  for (const auto& t : model.cell().tools) g.tool_names.push_back(t.name);
  for (const auto& v : model.product().variables) g.priors.push_back(v.prior);

  std::unordered_map<std::string, std::size_t> index;
  auto intern = [&](NodeKey k) {
    std::string code = k.encode();
    if (auto it = index.find(code); it != index.end()) return it->second;
    if (g.nodes.size() >= options.max_nodes)
      throw Error(ErrorKind::ResourceCap,
                  "state graph exceeds " + std::to_string(options.max_nodes) + " nodes; raise the cap or delta");
    std::size_t id = g.nodes.size();
    index.emplace(std::move(code), id);
    GraphNode node;
    node.key = std::move(k);
    g.nodes.push_back(std::move(node));
    return id;
  };

  g.root = intern(model.canonical(start));
  for (std::size_t id = 0; id < g.nodes.size(); ++id) {
    const NodeKey key = g.nodes[id].key;
    g.nodes[id].terminal = model.is_terminal(key);
    if (g.nodes[id].terminal) continue;
    std::vector<GraphEdge> edges;
    for (const Action& a : model.enumerate_actions(key)) {
      GraphEdge e;
      e.action = a;
      double total = 0;
      for (auto& t : model.transition(key, a)) {
        total += t.prob;
        std::size_t next = intern(std::move(t.next));
        e.outcomes.push_back({next, t.prob, t.reward, t.time, std::move(t.obs)});
      }
      if (std::abs(total - 1.0) > 1e-9) fail_model("outcome probabilities do not sum to one");
      edges.push_back(std::move(e));
    }
    g.nodes[id].edges = std::move(edges);
  }
  g.reindex();
  return g;
}

PomdpGraph build_graph(const Pomdp& model, const GraphOptions& options) {
  return build_graph_from(model, model.initial_node(), options);
}

nlohmann::json action_to_json(const Action& a) {
  const char* kind = a.kind == ActionKind::Inspect         ? "inspect"
                     : a.kind == ActionKind::Destructive   ? "destructive"
                                                           : "nondestructive";
  nlohmann::json j{{"kind", kind}, {"tool", a.tool}};
  j["part"] = a.part == kNoPart ? nlohmann::json(nullptr) : nlohmann::json(a.part);
  return j;
}

Action action_from_json(const nlohmann::json& j) {
  Action a;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "inspect") a.kind = ActionKind::Inspect;
  else if (kind == "destructive") a.kind = ActionKind::Destructive;
  else if (kind == "nondestructive") a.kind = ActionKind::NonDestructive;
  else fail_input("unknown action kind '" + kind + "'");
  a.tool = j.at("tool").get<std::size_t>();
  a.part = j.at("part").is_null() ? kNoPart : j.at("part").get<std::size_t>();
  return a;
}

nlohmann::json graph_to_json(const PomdpGraph& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    std::string kn;
    for (auto k : n.key.knowledge) kn.push_back(knowledge_char(k));
    json edges = json::array();
    for (const auto& e : n.edges) {
      json outs = json::array();
      for (const auto& o : e.outcomes) {
        json obs = json::array();
        for (const auto& ob : o.obs)
          obs.push_back({to_string(ob.kind), ob.part == kNoPart ? json(nullptr) : json(ob.part)});
        outs.push_back({{"next", o.next}, {"p", o.prob}, {"r", o.reward}, {"t", o.time}, {"obs", obs}});
      }
      edges.push_back({{"action", action_to_json(e.action)}, {"outcomes", outs}});
    }
    nodes.push_back({{"removed", n.key.removed},
                     {"knowledge", kn},
                     {"tool", n.key.tool},
                     {"inspected", n.key.inspected},
                     {"terminal", n.terminal},
                     {"edges", edges}});
  }
  return json{{"format", kGraphFormat},
              {"key", g.key},
              {"product", g.product_name},
              {"cell", g.cell_name},
              {"part_names", g.part_names},
              {"tool_names", g.tool_names},
              {"priors", g.priors},
              {"options",
               {{"delta", g.options.delta},
                {"gamma", g.options.gamma},
                {"dead_end_penalty", g.options.dead_end_penalty},
                {"max_nodes", g.options.max_nodes}}},
              {"root", g.root},
              {"nodes", nodes}};
}

PomdpGraph graph_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<int>() != kGraphFormat)
      throw Error(ErrorKind::Incompatible, "unsupported graph format");
    PomdpGraph g;
    g.key = j.at("key").get<std::string>();
    g.product_name = j.at("product").get<std::string>();
    g.cell_name = j.at("cell").get<std::string>();
    g.part_names = j.at("part_names").get<std::vector<std::string>>();
    g.tool_names = j.at("tool_names").get<std::vector<std::string>>();
    g.priors = j.at("priors").get<std::vector<double>>();
    const auto& o = j.at("options");
    g.options.delta = o.at("delta").get<double>();
    g.options.gamma = o.at("gamma").get<double>();
    g.options.dead_end_penalty = o.at("dead_end_penalty").get<double>();
    g.options.max_nodes = o.at("max_nodes").get<std::size_t>();
    g.root = j.at("root").get<std::size_t>();
    const auto& jn = j.at("nodes");
    for (const auto& n : jn) {
      GraphNode node;
      node.key.removed = n.at("removed").get<std::uint64_t>();
      for (char c : n.at("knowledge").get<std::string>()) node.key.knowledge.push_back(knowledge_from_char(c));
      node.key.tool = n.at("tool").get<std::uint32_t>();
      node.key.inspected = n.at("inspected").get<bool>();
      node.terminal = n.at("terminal").get<bool>();
      for (const auto& e : n.at("edges")) {
        GraphEdge edge;
        edge.action = action_from_json(e.at("action"));
        for (const auto& oc : e.at("outcomes")) {
          GraphOutcome out;
          out.next = oc.at("next").get<std::size_t>();
          if (out.next >= jn.size()) fail_input("graph outcome points past the node list");
          out.prob = oc.at("p").get<double>();
          out.reward = oc.at("r").get<double>();
          out.time = oc.at("t").get<double>();
          for (const auto& ob : oc.at("obs")) {
            Observation obs;
            const std::string k = ob.at(0).get<std::string>();
            if (k == "removed") obs.kind = ObsKind::Removed;
            else if (k == "stuck") obs.kind = ObsKind::StuckDetected;
            else if (k == "missing") obs.kind = ObsKind::Missing;
            else if (k == "present") obs.kind = ObsKind::PresentConfirmed;
            else obs.kind = ObsKind::NoObservation;
            obs.part = ob.at(1).is_null() ? kNoPart : ob.at(1).get<std::size_t>();
            out.obs.push_back(obs);
          }
          edge.outcomes.push_back(std::move(out));
        }
        node.edges.push_back(std::move(edge));
      }
      g.nodes.push_back(std::move(node));
    }
    if (g.root >= g.nodes.size()) fail_input("graph root out of range");
    g.reindex();
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail_input(std::string("malformed graph file: ") + e.what());
  }
}

}  // namespace disasm
