#include "disasm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "disasm/error.hpp"
#include "disasm/rng.hpp"

namespace disasm {

ScenarioSet scenarios_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  try {
    ScenarioSet set;
    set.name = j.value("name", std::string("scenarios"));
    if (j.contains("product")) set.product = base_dir / j.at("product").get<std::string>();
    if (j.contains("cell")) set.cell = base_dir / j.at("cell").get<std::string>();
    for (const auto& s : j.at("scenarios")) {
      Scenario sc;
      sc.name = s.at("name").get<std::string>();
      const nlohmann::json priors = s.value("priors", nlohmann::json::object());
      const nlohmann::json force = s.value("force", nlohmann::json::object());
      for (const auto& [k, v] : priors.items()) {
        double p = v.get<double>();
        if (!(p >= 0 && p <= 1)) fail_input("scenario '" + sc.name + "': prior of '" + k + "' outside [0, 1]");
        sc.priors[k] = p;
      }
      for (const auto& [k, v] : force.items()) sc.force[k] = v.get<bool>();
      set.scenarios.push_back(std::move(sc));
    }
    if (set.scenarios.empty()) fail_input("scenario file lists no scenarios");
    return set;
  } catch (const nlohmann::json::exception& e) {
    fail_input(std::string("malformed scenario file: ") + e.what());
  }
}

ScenarioSet load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_input("cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail_input(path.string() + ": " + e.what());
  }
  return scenarios_from_json(j, path.parent_path());
}

Product apply_scenario(const Product& product, const Scenario& scenario) {
  return product.with_priors(scenario.priors);
}

std::optional<std::vector<bool>> forced_assignment(const Product& product, const Scenario& scenario) {
  if (scenario.force.empty()) return std::nullopt;
  std::vector<bool> a(product.variables.size(), false);
  for (const auto& [name, value] : scenario.force) {
    auto v = product.variable_index(name);
    if (!v) fail_input("scenario '" + scenario.name + "' forces unknown variable '" + name + "'");
    a[*v] = value;
  }
  return a;
}

ProbabilisticController::ProbabilisticController(std::shared_ptr<const Pomdp> model,
                                                 std::shared_ptr<const PomdpGraph> graph,
                                                 std::shared_ptr<const Policy> policy, std::string name)
    : model_(std::move(model)), graph_(std::move(graph)), policy_(std::move(policy)), name_(std::move(name)) {
  if (policy_->graph_key != graph_->key) throw Error(ErrorKind::Incompatible, "policy does not belong to this graph");
  reset();
}

void ProbabilisticController::reset() {
  belief_ = prior_belief(model_->product());
  removed_ = 0;
  tool_ = static_cast<std::uint32_t>(model_->cell().initial_tool);
  inspected_ = !model_->has_inspection();
}

std::optional<Action> ProbabilisticController::act() {
  return select_action(*graph_, *policy_, *model_, belief_, removed_, tool_, inspected_);
}

void ProbabilisticController::observe(const Action& action, const std::vector<Observation>& obs) {
  belief_ = belief_update(*model_, belief_, removed_, action, obs);
  if (action.kind != ActionKind::Inspect) {
    for (const auto& o : obs)
      if (o.kind == ObsKind::Missing || o.kind == ObsKind::PresentConfirmed)
        belief_ = belief_update(*model_, belief_, removed_, {ActionKind::Inspect, kNoPart, tool_}, {o});
    tool_ = static_cast<std::uint32_t>(action.tool);
  } else {
    inspected_ = true;
  }
  for (const auto& o : obs)
    if (o.kind == ObsKind::Removed) removed_ |= 1ULL << o.part;
}

std::unique_ptr<Controller> ProbabilisticController::clone() const {
  return std::make_unique<ProbabilisticController>(*this);
}

DeterministicController::DeterministicController(std::shared_ptr<const DeterministicBaseline> baseline)
    : baseline_(std::move(baseline)) {
  reset();
}

void DeterministicController::reset() { node_ = baseline_->model().initial_node(); }

std::optional<Action> DeterministicController::act() { return baseline_->plan(node_); }

void DeterministicController::observe(const Action& action, const std::vector<Observation>& obs) {
  const Pomdp& m = baseline_->model();
  if (action.kind == ActionKind::Inspect) node_.inspected = true;
  else node_.tool = static_cast<std::uint32_t>(action.tool);
  for (const auto& o : obs) {
    switch (o.kind) {
      case ObsKind::Removed: node_.removed |= 1ULL << o.part; break;
      case ObsKind::Missing:
        for (std::size_t v : m.missing_vars_of(o.part)) node_.knowledge[v] = Knowledge::KnownTrue;
        node_.removed |= 1ULL << o.part;
        break;
      case ObsKind::PresentConfirmed:
        for (std::size_t v : m.missing_vars_of(o.part)) node_.knowledge[v] = Knowledge::KnownFalse;
        break;
      case ObsKind::StuckDetected: {
        // The best-case model was wrong about this part: assume its stuck
        // conditions, or failing that every open condition on its row.
        auto vars = m.stuck_vars_of(o.part);
        if (vars.empty()) vars = m.relevant_unknowns(node_, o.part);
        for (std::size_t v : vars) node_.knowledge[v] = Knowledge::KnownTrue;
        break;
      }
      case ObsKind::NoObservation: break;
    }
  }
  node_ = m.canonical(std::move(node_));
}

std::unique_ptr<Controller> DeterministicController::clone() const {
  return std::make_unique<DeterministicController>(*this);
}

EpisodeTrace rollout(const Pomdp& model, Controller& controller, std::uint64_t seed,
                     const std::optional<std::vector<bool>>& forced, const RolloutOptions& options) {
  const Product& product = model.product();
  const Cell& cell = model.cell();
  GroundTruth gt = forced ? ground_truth_from(product, *forced, seed) : realize_ground_truth(product, seed);
  EpisodeTrace trace;
  trace.seed = seed;
  trace.assignment = gt.assignment;

  ProductState state = gt.state;
  std::uint64_t removed = 0;
  for (std::size_t v : model.missing_vars())
    if (gt.assignment[v]) removed |= 1ULL << *product.variables[v].part;
  std::optional<std::size_t> tool = cell.initial_tool;
  Rng rng(derive_seed(seed, 2));
  const auto targets = product.targets();
  auto done = [&] {
    return std::all_of(targets.begin(), targets.end(), [&](std::size_t t) { return (removed >> t) & 1ULL; });
  };

  controller.reset();
  const std::size_t cap = options.step_cap_factor * product.size();
  double cumulative = 0;
  for (std::size_t step = 0; step < cap && !done(); ++step) {
    auto action = controller.act();
    if (!action) break;
    const Action a = *action;
    TraceStep ts;
    ts.action = a;
    ts.action_label = model.label(a);
    double value = 0;

    if (a.kind == ActionKind::Inspect) {
      for (std::size_t v : model.missing_vars()) {
        std::size_t part = *product.variables[v].part;
        bool absent = gt.assignment[v];
        bool says_missing = rng.bernoulli(observe_missing(!absent, cell.observer));
        ts.obs.push_back({says_missing ? ObsKind::Missing : ObsKind::PresentConfirmed, part});
      }
    } else {
      const std::string& pname = product.parts.at(a.part).name;
      double t_change = cell.change_time(tool, a.tool);
      double t_act = cell.action_time(a.tool, pname);
      tool = a.tool;
      if ((removed >> a.part) & 1ULL) {
        ts.time = t_act + t_change;
        ts.obs.push_back({ObsKind::Missing, a.part});
      } else if (a.kind == ActionKind::Destructive) {
        const DestructiveSpec* ds = product.destructive_for(a.part);
        if (!ds) fail_input("controller chose an undeclared destructive action");
        ts.time = t_act + t_change + cell.place_time(pname);
        value += product.parts[a.part].value_penalty;
        state = mark_removed(state, a.part);
        removed |= 1ULL << a.part;
        ts.obs.push_back({ObsKind::Removed, a.part});
        for (std::size_t c : ds->collateral) {
          if ((removed >> c) & 1ULL) continue;
          if (!product.parts[c].is_target) value += product.parts[c].value_penalty;
          state = mark_removed(state, c);
          removed |= 1ULL << c;
          ts.obs.push_back({ObsKind::Removed, c});
        }
      } else {
        ts.time = t_act + t_change;
        if (!rng.bernoulli(cell.tools[a.tool].p_success)) {
          ts.obs.push_back({ObsKind::NoObservation, a.part});
        } else {
          bool moved = rng.bernoulli(observe_glue(state, a.part).first);
          Vec3 from{0, 0, 0};
          Vec3 to{0, 0, moved ? cell.pull_distance_mm : 0.0};
          bool says_stuck = rng.bernoulli(observe_stuck(from, to, cell.observer));
          if (moved) {
            ts.time += cell.place_time(pname);
            state = mark_removed(state, a.part);
            removed |= 1ULL << a.part;
          }
          ts.obs.push_back({says_stuck ? ObsKind::StuckDetected : ObsKind::Removed, a.part});
        }
      }
    }
    ts.reward = -(ts.time + value);
    cumulative += ts.time;
    ts.cumulative_time = cumulative;
    trace.destroyed_value += value;
    for (const auto& o : ts.obs) ts.obs_labels.push_back(model.label(o));
    controller.observe(a, ts.obs);
    trace.steps.push_back(std::move(ts));
  }
  trace.success = done();
  trace.total_time = cumulative;
  return trace;
}

namespace {

nlohmann::json steps_json(const EpisodeTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps)
    steps.push_back({{"action", s.action_label},
                     {"observations", s.obs_labels},
                     {"reward", s.reward},
                     {"time", s.time},
                     {"cumulative_time", s.cumulative_time}});
  return steps;
}

}  // namespace

nlohmann::json trace_to_json(const Pomdp& model, const EpisodeTrace& trace) {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& v : model.product().variables) assignment[v.name] = bool(trace.assignment[v.id]);
  return {{"seed", trace.seed},
          {"product", model.product().name},
          {"cell", model.cell().name},
          {"assignment", assignment},
          {"outcome", trace.success ? "success" : "dead_end"},
          {"total_time", trace.total_time},
          {"destroyed_value", trace.destroyed_value},
          {"steps", steps_json(trace)}};
}

namespace {

// Fixpoint of x[n] = absorbing(n) or sum_o p_o (c_o + x[next]) under the policy.
std::vector<double> policy_fixpoint(const PomdpGraph& graph, const Policy& policy, bool time_cost,
                                    double tol) {
  const std::size_t n = graph.nodes.size();
  std::vector<double> x(n, 0.0), next(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (!time_cost && graph.nodes[i].terminal) x[i] = next[i] = 1.0;
  for (std::size_t sweep = 0; sweep < 1'000'000; ++sweep) {
    double change = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& node = graph.nodes[i];
      if (node.terminal || i >= policy.edge.size() || !policy.edge[i]) continue;
      double acc = 0;
      for (const auto& o : node.edges[*policy.edge[i]].outcomes)
        acc += o.prob * ((time_cost ? o.time : 0.0) + x[o.next]);
      next[i] = acc;
      change = std::max(change, std::abs(acc - x[i]));
    }
    x.swap(next);
    if (change < tol) return x;
  }
  fail_model("policy evaluation did not converge");
}

}  // namespace

double success_probability(const PomdpGraph& graph, const Policy& policy) {
  return policy_fixpoint(graph, policy, false, 1e-15)[graph.root];
}

double expected_time(const PomdpGraph& graph, const Policy& policy) {
  return policy_fixpoint(graph, policy, true, 1e-10)[graph.root];
}

ControllerSpec probabilistic_spec(const GraphOptions& graph_options, const QLearnParams& params,
                                  std::uint64_t train_seed) {
  return {"probabilistic", [=](const Pomdp& model, std::size_t scenario) -> std::unique_ptr<Controller> {
            auto m = std::make_shared<const Pomdp>(model.product(), model.cell(), graph_options.delta);
            auto g = std::make_shared<const PomdpGraph>(build_graph(*m, graph_options));
            auto table = q_learn(*g, params, derive_seed(train_seed, scenario));
            auto p = std::make_shared<const Policy>(policy_from_qtable(*g, table));
            return std::make_unique<ProbabilisticController>(m, g, p);
          }};
}

ControllerSpec oracle_spec(const GraphOptions& graph_options) {
  return {"oracle", [=](const Pomdp& model, std::size_t) -> std::unique_ptr<Controller> {
            auto m = std::make_shared<const Pomdp>(model.product(), model.cell(), graph_options.delta);
            auto g = std::make_shared<const PomdpGraph>(build_graph(*m, graph_options));
            auto p = std::make_shared<const Policy>(value_iteration(*g).policy);
            return std::make_unique<ProbabilisticController>(m, g, p, "oracle");
          }};
}

ControllerSpec deterministic_spec(const GraphOptions& graph_options) {
  return {"deterministic", [=](const Pomdp& model, std::size_t) -> std::unique_ptr<Controller> {
            auto b = std::make_shared<const DeterministicBaseline>(model.product(), model.cell(), graph_options);
            return std::make_unique<DeterministicController>(b);
          }};
}

const EvalEntry* EvalReport::find(const std::string& scenario, const std::string& controller) const {
  for (const auto& e : entries)
    if (e.scenario == scenario && e.controller == controller) return &e;
  return nullptr;
}

std::uint64_t episode_seed(std::uint64_t base_seed, std::size_t scenario, std::size_t episode) {
  return derive_seed(base_seed, scenario, episode);
}

std::pair<double, double> mean_variance(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0;
  for (double x : xs) sum += x;
  double mean = sum / double(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / double(xs.size())};
}

EvalReport evaluate(const Product& product, const Cell& cell, const std::vector<Scenario>& scenarios,
                    const std::vector<ControllerSpec>& controllers, const EvalOptions& options) {
  if (options.episodes == 0) fail_input("episodes must be at least 1");
  EvalReport report;
  report.base_seed = options.base_seed;
  report.episodes = options.episodes;
  const std::size_t workers = std::max<std::size_t>(1, options.workers);

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const Pomdp model(apply_scenario(product, scenarios[s]), cell, 0.0);
    const auto forced = forced_assignment(model.product(), scenarios[s]);
    for (const auto& spec : controllers) {
      std::unique_ptr<Controller> proto = spec.make(model, s);
      std::vector<EpisodeTrace> traces(options.episodes);
      std::vector<std::exception_ptr> errors(workers);
      auto run = [&](std::size_t w) {
        try {
          auto ctrl = proto->clone();
          for (std::size_t e = w; e < options.episodes; e += workers)
            traces[e] = rollout(model, *ctrl, episode_seed(options.base_seed, s, e), forced, options.rollout);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      };
      if (workers == 1) {
        run(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
        for (auto& t : pool) t.join();
      }
      for (auto& err : errors)
        if (err) std::rethrow_exception(err);

      EvalEntry entry;
      entry.scenario = scenarios[s].name;
      entry.controller = proto->name();
      entry.n = options.episodes;
      std::size_t successes = 0;
      for (const auto& tr : traces) {
        entry.times.push_back(tr.total_time + (tr.success ? 0.0 : options.failure_penalty));
        entry.seeds.push_back(tr.seed);
        if (tr.success) ++successes;
        for (const auto& st : tr.steps) ++entry.action_histogram[st.action_label];
      }
      entry.dead_ends = entry.n - successes;
      entry.success_rate = double(successes) / double(entry.n);
      std::tie(entry.mean, entry.variance) = mean_variance(entry.times);
      if (options.keep_traces) entry.traces = std::move(traces);
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "scenario,controller,mean_s,var_s2,success_rate,n\n";
  for (const auto& e : report.entries)
    out << e.scenario << ',' << e.controller << ',' << e.mean << ',' << e.variance << ',' << e.success_rate << ','
        << e.n << '\n';
  return out.str();
}

nlohmann::json report_json(const EvalReport& report, bool include_traces) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : report.entries) {
    nlohmann::json j{{"scenario", e.scenario},
                     {"controller", e.controller},
                     {"n", e.n},
                     {"mean_s", e.mean},
                     {"var_s2", e.variance},
                     {"success_rate", e.success_rate},
                     {"dead_ends", e.dead_ends},
                     {"action_histogram", e.action_histogram},
                     {"times", e.times},
                     {"seeds", e.seeds}};
    if (include_traces && !e.traces.empty()) {
      nlohmann::json tr = nlohmann::json::array();
      for (const auto& t : e.traces)
        tr.push_back({{"seed", t.seed},
                      {"assignment", t.assignment},
                      {"outcome", t.success ? "success" : "dead_end"},
                      {"total_time", t.total_time},
                      {"steps", steps_json(t)}});
      j["traces"] = tr;
    }
    entries.push_back(std::move(j));
  }
  return {{"base_seed", report.base_seed}, {"episodes", report.episodes}, {"entries", entries}};
}

}  // namespace disasm
