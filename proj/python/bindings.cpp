#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "disasm/error.hpp"
#include "disasm/extract.hpp"
#include "disasm/sim.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace disasm;

namespace {

py::object to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& x : j) out.append(to_py(x));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = to_py(v);
      return out;
    }
    default:
      throw Error(ErrorKind::Input, "unsupported JSON value");
  }
}

json from_py(const py::handle& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

struct Graph {
  std::shared_ptr<const Pomdp> model;
  std::shared_ptr<const PomdpGraph> graph;
};

Graph make_graph(const std::string& product, const std::string& cell, double delta, double gamma,
                 double dead_end_penalty, std::size_t max_nodes, const std::map<std::string, double>& priors) {
  Product p = load_product(product);
  if (!priors.empty()) p = p.with_priors(priors);
  auto model = std::make_shared<const Pomdp>(p, load_cell(cell), delta);
  GraphOptions o;
  o.delta = delta;
  o.gamma = gamma;
  o.dead_end_penalty = dead_end_penalty;
  o.max_nodes = max_nodes;
  return {model, std::make_shared<const PomdpGraph>(build_graph(*model, o))};
}

std::string root_label(const Graph& g, const Policy& p) {
  auto a = p.action(*g.graph, g.graph->root);
  return a ? g.model->label(*a) : std::string();
}

py::dict solve(const Graph& g) {
  auto vi = value_iteration(*g.graph);
  py::dict out;
  out["v_root"] = vi.v[g.graph->root];
  out["root_action"] = root_label(g, vi.policy);
  out["sweeps"] = vi.sweeps;
  out["policy"] = to_py(policy_to_json(vi.policy, *g.graph));
  return out;
}

py::dict train(const Graph& g, std::uint64_t seed, std::size_t episodes, double alpha0, double tau) {
  QLearnParams params;
  params.gamma = g.graph->options.gamma;
  params.episodes = episodes;
  params.alpha0 = alpha0;
  params.tau = tau;
  QTable t = q_learn(*g.graph, params, seed);
  Policy p = policy_from_qtable(*g.graph, t);
  py::dict out;
  out["root_action"] = root_label(g, p);
  out["root_q"] = p.edge[g.graph->root] ? t.q[g.graph->root][*p.edge[g.graph->root]] : 0.0;
  out["policy"] = to_py(policy_to_json(p, *g.graph));
  return out;
}

Policy policy_arg(const Graph& g, const py::object& policy) { return policy_from_json(from_py(policy), *g.graph); }

ControllerSpec controller_spec(const std::string& name, std::uint64_t seed, std::size_t train_episodes) {
  if (name == "probabilistic") {
    QLearnParams params;
    params.episodes = train_episodes;
    return probabilistic_spec({}, params, seed);
  }
  if (name == "oracle") return oracle_spec({});
  if (name == "deterministic") return deterministic_spec({});
  throw Error(ErrorKind::Input, "unknown controller '" + name + "'");
}

py::object run_evaluation(const std::string& scenario_file, std::size_t episodes, std::uint64_t seed,
                          std::size_t workers, const std::vector<std::string>& controllers,
                          std::size_t train_episodes) {
  ScenarioSet set = load_scenarios(scenario_file);
  std::vector<ControllerSpec> specs;
  for (const auto& c : controllers) specs.push_back(controller_spec(c, seed, train_episodes));
  EvalOptions o;
  o.episodes = episodes;
  o.base_seed = seed;
  o.workers = workers;
  EvalReport r;
  {
    py::gil_scoped_release release;
    r = evaluate(load_product(set.product), load_cell(set.cell), set.scenarios, specs, o);
  }
  return to_py(report_json(r, false));
}

py::object run_rollout(const std::string& scenario_file, const std::string& scenario_name,
                       const std::string& controller, std::uint64_t seed, std::size_t train_episodes) {
  ScenarioSet set = load_scenarios(scenario_file);
  const Scenario* sc = nullptr;
  for (const auto& s : set.scenarios)
    if (s.name == scenario_name) sc = &s;
  if (!sc && !scenario_name.empty()) throw Error(ErrorKind::Input, "no scenario named '" + scenario_name + "'");
  if (!sc && !set.scenarios.empty()) sc = &set.scenarios.front();
  Product p = load_product(set.product);
  std::optional<std::vector<bool>> forced;
  if (sc) {
    p = apply_scenario(p, *sc);
    forced = forced_assignment(p, *sc);
  }
  auto model = std::make_shared<const Pomdp>(p, load_cell(set.cell));
  std::unique_ptr<Controller> ctl;
  if (controller == "deterministic") {
    ctl = std::make_unique<DeterministicController>(
        std::make_shared<const DeterministicBaseline>(model->product(), model->cell()));
  } else {
    auto g = std::make_shared<const PomdpGraph>(build_graph(*model));
    std::shared_ptr<const Policy> pol;
    if (controller == "oracle") {
      pol = std::make_shared<const Policy>(value_iteration(*g).policy);
    } else if (controller == "probabilistic") {
      QLearnParams params;
      params.episodes = train_episodes;
      pol = std::make_shared<const Policy>(policy_from_qtable(*g, q_learn(*g, params, seed)));
    } else {
      throw Error(ErrorKind::Input, "unknown controller '" + controller + "'");
    }
    ctl = std::make_unique<ProbabilisticController>(model, g, pol, controller);
  }
  json j = trace_to_json(*model, rollout(*model, *ctl, seed, forced));
  j["controller"] = ctl->name();
  return to_py(j);
}

std::vector<double> relation(const std::string& mesh_i, const std::string& mesh_j, std::size_t n_theta,
                             std::size_t n_phi, double eps_contact, double eps_normal, std::size_t n_samples) {
  ExtractionOptions o;
  o.eps_contact = eps_contact;
  o.eps_normal = eps_normal;
  o.n_samples = n_samples;
  DirectionGrid d = extract_relation(load_mesh(mesh_i), load_mesh(mesh_j), SphereGrid(n_theta, n_phi), o);
  return {d.values().begin(), d.values().end()};
}

py::tuple row_feasibility(const std::vector<std::vector<double>>& row, std::size_t n_theta, std::size_t n_phi) {
  SphereGrid g(n_theta, n_phi);
  std::vector<DirectionGrid> grids;
  for (const auto& v : row) grids.emplace_back(g, v);
  Feasibility f = feasibility(std::span<const DirectionGrid>(grids));
  return py::make_tuple(f.p, f.best_bin);
}

std::vector<double> bayes_update(const std::string& product, const std::string& cell, std::vector<double> belief,
                                 const std::string& part, const std::string& observation) {
  Pomdp model(load_product(product), load_cell(cell));
  const Product& p = model.product();
  if (belief.empty()) belief = prior_belief(p).p;
  if (belief.size() != p.variables.size()) throw Error(ErrorKind::Input, "belief size does not match the product");
  const std::size_t i = p.part_index(part);
  Action a;
  ObsKind kind;
  if (observation == "missing" || observation == "present") {
    a = {ActionKind::Inspect, kNoPart, 0};
    kind = observation == "missing" ? ObsKind::Missing : ObsKind::PresentConfirmed;
  } else {
    auto tool = p.tool_for(i);
    if (!tool) throw Error(ErrorKind::Input, "part '" + part + "' has no tool");
    a = {ActionKind::NonDestructive, i, *model.cell().tool_index(*tool)};
    if (observation == "stuck") kind = ObsKind::StuckDetected;
    else if (observation == "removed") kind = ObsKind::Removed;
    else throw Error(ErrorKind::Input, "unknown observation '" + observation + "'");
  }
  return belief_update(model, Belief{belief}, 0, a, {{kind, i}}).p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Probabilistic disassembly planning";

  static py::exception<Error> base(m, "DisasmError");
  static py::exception<Error> input(m, "InputError", base.ptr());
  static py::exception<Error> cap(m, "ResourceCapError", base.ptr());
  static py::exception<Error> incompatible(m, "IncompatibleError", base.ptr());
  static py::exception<Error> model_error(m, "ModelError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::Input: py::set_error(input, e.what()); break;
        case ErrorKind::ResourceCap: py::set_error(cap, e.what()); break;
        case ErrorKind::Incompatible: py::set_error(incompatible, e.what()); break;
        default: py::set_error(model_error, e.what()); break;
      }
    } catch (const json::exception& e) {
      py::set_error(input, e.what());
    }
  });

  py::class_<Graph>(m, "Graph")
      .def_property_readonly("key", [](const Graph& g) { return g.graph->key; })
      .def_property_readonly("node_count", [](const Graph& g) { return g.graph->nodes.size(); })
      .def_property_readonly("edge_count", [](const Graph& g) { return g.graph->edge_count(); })
      .def("root_actions",
           [](const Graph& g) {
             std::vector<std::string> out;
             for (const auto& e : g.graph->nodes[g.graph->root].edges) out.push_back(g.model->label(e.action));
             return out;
           })
      .def("to_json", [](const Graph& g) { return to_py(graph_to_json(*g.graph)); })
      .def("__repr__", [](const Graph& g) {
        return "<Graph " + g.graph->product_name + " nodes=" + std::to_string(g.graph->nodes.size()) + ">";
      });

  m.def("build_graph", &make_graph, py::arg("product"), py::arg("cell"), py::arg("delta") = 0.0,
        py::arg("gamma") = 0.99, py::arg("dead_end_penalty") = 0.0, py::arg("max_nodes") = 1000000,
        py::arg("priors") = std::map<std::string, double>{}, "Build the knowledge-state graph from spec files.");
  m.def("value_iteration", &solve, py::arg("graph"), "Exact optimal values and policy.");
  m.def("q_learn", &train, py::arg("graph"), py::arg("seed") = 0, py::arg("episodes") = 5000,
        py::arg("alpha0") = 0.7, py::arg("tau") = 7.0, "Tabular Q-learning on the graph.");
  m.def(
      "success_probability",
      [](const Graph& g, const py::object& policy) { return success_probability(*g.graph, policy_arg(g, policy)); },
      py::arg("graph"), py::arg("policy"));
  m.def(
      "expected_time",
      [](const Graph& g, const py::object& policy) { return expected_time(*g.graph, policy_arg(g, policy)); },
      py::arg("graph"), py::arg("policy"));
  m.def("evaluate", &run_evaluation, py::arg("scenarios"), py::arg("episodes") = 1000,
        py::arg("seed") = 20240501, py::arg("workers") = 1,
        py::arg("controllers") = std::vector<std::string>{"probabilistic", "deterministic"},
        py::arg("train_episodes") = 5000, "Paired-seed evaluation; returns the report without traces.");
  m.def("rollout", &run_rollout, py::arg("scenarios"), py::arg("scenario") = "",
        py::arg("controller") = "probabilistic", py::arg("seed") = 20240501, py::arg("train_episodes") = 5000);
  m.def("extract_relation", &relation, py::arg("mesh_i"), py::arg("mesh_j"), py::arg("n_theta") = 16,
        py::arg("n_phi") = 32, py::arg("eps_contact") = 0.05, py::arg("eps_normal") = 1e-6,
        py::arg("n_samples") = 4096, "Free-motion grid of mesh_i relative to mesh_j.");
  m.def("feasibility", &row_feasibility, py::arg("row"), py::arg("n_theta") = 16, py::arg("n_phi") = 32);
  m.def("bayes_update", &bayes_update, py::arg("product"), py::arg("cell"), py::arg("belief"), py::arg("part"),
        py::arg("observation"));
}
