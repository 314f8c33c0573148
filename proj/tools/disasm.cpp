// disasm: relation extraction, graph building, training, evaluation and rollouts.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "disasm/cell.hpp"
#include "disasm/error.hpp"
#include "disasm/extract.hpp"
#include "disasm/mesh.hpp"
#include "disasm/planner.hpp"
#include "disasm/pomdp.hpp"
#include "disasm/product.hpp"
#include "disasm/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace disasm;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240501;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail_input("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail_input(path.string() + ": " + e.what());
  }
}

fs::path cache_dir() {
  const char* env = std::getenv("DISASM_CACHE_DIR");
  return env && *env ? fs::path(env) : fs::path(".disasm_cache");
}

struct Common {
  std::string product;
  std::string cell;
  std::string scenario;
  std::string scenario_name;
  std::uint64_t seed = kDefaultSeed;
  double delta = 0.0;
  double gamma = 0.99;
  double dead_end_penalty = 0.0;
  std::size_t max_nodes = 1'000'000;
  std::string out;
};

GraphOptions graph_options(const Common& c) {
  GraphOptions o;
  o.delta = c.delta;
  o.gamma = c.gamma;
  o.dead_end_penalty = c.dead_end_penalty;
  o.max_nodes = c.max_nodes;
  return o;
}

// Resolves product and cell, falling back to the paths named by the scenario file.
struct Inputs {
  Product product;
  Cell cell;
  std::optional<ScenarioSet> scenarios;
};

Inputs load_inputs(const Common& c) {
  std::optional<ScenarioSet> set;
  if (!c.scenario.empty()) set = load_scenarios(c.scenario);
  fs::path product = !c.product.empty() ? fs::path(c.product) : set ? set->product : fs::path();
  fs::path cell = !c.cell.empty() ? fs::path(c.cell) : set ? set->cell : fs::path();
  if (product.empty()) fail_input("--product is required");
  if (cell.empty()) fail_input("--cell is required");
  return {load_product(product), load_cell(cell), std::move(set)};
}

const Scenario* pick_scenario(const Inputs& in, const std::string& name) {
  if (!in.scenarios) return nullptr;
  if (name.empty()) return &in.scenarios->scenarios.front();
  for (const auto& s : in.scenarios->scenarios)
    if (s.name == name) return &s;
  fail_input("scenario '" + name + "' not found");
}

// Loads the graph from `path` (or the cache) and checks it against the inputs.
PomdpGraph obtain_graph(const Pomdp& model, const GraphOptions& opts, const std::string& path, bool verbose) {
  const std::string key = graph_key(model.product(), model.cell(), opts);
  fs::path file = path.empty() ? cache_dir() / (key + ".graph.json") : fs::path(path);
  if (fs::exists(file)) {
    PomdpGraph g = graph_from_json(read_json(file));
    if (g.key != key) {
      if (!path.empty())
        throw Error(ErrorKind::Incompatible, "graph file " + file.string() + " is stale (key " + g.key +
                                                 ", inputs give " + key + ")");
    } else {
      if (verbose) std::cerr << "using cached graph " << file.string() << "\n";
      return g;
    }
  } else if (!path.empty()) {
    fail_input("graph file " + file.string() + " does not exist");
  }
  PomdpGraph g = build_graph(model, opts);
  write_json(file, graph_to_json(g));
  if (verbose) std::cerr << "built graph " << file.string() << "\n";
  return g;
}

void add_common(CLI::App* cmd, Common& c, bool scenario) {
  cmd->add_option("--product", c.product, "Product spec (JSON)");
  cmd->add_option("--cell", c.cell, "Robot cell capability spec (JSON)");
  if (scenario) {
    cmd->add_option("--scenario", c.scenario, "Scenario file (JSON)");
    cmd->add_option("--scenario-name", c.scenario_name, "Scenario to use from the file");
  }
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--delta", c.delta, "Certainty threshold for action prerequisites")->capture_default_str();
  cmd->add_option("--gamma", c.gamma, "Discount factor")->capture_default_str();
  cmd->add_option("--dead-end-penalty", c.dead_end_penalty, "Planning cost of a dead end (s)")->capture_default_str();
  cmd->add_option("--max-nodes", c.max_nodes, "Graph node cap")->capture_default_str();
}

int cmd_extract(const std::string& manifest_path, const std::string& mesh_dir_opt, std::size_t n_theta,
                std::size_t n_phi, const ExtractionOptions& eo, const std::string& out_dir) {
  const fs::path manifest_file(manifest_path);
  json manifest = read_json(manifest_file);
  const fs::path mesh_dir = mesh_dir_opt.empty() ? manifest_file.parent_path() : fs::path(mesh_dir_opt);
  const fs::path out(out_dir);
  SphereGrid grid(n_theta, n_phi);

  std::vector<std::string> names;
  std::vector<TriMesh> meshes;
  try {
    for (const auto& p : manifest.at("parts")) {
      names.push_back(p.at("name").get<std::string>());
      meshes.push_back(load_mesh(mesh_dir / p.at("mesh").get<std::string>()));
    }
  } catch (const json::exception& e) {
    fail_input(std::string("manifest: ") + e.what());
  }
  if (names.empty()) fail_input("manifest lists no parts");

  json product;
  product["name"] = manifest.value("name", std::string("extracted"));
  product["grid"] = {{"n_theta", n_theta}, {"n_phi", n_phi}};
  json parts = json::array();
  for (const auto& n : names) parts.push_back({{"name", n}});
  product["parts"] = parts;
  product["targets"] = manifest.value("targets", json::array());
  json relations = json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (i == j) continue;
      ExtractionResult r = extract_relation_detailed(meshes[i], meshes[j], grid, eo);
      std::size_t free_bins = 0;
      for (double v : r.relation.values()) free_bins += v > 0 ? 1 : 0;
      std::cout << names[i] << " " << names[j] << " samples=" << r.samples << " contacts=" << r.contacts
                << " normals=" << r.contact_normals.size() << " free_bins=" << free_bins << "/" << grid.size()
                << "\n";
      const std::string file = "relations/" + names[i] + "__" + names[j] + ".json";
      write_json(out / file, to_json(r.relation));
      relations.push_back({{"i", names[i]}, {"j", names[j]}, {"grid", {{"file", file}}}});
    }
  }
  product["relations"] = relations;
  write_json(out / "product.json", product);
  return 0;
}

int cmd_build(const Common& c, const std::string& graph_path) {
  Inputs in = load_inputs(c);
  Product product = in.product;
  if (const Scenario* s = pick_scenario(in, c.scenario_name)) product = apply_scenario(product, *s);
  Pomdp model(product, in.cell, c.delta);
  GraphOptions opts = graph_options(c);
  std::string path = !graph_path.empty() ? graph_path : c.out;
  fs::path file = path.empty() ? cache_dir() / (graph_key(model.product(), model.cell(), opts) + ".graph.json")
                               : fs::path(path);
  PomdpGraph g = build_graph(model, opts);
  write_json(file, graph_to_json(g));
  std::cout << "graph " << file.string() << "\nkey " << g.key << "\nnodes " << g.nodes.size() << "\nedges "
            << g.edge_count() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& graph_path, std::size_t episodes, bool oracle) {
  Inputs in = load_inputs(c);
  Product product = in.product;
  if (const Scenario* s = pick_scenario(in, c.scenario_name)) product = apply_scenario(product, *s);
  Pomdp model(product, in.cell, c.delta);
  GraphOptions opts = graph_options(c);
  PomdpGraph g = obtain_graph(model, opts, graph_path, true);
  QLearnParams params;
  params.gamma = c.gamma;
  params.episodes = episodes;
  QTable table = q_learn(g, params, c.seed);
  Policy policy = policy_from_qtable(g, table);
  const fs::path out = c.out.empty() ? fs::path("policy.json") : fs::path(c.out);
  write_json(out, policy_to_json(policy, g));
  const auto& root_q = table.q[g.root];
  double q_root = root_q.empty() ? absorbing_value(g, g.root) : root_q[*greedy_index(root_q)];
  std::cout << std::setprecision(10) << "policy " << out.string() << "\nroot_action "
            << (policy.edge[g.root] ? g.label(*policy.action(g, g.root)) : std::string("none")) << "\nroot_q "
            << q_root << "\n";
  if (oracle) {
    ValueIterationResult vi = value_iteration(g);
    double v = vi.v[g.root];
    double gap = std::abs(q_root - v) / std::max(1e-12, std::abs(v));
    std::cout << "oracle_action "
              << (vi.policy.edge[g.root] ? g.label(*vi.policy.action(g, g.root)) : std::string("none"))
              << "\noracle_v " << v << "\ngap_percent " << 100.0 * gap << "\n";
  }
  return 0;
}

int cmd_eval(const Common& c, std::size_t episodes, std::size_t workers, const std::string& policy_path,
             std::size_t train_episodes, double failure_penalty, bool traces) {
  Inputs in = load_inputs(c);
  std::vector<Scenario> scenarios;
  if (in.scenarios) {
    if (!c.scenario_name.empty()) scenarios.push_back(*pick_scenario(in, c.scenario_name));
    else scenarios = in.scenarios->scenarios;
  } else {
    scenarios.push_back(Scenario{"default", {}, {}});
  }
  GraphOptions opts = graph_options(c);
  QLearnParams params;
  params.gamma = c.gamma;
  params.episodes = train_episodes;

  std::vector<ControllerSpec> controllers;
  if (!policy_path.empty()) {
    json pj = read_json(policy_path);
    controllers.push_back({"probabilistic", [opts, pj](const Pomdp& model, std::size_t) -> std::unique_ptr<Controller> {
                             auto m = std::make_shared<const Pomdp>(model.product(), model.cell(), opts.delta);
                             auto g = std::make_shared<const PomdpGraph>(build_graph(*m, opts));
                             auto p = std::make_shared<const Policy>(policy_from_json(pj, *g));
                             return std::make_unique<ProbabilisticController>(m, g, p);
                           }});
  } else {
    controllers.push_back(probabilistic_spec(opts, params, c.seed));
  }
  controllers.push_back(deterministic_spec(opts));

  EvalOptions eo;
  eo.episodes = episodes;
  eo.base_seed = c.seed;
  eo.workers = workers;
  eo.keep_traces = traces;
  eo.failure_penalty = failure_penalty;
  EvalReport report = evaluate(in.product, in.cell, scenarios, controllers, eo);
  const fs::path out = c.out.empty() ? fs::path("eval") : fs::path(c.out);
  write_text(out / "report.csv", report_csv(report));
  write_json(out / "report.json", report_json(report, traces));
  std::cout << report_csv(report);
  return 0;
}

int cmd_rollout(const Common& c, const std::string& policy_path, const std::string& controller,
                std::size_t train_episodes) {
  Inputs in = load_inputs(c);
  Product product = in.product;
  std::optional<std::vector<bool>> forced;
  if (const Scenario* s = pick_scenario(in, c.scenario_name)) {
    product = apply_scenario(product, *s);
    forced = forced_assignment(product, *s);
  }
  auto model = std::make_shared<const Pomdp>(product, in.cell, c.delta);
  GraphOptions opts = graph_options(c);
  std::unique_ptr<Controller> ctrl;
  if (controller == "deterministic") {
    ctrl = std::make_unique<DeterministicController>(
        std::make_shared<const DeterministicBaseline>(model->product(), model->cell(), opts));
  } else {
    auto g = std::make_shared<const PomdpGraph>(obtain_graph(*model, opts, "", false));
    std::shared_ptr<const Policy> p;
    if (!policy_path.empty()) {
      p = std::make_shared<const Policy>(policy_from_json(read_json(policy_path), *g));
    } else if (controller == "oracle") {
      p = std::make_shared<const Policy>(value_iteration(*g).policy);
    } else if (controller == "probabilistic") {
      QLearnParams params;
      params.gamma = c.gamma;
      params.episodes = train_episodes;
      p = std::make_shared<const Policy>(policy_from_qtable(*g, q_learn(*g, params, c.seed)));
    } else {
      fail_input("unknown controller '" + controller + "'");
    }
    ctrl = std::make_unique<ProbabilisticController>(model, g, p, controller);
  }
  EpisodeTrace trace = rollout(*model, *ctrl, c.seed, forced);
  std::size_t k = 1;
  for (const auto& s : trace.steps) {
    std::cout << k++ << ". " << s.action_label << " ->";
    for (const auto& o : s.obs_labels) std::cout << " " << o;
    std::cout << "  [t=" << s.cumulative_time << "]\n";
  }
  std::cout << (trace.success ? "success" : "dead_end") << " total_time " << trace.total_time << "\n";
  if (!c.out.empty()) {
    json j = trace_to_json(*model, trace);
    j["controller"] = ctrl->name();
    write_json(c.out, j);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic disassembly planning"};
  app.require_subcommand(1);

  Common common;

  auto* extract = app.add_subcommand("extract", "Extract pairwise relations from part meshes");
  std::string manifest, mesh_dir;
  std::size_t n_theta = 16, n_phi = 32;
  ExtractionOptions eo;
  extract->add_option("--manifest", manifest, "Assembly manifest (JSON)")->required();
  extract->add_option("--mesh-dir", mesh_dir, "Directory of the meshes (default: manifest directory)");
  extract->add_option("--n-theta", n_theta, "Polar bins")->capture_default_str();
  extract->add_option("--n-phi", n_phi, "Azimuth bins")->capture_default_str();
  extract->add_option("--samples", eo.n_samples, "Surface samples per part")->capture_default_str();
  extract->add_option("--eps-contact", eo.eps_contact, "Contact distance")->capture_default_str();
  extract->add_option("--eps-normal", eo.eps_normal, "Half-space tolerance")->capture_default_str();
  extract->add_option("--out", common.out, "Output directory")->required();

  auto* build = app.add_subcommand("build", "Build the knowledge-state graph");
  std::string graph_path;
  add_common(build, common, true);
  build->add_option("--out", common.out, "Graph file (default: cache directory)");

  auto* train = app.add_subcommand("train", "Train a Q-learning policy on a graph");
  std::size_t episodes = 5000;
  bool oracle = false;
  add_common(train, common, true);
  train->add_option("--graph", graph_path, "Graph file (default: cache directory)");
  train->add_option("--episodes", episodes, "Training episodes")->capture_default_str();
  train->add_flag("--oracle", oracle, "Compare with the value-iteration oracle");
  train->add_option("--out", common.out, "Policy file")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Monte-Carlo evaluation of both planners");
  std::size_t eval_episodes = 1000, workers = 1, train_episodes = 5000;
  std::string policy_path;
  double failure_penalty = 0;
  bool traces = false;
  add_common(eval, common, true);
  eval->add_option("--episodes", eval_episodes, "Episodes per scenario")->capture_default_str();
  eval->add_option("--workers", workers, "Worker threads")->capture_default_str();
  eval->add_option("--policy", policy_path, "Use this policy instead of training one");
  eval->add_option("--train-episodes", train_episodes, "Q-learning episodes per scenario")->capture_default_str();
  eval->add_option("--failure-penalty", failure_penalty, "Seconds added to dead-end episodes")->capture_default_str();
  eval->add_flag("--traces", traces, "Embed episode traces in the JSON report");
  eval->add_option("--out", common.out, "Output directory")->capture_default_str();

  auto* roll = app.add_subcommand("rollout", "Simulate one episode and print its trace");
  std::string controller = "probabilistic";
  add_common(roll, common, true);
  roll->add_option("--policy", policy_path, "Policy file");
  roll->add_option("--controller", controller, "probabilistic, oracle or deterministic")->capture_default_str();
  roll->add_option("--train-episodes", train_episodes, "Q-learning episodes")->capture_default_str();
  roll->add_option("--out", common.out, "Trace file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*extract) return cmd_extract(manifest, mesh_dir, n_theta, n_phi, eo, common.out);
    if (*build) return cmd_build(common, graph_path);
    if (*train) return cmd_train(common, graph_path, episodes, oracle);
    if (*eval) return cmd_eval(common, eval_episodes, workers, policy_path, train_episodes, failure_penalty, traces);
    if (*roll) return cmd_rollout(common, policy_path, controller, train_episodes);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Input: return 2;
      case ErrorKind::ResourceCap: return 3;
      case ErrorKind::Incompatible: return 4;
      case ErrorKind::Model: return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
