#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disasm/planner.hpp"
#include "disasm/pomdp.hpp"

namespace disasm {

struct Scenario {
  std::string name;
  std::map<std::string, double> priors;  // variable name -> prior override
  std::map<std::string, bool> force;     // fixed ground truth; unlisted variables are false
};

struct ScenarioSet {
  std::string name;
  std::filesystem::path product;
  std::filesystem::path cell;
  std::vector<Scenario> scenarios;
};

ScenarioSet scenarios_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ScenarioSet load_scenarios(const std::filesystem::path& path);
Product apply_scenario(const Product& product, const Scenario& scenario);
std::optional<std::vector<bool>> forced_assignment(const Product& product, const Scenario& scenario);

// Execution-time decision maker. Instances carry per-episode state; clone()
// gives an independent copy sharing the immutable planning artifacts.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset() = 0;
  virtual std::optional<Action> act() = 0;
  virtual void observe(const Action& action, const std::vector<Observation>& obs) = 0;
  virtual std::unique_ptr<Controller> clone() const = 0;
};

class ProbabilisticController : public Controller {
 public:
  ProbabilisticController(std::shared_ptr<const Pomdp> model, std::shared_ptr<const PomdpGraph> graph,
                          std::shared_ptr<const Policy> policy, std::string name = "probabilistic");
  std::string name() const override { return name_; }
  void reset() override;
  std::optional<Action> act() override;
  void observe(const Action& action, const std::vector<Observation>& obs) override;
  std::unique_ptr<Controller> clone() const override;
  const Belief& belief() const { return belief_; }

 private:
  std::shared_ptr<const Pomdp> model_;
  std::shared_ptr<const PomdpGraph> graph_;
  std::shared_ptr<const Policy> policy_;
  std::string name_;
  Belief belief_;
  std::uint64_t removed_ = 0;
  std::uint32_t tool_ = 0;
  bool inspected_ = false;
};

class DeterministicController : public Controller {
 public:
  explicit DeterministicController(std::shared_ptr<const DeterministicBaseline> baseline);
  std::string name() const override { return "deterministic"; }
  void reset() override;
  std::optional<Action> act() override;
  void observe(const Action& action, const std::vector<Observation>& obs) override;
  std::unique_ptr<Controller> clone() const override;

 private:
  std::shared_ptr<const DeterministicBaseline> baseline_;
  NodeKey node_;
};

struct TraceStep {
  Action action;
  std::string action_label;
  std::vector<Observation> obs;
  std::vector<std::string> obs_labels;
  double reward = 0;
  double time = 0;
  double cumulative_time = 0;
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  std::vector<bool> assignment;
  std::vector<TraceStep> steps;
  bool success = false;
  double total_time = 0;
  double destroyed_value = 0;
};

struct RolloutOptions {
  std::size_t step_cap_factor = 10;  // step cap = factor * part count
};

// Simulates one episode against a ground truth drawn from `seed` (or the
// forced assignment). Outcomes use the realized relations, not the priors.
EpisodeTrace rollout(const Pomdp& model, Controller& controller, std::uint64_t seed,
                     const std::optional<std::vector<bool>>& forced = std::nullopt, const RolloutOptions& options = {});

nlohmann::json trace_to_json(const Pomdp& model, const EpisodeTrace& trace);

// Exact probability that following `policy` from the root ends in a terminal node.
double success_probability(const PomdpGraph& graph, const Policy& policy);
// Exact expected elapsed time until the policy stops (success or dead end).
double expected_time(const PomdpGraph& graph, const Policy& policy);

struct ControllerSpec {
  std::string name;
  // Builds the controller for one scenario model.
  std::function<std::unique_ptr<Controller>(const Pomdp& model, std::size_t scenario_index)> make;
};

ControllerSpec probabilistic_spec(const GraphOptions& graph_options, const QLearnParams& params,
                                  std::uint64_t train_seed);
ControllerSpec oracle_spec(const GraphOptions& graph_options);
ControllerSpec deterministic_spec(const GraphOptions& graph_options);

struct EvalOptions {
  std::size_t episodes = 1000;
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  bool keep_traces = false;
  double failure_penalty = 0;  // added to the time of dead-end episodes
  RolloutOptions rollout;
};

struct EvalEntry {
  std::string scenario;
  std::string controller;
  std::size_t n = 0;
  double mean = 0;
  double variance = 0;  // population variance
  double success_rate = 0;
  std::size_t dead_ends = 0;
  std::map<std::string, std::size_t> action_histogram;
  std::vector<double> times;
  std::vector<std::uint64_t> seeds;
  std::vector<EpisodeTrace> traces;
};

struct EvalReport {
  std::uint64_t base_seed = 0;
  std::size_t episodes = 0;
  std::vector<EvalEntry> entries;
  const EvalEntry* find(const std::string& scenario, const std::string& controller) const;
};

std::uint64_t episode_seed(std::uint64_t base_seed, std::size_t scenario, std::size_t episode);

EvalReport evaluate(const Product& product, const Cell& cell, const std::vector<Scenario>& scenarios,
                    const std::vector<ControllerSpec>& controllers, const EvalOptions& options);

std::string report_csv(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report, bool include_traces = true);

// Mean and population variance, accumulated in index order.
std::pair<double, double> mean_variance(const std::vector<double>& xs);

}  // namespace disasm
