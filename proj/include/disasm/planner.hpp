#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "disasm/pomdp.hpp"

namespace disasm {

enum class PolicySource { QLearn, ValueIteration, DeterministicBaseline };

const char* to_string(PolicySource s);

// Index of the best entry; near-equal values go to the lowest index, which
// is the lowest (part, tool) because graph edges are sorted that way.
std::optional<std::size_t> greedy_index(const std::vector<double>& q);

struct Policy {
  PolicySource source = PolicySource::ValueIteration;
  std::string graph_key;
  std::vector<std::optional<std::size_t>> edge;  // chosen edge per node
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<std::vector<double>> q;  // snapshot used to derive `edge`

  std::optional<Action> action(const PomdpGraph& graph, std::size_t node) const;
};

Policy policy_from_q(const PomdpGraph& graph, std::vector<std::vector<double>> q, PolicySource source);

nlohmann::json policy_to_json(const Policy& policy, const PomdpGraph& graph);
// Throws an Incompatible error when the policy was trained on another graph.
Policy policy_from_json(const nlohmann::json& j, const PomdpGraph& graph);

// Value of leaving the graph at `node` (0 for terminals, -penalty for dead ends).
double absorbing_value(const PomdpGraph& graph, std::size_t node);
double q_value(const PomdpGraph& graph, const GraphEdge& edge, const std::vector<double>& v);

struct ValueIterationResult {
  std::vector<double> v;
  std::vector<std::vector<double>> q;
  Policy policy;
  std::size_t sweeps = 0;
  std::vector<double> residuals;  // sup-norm change per sweep
};

ValueIterationResult value_iteration(const PomdpGraph& graph, double tol = 1e-10, std::size_t max_sweeps = 200000);

struct QLearnParams {
  double gamma = 0.99;
  double alpha0 = 0.7;
  double tau = 7;  // alpha = alpha0 / (1 + visits / tau)
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t episodes = 5000;
  std::size_t max_steps = 0;  // 0: ten times the part count
  bool backward = true;  // replay each episode's updates from its last step
  double q_init = 0.0;

  nlohmann::json to_json() const;
  static QLearnParams from_json(const nlohmann::json& j);
};

struct QTable {
  std::vector<std::vector<double>> q;
  std::vector<std::vector<std::uint32_t>> visits;
  QLearnParams params;
  std::uint64_t seed = 0;
};

QTable q_learn(const PomdpGraph& graph, const QLearnParams& params = {}, std::uint64_t seed = 0);
Policy policy_from_qtable(const PomdpGraph& graph, const QTable& table);

// Per-variable posterior that the end-of-life condition is present.
struct Belief {
  std::vector<double> p;
  // Ties go to "condition absent".
  std::vector<bool> most_likely() const;
};

Belief prior_belief(const Product& product);

// Bayes update for the observations produced by `action` taken while the parts
// in `removed` were gone. Variables unrelated to the action are untouched.
Belief belief_update(const Pomdp& model, const Belief& belief, std::uint64_t removed, const Action& action,
                     const std::vector<Observation>& obs);

// Knowledge node implied by the belief's most likely assignment.
NodeKey knowledge_node(const Pomdp& model, const Belief& belief, std::uint64_t removed, std::uint32_t tool,
                       bool inspected);

// Certainty-equivalent action: policy action at the most likely node.
std::optional<Action> select_action(const PomdpGraph& graph, const Policy& policy, const Pomdp& model,
                                    const Belief& belief, std::uint64_t removed, std::uint32_t tool,
                                    bool inspected);

// Best-case planner: every prior forced to zero, replanned from the current
// knowledge node whenever observations contradict the plan.
class DeterministicBaseline {
 public:
  DeterministicBaseline(const Product& product, const Cell& cell, GraphOptions options = {});

  const Pomdp& model() const { return model_; }
  std::optional<Action> plan(const NodeKey& node) const;
  // Graph and oracle for the nominal root, for reporting.
  const PomdpGraph& nominal_graph() const { return *nominal_graph_; }
  const ValueIterationResult& nominal_solution() const { return *nominal_solution_; }
  std::size_t replans() const;

 private:
  Pomdp model_;
  GraphOptions options_;
  std::shared_ptr<PomdpGraph> nominal_graph_;
  std::shared_ptr<ValueIterationResult> nominal_solution_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::optional<Action>> memo_;
  mutable std::size_t replans_ = 0;

  void absorb(const PomdpGraph& graph, const ValueIterationResult& sol) const;
};

}  // namespace disasm
