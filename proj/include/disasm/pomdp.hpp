#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "disasm/cell.hpp"
#include "disasm/product.hpp"

namespace disasm {

inline constexpr std::size_t kNoPart = std::numeric_limits<std::size_t>::max();

enum class Knowledge : std::uint8_t { Unknown = 0, KnownFalse = 1, KnownTrue = 2 };

// Planner state: removed parts, per-variable knowledge, current end effector,
// and whether the initial inspection has happened.
struct NodeKey {
  std::uint64_t removed = 0;
  std::vector<Knowledge> knowledge;
  std::uint32_t tool = 0;
  bool inspected = true;

  bool is_removed(std::size_t part) const { return (removed >> part) & 1ULL; }
  bool operator==(const NodeKey&) const = default;
  std::string encode() const;
};

enum class ActionKind { NonDestructive, Destructive, Inspect };

struct Action {
  ActionKind kind = ActionKind::NonDestructive;
  std::size_t part = kNoPart;
  std::size_t tool = 0;
  bool operator==(const Action&) const = default;
};

enum class ObsKind { Removed, StuckDetected, Missing, PresentConfirmed, NoObservation };

struct Observation {
  ObsKind kind = ObsKind::NoObservation;
  std::size_t part = kNoPart;
  bool operator==(const Observation&) const = default;
};

const char* to_string(ObsKind k);

struct Transition {
  NodeKey next;
  double prob = 0;
  double reward = 0;  // -(time + destroyed value)
  double time = 0;    // seconds spent
  std::vector<Observation> obs;
};

// The disassembly POMDP instantiated for one product on one cell. Latent
// variables enter through their priors; transitions marginalize them.
class Pomdp {
 public:
  Pomdp(Product product, Cell cell, double delta = 0.0);
  Pomdp(const Pomdp& other);

  const Product& product() const { return product_; }
  const Cell& cell() const { return cell_; }
  double delta() const { return delta_; }
  bool has_inspection() const { return !missing_vars_.empty(); }

  NodeKey initial_node() const;
  NodeKey canonical(NodeKey key) const;
  bool is_terminal(const NodeKey& key) const;

  std::vector<Action> enumerate_actions(const NodeKey& key) const;
  std::vector<Transition> transition(const NodeKey& key, const Action& action) const;
  // Reward of the successful outcome when switching from `prev_tool`.
  double reward(const Action& action, std::optional<std::size_t> prev_tool) const;
  double reward(const NodeKey& key, const Action& action) const { return reward(action, key.tool); }

  double marginal_removal_probability(const NodeKey& key, std::size_t part, std::size_t tool) const;
  // max over directions of prod_j psi_ij with removed parts cleared and the
  // operators of `true_vars` applied.
  double row_feasibility(std::size_t part, std::uint64_t removed, std::uint64_t true_vars) const;
  std::vector<std::size_t> relevant_unknowns(const NodeKey& key, std::size_t part) const;
  std::vector<std::size_t> stuck_vars_of(std::size_t part) const;
  std::vector<std::size_t> missing_vars_of(std::size_t part) const;
  const std::vector<std::size_t>& missing_vars() const { return missing_vars_; }

  std::uint64_t stage_evaluations() const { return stage_evaluations_.load(); }
  void reset_stage_evaluations() const { stage_evaluations_ = 0; }

  std::string label(const Action& a) const;
  std::string label(const Observation& o) const;

 private:
  bool stages_pass(std::size_t tool, std::size_t part) const;
  bool variable_relevant(std::size_t var, std::uint64_t removed) const;
  std::uint64_t known_true_mask(const NodeKey& key) const;

  Product product_;
  Cell cell_;
  double delta_;
  std::vector<std::vector<std::size_t>> pair_vars_;  // (i*n + j) -> affecting variables, ascending
  std::vector<std::size_t> missing_vars_;
  mutable std::atomic<std::uint64_t> stage_evaluations_{0};
  mutable std::mutex memo_mutex_;
  mutable std::map<std::tuple<std::size_t, std::uint64_t, std::uint64_t>, double> memo_;
};

// Observation likelihoods.
double observe_stuck(const Vec3& pose_old, const Vec3& pose_new, const ObservationModel& model);
double observe_missing(bool detected, const ObservationModel& model);
// (likelihood of "removed", likelihood of "not removed") for an attempt on `part`.
std::pair<double, double> observe_glue(const ProductState& state, std::size_t part);

struct GraphOptions {
  double delta = 0.0;
  double gamma = 0.99;
  double dead_end_penalty = 0.0;  // planning cost of a dead end, seconds
  std::size_t max_nodes = 1'000'000;
};

struct GraphOutcome {
  std::size_t next = 0;
  double prob = 0;
  double reward = 0;
  double time = 0;
  std::vector<Observation> obs;
};

struct GraphEdge {
  Action action;
  std::vector<GraphOutcome> outcomes;
};

struct GraphNode {
  NodeKey key;
  bool terminal = false;
  std::vector<GraphEdge> edges;
  bool dead_end() const { return !terminal && edges.empty(); }
};

// Reachable knowledge-state graph of the expectation MDP.
class PomdpGraph {
 public:
  std::vector<GraphNode> nodes;
  std::size_t root = 0;
  GraphOptions options;
  std::string key;  // content hash of the inputs
  std::string product_name;
  std::string cell_name;
  std::vector<std::string> part_names;
  std::vector<std::string> tool_names;
  std::vector<double> priors;

  std::optional<std::size_t> find(const NodeKey& key) const;
  std::size_t edge_count() const;
  void reindex();
  std::string label(const Action& a) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

std::string graph_key(const Product& product, const Cell& cell, const GraphOptions& options);
PomdpGraph build_graph(const Pomdp& model, const GraphOptions& options = {});
PomdpGraph build_graph_from(const Pomdp& model, const NodeKey& start, const GraphOptions& options = {});

nlohmann::json graph_to_json(const PomdpGraph& graph);
PomdpGraph graph_from_json(const nlohmann::json& j);

nlohmann::json action_to_json(const Action& a);
Action action_from_json(const nlohmann::json& j);

}  // namespace disasm
