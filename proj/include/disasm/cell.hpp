#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace disasm {

enum class ToolKind { Manipulate, Screw, Mill };

struct ObservationModel {
  double p_tp = 1, p_fp = 0, p_fn = 0, p_tn = 1;
  double epsilon_mm = 5;  // displacement below this counts as "did not move"
};

struct Tool {
  std::string name;
  ToolKind kind = ToolKind::Manipulate;
  double p_success = 1;
  double t_action = 0;                            // default action time, s
  std::map<std::string, double> t_action_parts;   // per-part overrides
};

// Ordered motion-feasibility checks: tool reach, robot reach, full motion.
using FeasibilityStages = std::array<bool, 3>;

// Robot-cell capabilities: tools with their time and success statistics.
struct Cell {
  std::string name;
  std::vector<Tool> tools;
  std::size_t initial_tool = 0;
  double t_place = 0;
  std::map<std::string, double> t_place_parts;
  std::vector<std::vector<double>> t_change;  // tool x tool, zero diagonal
  std::map<std::pair<std::string, std::string>, FeasibilityStages> stages;  // (tool, part)
  ObservationModel observer;
  double pull_distance_mm = 100;

  std::optional<std::size_t> tool_index(const std::string& name) const;
  std::optional<std::size_t> mill_tool() const;
  double action_time(std::size_t tool, const std::string& part) const;
  double place_time(const std::string& part) const;
  double change_time(std::optional<std::size_t> from, std::size_t to) const;
  FeasibilityStages stages_for(std::size_t tool, const std::string& part) const;
};

Cell cell_from_json(const nlohmann::json& spec);
Cell load_cell(const std::filesystem::path& path);
nlohmann::json save_cell(const Cell& cell);

const char* to_string(ToolKind k);

}  // namespace disasm
