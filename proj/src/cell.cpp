#include "disasm/cell.hpp"

#include <cmath>
#include <fstream>

#include "disasm/error.hpp"

namespace disasm {

using nlohmann::json;

const char* to_string(ToolKind k) {
  switch (k) {
    case ToolKind::Manipulate: return "manipulate";
    case ToolKind::Screw: return "screw";
    case ToolKind::Mill: return "mill";
  }
  return "?";
}

std::optional<std::size_t> Cell::tool_index(const std::string& n) const {
  for (std::size_t k = 0; k < tools.size(); ++k) {
    if (tools[k].name == n) return k;
  }
  return std::nullopt;
}

std::optional<std::size_t> Cell::mill_tool() const {
  for (std::size_t k = 0; k < tools.size(); ++k) {
    if (tools[k].kind == ToolKind::Mill) return k;
  }
  return std::nullopt;
}

double Cell::action_time(std::size_t tool, const std::string& part) const {
  const Tool& t = tools.at(tool);
  auto it = t.t_action_parts.find(part);
  return it == t.t_action_parts.end() ? t.t_action : it->second;
}

double Cell::place_time(const std::string& part) const {
  auto it = t_place_parts.find(part);
  return it == t_place_parts.end() ? t_place : it->second;
}

double Cell::change_time(std::optional<std::size_t> from, std::size_t to) const {
  if (to >= tools.size() || (from && *from >= tools.size())) fail_input("unknown tool pair in t_change");
  if (!from) return 0.0;
  return t_change[*from][to];
}

FeasibilityStages Cell::stages_for(std::size_t tool, const std::string& part) const {
  auto it = stages.find({tools.at(tool).name, part});
  return it == stages.end() ? FeasibilityStages{true, true, true} : it->second;
}

namespace {

double nonneg(const json& j, const char* what) {
  const double v = j.get<double>();
  if (!(v >= 0)) fail_input(std::string(what) + " must be >= 0");
  return v;
}

double probability(const json& j, const char* what) {
  const double v = j.get<double>();
  if (!(v >= 0 && v <= 1)) fail_input(std::string(what) + " must be in [0,1]");
  return v;
}

}  // namespace

Cell cell_from_json(const json& spec) {
  try {
    Cell c;
    c.name = spec.value("name", std::string("cell"));
    for (const auto& tj : spec.at("tools")) {
      Tool t;
      t.name = tj.at("name").get<std::string>();
      const std::string kind = tj.at("kind").get<std::string>();
      if (kind == "manipulate") t.kind = ToolKind::Manipulate;
      else if (kind == "screw") t.kind = ToolKind::Screw;
      else if (kind == "mill") t.kind = ToolKind::Mill;
      else fail_input("unknown tool kind: " + kind);
      t.p_success = probability(tj.value("p_success", json(1.0)), "p_success");
      t.t_action = nonneg(tj.at("t_action"), "t_action");
      if (tj.contains("t_action_parts")) {
        for (const auto& [part, v] : tj["t_action_parts"].items()) t.t_action_parts[part] = nonneg(v, "t_action");
      }
      if (c.tool_index(t.name)) fail_input("duplicate tool: " + t.name);
      c.tools.push_back(std::move(t));
    }
    if (c.tools.empty()) fail_input("cell declares no tools");
    const std::size_t n = c.tools.size();

    if (spec.contains("initial_tool")) {
      auto idx = c.tool_index(spec["initial_tool"].get<std::string>());
      if (!idx) fail_input("unknown initial tool");
      c.initial_tool = *idx;
    }
    if (spec.contains("t_place")) {
      const json& tp = spec["t_place"];
      if (tp.is_number()) {
        c.t_place = nonneg(tp, "t_place");
      } else {
        c.t_place = nonneg(tp.value("default", json(0.0)), "t_place");
        if (tp.contains("parts")) {
          for (const auto& [part, v] : tp["parts"].items()) c.t_place_parts[part] = nonneg(v, "t_place");
        }
      }
    }
    double change_default = 0;
    const json tc = spec.value("t_change", json::object());
    if (tc.is_number()) change_default = nonneg(tc, "t_change");
    else change_default = nonneg(tc.value("default", json(0.0)), "t_change");
    c.t_change.assign(n, std::vector<double>(n, change_default));
    if (tc.is_object() && tc.contains("pairs")) {
      for (const auto& pj : tc["pairs"]) {
        auto a = c.tool_index(pj.at("from").get<std::string>());
        auto b = c.tool_index(pj.at("to").get<std::string>());
        if (!a || !b) fail_input("unknown tool pair in t_change");
        c.t_change[*a][*b] = nonneg(pj.at("t"), "t_change");
      }
    }
    for (std::size_t k = 0; k < n; ++k) c.t_change[k][k] = 0.0;

    if (spec.contains("feasibility")) {
      for (const auto& fj : spec["feasibility"]) {
        const std::string tool = fj.at("tool").get<std::string>();
        if (!c.tool_index(tool)) fail_input("feasibility entry references unknown tool: " + tool);
        const auto st = fj.at("stages").get<std::vector<bool>>();
        if (st.size() != 3) fail_input("feasibility stages must list tool_reach, robot_reach, full_motion");
        c.stages[{tool, fj.at("part").get<std::string>()}] = {st[0], st[1], st[2]};
      }
    }
    if (spec.contains("observer")) {
      const json& o = spec["observer"];
      c.observer.p_tp = probability(o.value("p_tp", json(1.0)), "p_tp");
      c.observer.p_fp = probability(o.value("p_fp", json(0.0)), "p_fp");
      c.observer.p_fn = probability(o.value("p_fn", json(0.0)), "p_fn");
      c.observer.p_tn = probability(o.value("p_tn", json(1.0)), "p_tn");
      c.observer.epsilon_mm = nonneg(o.value("epsilon_mm", json(5.0)), "epsilon_mm");
      if (std::abs(c.observer.p_tp + c.observer.p_fn - 1.0) > 1e-9 ||
          std::abs(c.observer.p_tn + c.observer.p_fp - 1.0) > 1e-9)
        fail_input("observer rates must satisfy p_tp + p_fn = 1 and p_tn + p_fp = 1");
    }
    c.pull_distance_mm = nonneg(spec.value("pull_distance_mm", json(100.0)), "pull_distance_mm");
    return c;
  } catch (const json::exception& e) {
    fail_input(std::string("cell spec schema violation: ") + e.what());
  }
}

Cell load_cell(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_input("cannot open cell spec: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_input("cell spec is not valid JSON (" + path.string() + "): " + e.what());
  }
  return cell_from_json(j);
}

json save_cell(const Cell& c) {
  json out;
  out["name"] = c.name;
  json tools = json::array();
  for (const auto& t : c.tools) {
    tools.push_back({{"name", t.name},
                     {"kind", to_string(t.kind)},
                     {"p_success", t.p_success},
                     {"t_action", t.t_action},
                     {"t_action_parts", t.t_action_parts}});
  }
  out["tools"] = tools;
  out["initial_tool"] = c.tools[c.initial_tool].name;
  out["t_place"] = {{"default", c.t_place}, {"parts", c.t_place_parts}};
  json pairs = json::array();
  for (std::size_t a = 0; a < c.tools.size(); ++a) {
    for (std::size_t b = 0; b < c.tools.size(); ++b) {
      if (a != b) pairs.push_back({{"from", c.tools[a].name}, {"to", c.tools[b].name}, {"t", c.t_change[a][b]}});
    }
  }
  out["t_change"] = {{"default", 0.0}, {"pairs", pairs}};
  json feas = json::array();
  for (const auto& [key, st] : c.stages) {
    feas.push_back({{"tool", key.first}, {"part", key.second}, {"stages", {st[0], st[1], st[2]}}});
  }
  out["feasibility"] = feas;
  out["observer"] = {{"p_tp", c.observer.p_tp},
                     {"p_fp", c.observer.p_fp},
                     {"p_fn", c.observer.p_fn},
                     {"p_tn", c.observer.p_tn},
                     {"epsilon_mm", c.observer.epsilon_mm}};
  out["pull_distance_mm"] = c.pull_distance_mm;
  return out;
}

}  // namespace disasm
