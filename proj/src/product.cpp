#include "disasm/product.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "disasm/error.hpp"
#include "disasm/rng.hpp"

namespace disasm {

using nlohmann::json;
namespace fs = std::filesystem;

ProductState::ProductState(std::size_t n, const SphereGrid& grid)
    : n_(n), grid_(grid), ones_(std::make_shared<const DirectionGrid>(DirectionGrid::ones(grid))), cells_(n * n, ones_) {}

void ProductState::set(std::size_t i, std::size_t j, DirectionGrid g) {
  set_shared(i, j, g.all_ones() ? ones_ : std::make_shared<const DirectionGrid>(std::move(g)));
}

void ProductState::set_shared(std::size_t i, std::size_t j, std::shared_ptr<const DirectionGrid> g) {
  if (i >= n_ || j >= n_) fail_input("relation index out of range");
  if (!(g->grid() == grid_)) fail_input("relation grid resolution does not match product grid");
  cells_[i * n_ + j] = std::move(g);
}

bool ProductState::removed(std::size_t i) const {
  for (std::size_t j = 0; j < n_; ++j) {
    const auto& c = cells_[i * n_ + j];
    if (c != ones_ && !c->all_ones()) return false;
  }
  return true;
}

std::vector<std::size_t> ProductState::removed_set() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_; ++i) {
    if (removed(i)) out.push_back(i);
  }
  return out;
}

Feasibility ProductState::part_feasibility(std::size_t i) const {
  if (i >= n_) fail_input("part index out of range");
  std::vector<const DirectionGrid*> row;
  for (std::size_t j = 0; j < n_; ++j) {
    if (j != i) row.push_back(cells_[i * n_ + j].get());
  }
  if (row.empty()) return {1.0, 0};
  return feasibility(std::span<const DirectionGrid* const>(row));
}

ProductState mark_removed(const ProductState& state, std::size_t i) {
  if (i >= state.size()) fail_input("mark_removed: part index out of range");
  ProductState out = state;
  const auto ones = std::make_shared<const DirectionGrid>(DirectionGrid::ones(state.grid()));
  for (std::size_t j = 0; j < state.size(); ++j) {
    out.set_shared(i, j, ones);
    out.set_shared(j, i, ones);
  }
  return out;
}

std::vector<std::size_t> Product::targets() const {
  std::vector<std::size_t> t;
  for (const auto& p : parts) {
    if (p.is_target) t.push_back(p.id);
  }
  return t;
}

std::size_t Product::part_index(const std::string& n) const {
  for (const auto& p : parts) {
    if (p.name == n) return p.id;
  }
  fail_input("unknown part: " + n);
}

std::optional<std::size_t> Product::variable_index(const std::string& n) const {
  for (const auto& v : variables) {
    if (v.name == n) return v.id;
  }
  return std::nullopt;
}

const DestructiveSpec* Product::destructive_for(std::size_t part) const {
  for (const auto& d : destructive) {
    if (d.part == part) return &d;
  }
  return nullptr;
}

std::optional<std::string> Product::tool_for(std::size_t part) const {
  for (const auto& t : tools) {
    if (t.removable.at(part)) return t.tool;
  }
  return std::nullopt;
}

Product Product::with_priors(const std::map<std::string, double>& overrides) const {
  Product out = *this;
  for (const auto& [name, p] : overrides) {
    auto idx = variable_index(name);
    if (!idx) fail_input("scenario references unknown EOL variable: " + name);
    if (!(p >= 0.0 && p <= 1.0)) fail_input("prior outside [0,1] for " + name);
    out.variables[*idx].prior = p;
  }
  return out;
}

Product Product::with_priors(const std::vector<double>& priors) const {
  if (priors.size() != variables.size()) fail_input("prior vector size does not match variable count");
  Product out = *this;
  for (std::size_t v = 0; v < priors.size(); ++v) {
    if (!(priors[v] >= 0.0 && priors[v] <= 1.0)) fail_input("prior outside [0,1]");
    out.variables[v].prior = priors[v];
  }
  return out;
}

namespace {

Vec3 parse_axis(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s.size() != 2 || (s[0] != '+' && s[0] != '-')) fail_input("bad axis: " + s);
    const double sign = s[0] == '+' ? 1.0 : -1.0;
    switch (s[1]) {
      case 'x': return {sign, 0, 0};
      case 'y': return {0, sign, 0};
      case 'z': return {0, 0, sign};
      default: fail_input("bad axis: " + s);
    }
  }
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) fail_input("axis must have 3 components");
  Vec3 a{v[0], v[1], v[2]};
  if (norm(a) == 0) fail_input("axis must be non-zero");
  return a;
}

DirectionGrid parse_grid(const json& j, const SphereGrid& g, const fs::path& base) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "free" || s == "ones") return DirectionGrid::ones(g);
    if (s == "blocked" || s == "zeros") return DirectionGrid::zeros(g);
    fail_input("unknown grid shorthand: " + s);
  }
  if (!j.is_object()) fail_input("grid must be a string or object");
  DirectionGrid out(g, 0.0);
  if (j.contains("free_along")) {
    const json& axes = j["free_along"];
    const double half = j.contains("half_angle_deg") ? j["half_angle_deg"].get<double>() * std::numbers::pi / 180.0
                                                     : g.d_theta();
    std::vector<Vec3> list;
    if (axes.is_array() && !axes.empty() && axes[0].is_array()) {
      for (const auto& a : axes) list.push_back(parse_axis(a));
    } else if (axes.is_array() && !axes.empty() && axes[0].is_string()) {
      for (const auto& a : axes) list.push_back(parse_axis(a));
    } else {
      list.push_back(parse_axis(axes));
    }
    for (const auto& a : list) {
      const DirectionGrid c = DirectionGrid::cone(g, a, half);
      for (std::size_t b = 0; b < g.size(); ++b) out[b] = std::max(out[b], c[b]);
    }
  } else if (j.contains("half_space")) {
    out = DirectionGrid::half_space(g, parse_axis(j["half_space"]), j.value("tolerance", 0.0));
  } else if (j.contains("constant")) {
    const double c = j["constant"].get<double>();
    if (!(c >= 0 && c <= 1)) fail_input("constant grid value outside [0,1]");
    out = DirectionGrid(g, c);
  } else if (j.contains("values")) {
    if (j.contains("n_theta") || j.contains("n_phi")) {
      out = grid_from_json(j);
      if (!(out.grid() == g)) fail_input("inline grid resolution does not match product grid");
    } else {
      out = DirectionGrid(g, j["values"].get<std::vector<double>>());
    }
  } else if (j.contains("file")) {
    const fs::path p = base / j["file"].get<std::string>();
    std::ifstream in(p);
    if (!in) fail_input("cannot open grid file: " + p.string());
    json gj;
    try {
      in >> gj;
    } catch (const json::exception& e) {
      fail_input("malformed grid file " + p.string() + ": " + e.what());
    }
    out = grid_from_json(gj);
    if (!(out.grid() == g)) fail_input("grid file resolution does not match product grid: " + p.string());
  } else {
    fail_input("unrecognized grid specification: " + j.dump());
  }
  if (j.contains("scale")) {
    const double s = j["scale"].get<double>();
    if (!(s >= 0 && s <= 1)) fail_input("grid scale outside [0,1]");
    for (std::size_t b = 0; b < g.size(); ++b) out[b] *= s;
  }
  return out;
}

std::size_t part_ref(const json& j, const std::vector<Part>& parts) {
  if (j.is_number_integer()) {
    const auto id = j.get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= parts.size()) {
      fail_input("part index out of range: " + std::to_string(id));
    }
    return static_cast<std::size_t>(id);
  }
  const std::string n = j.get<std::string>();
  for (const auto& p : parts) {
    if (p.name == n) return p.id;
  }
  fail_input("unknown part: " + n);
}

EolOperator parse_operator(const json& j, const SphereGrid& g, const fs::path& base) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "stuck") return Stuck{};
  if (type == "wear") return Wear{parse_grid(j.at("added"), g, base)};
  if (type == "deform") {
    return Deform{j.value("delta_theta", 0.0), j.value("delta_phi", 0.0)};
  }
  if (type == "damage") return Damage{parse_grid(j.at("replacement"), g, base)};
  fail_input("unknown EOL operator type: " + type);
}

json operator_to_json(const EolOperator& op) {
  return std::visit(
      [](const auto& o) -> json {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Stuck>) {
          return {{"type", "stuck"}};
        } else if constexpr (std::is_same_v<T, Wear>) {
          return {{"type", "wear"}, {"added", to_json(o.added)}};
        } else if constexpr (std::is_same_v<T, Deform>) {
          return {{"type", "deform"}, {"delta_theta", o.delta_theta}, {"delta_phi", o.delta_phi}};
        } else {
          return {{"type", "damage"}, {"replacement", to_json(o.replacement)}};
        }
      },
      op);
}

}  // namespace

Product product_from_json(const json& spec, const fs::path& base) {
  try {
    SphereGrid grid;
    if (spec.contains("grid")) {
      grid = SphereGrid(spec["grid"].at("n_theta").get<std::size_t>(), spec["grid"].at("n_phi").get<std::size_t>());
    }
    std::vector<Part> parts;
    const json& pj = spec.at("parts");
    if (!pj.is_array() || pj.empty()) fail_input("product must list at least one part");
    if (pj.size() > 64) fail_input("at most 64 parts are supported");
    std::set<std::string> names;
    for (std::size_t k = 0; k < pj.size(); ++k) {
      Part p;
      p.id = k;
      if (pj[k].contains("id") && pj[k]["id"].get<std::size_t>() != k) {
        fail_input("part ids must be dense and in order; expected " + std::to_string(k));
      }
      p.name = pj[k].at("name").get<std::string>();
      p.value_penalty = pj[k].value("value_penalty", 0.0);
      p.is_target = pj[k].value("is_target", false);
      if (p.value_penalty < 0) fail_input("value_penalty must be >= 0 for " + p.name);
      if (!names.insert(p.name).second) fail_input("duplicate part name: " + p.name);
      parts.push_back(std::move(p));
    }
    if (spec.contains("targets")) {
      for (const auto& t : spec["targets"]) parts[part_ref(t, parts)].is_target = true;
    }
    const std::size_t n = parts.size();

    ProductState nominal(n, grid);
    if (spec.contains("relations")) {
      for (const auto& r : spec["relations"]) {
        const std::size_t i = part_ref(r.at("i"), parts);
        const std::size_t j = part_ref(r.at("j"), parts);
        if (i == j) fail_input("relation of a part with itself");
        DirectionGrid g = parse_grid(r.at("grid"), grid, base);
        if (r.value("mirror", false)) nominal.set(j, i, g.mirrored());
        nominal.set(i, j, std::move(g));
      }
    }

    std::vector<ToolMatrix> tools;
    if (spec.contains("tools")) {
      for (const auto& t : spec["tools"]) {
        ToolMatrix m{t.at("name").get<std::string>(), std::vector<bool>(n, false)};
        for (const auto& p : t.at("parts")) m.removable[part_ref(p, parts)] = true;
        tools.push_back(std::move(m));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      int count = 0;
      for (const auto& t : tools) count += t.removable[i] ? 1 : 0;
      if (count > 1) fail_input("part " + parts[i].name + " has more than one non-destructive tool");
    }

    std::vector<EolVariable> vars;
    if (spec.contains("eol_variables")) {
      std::set<std::string> vnames;
      for (const auto& vj : spec["eol_variables"]) {
        EolVariable v;
        v.id = vars.size();
        v.name = vj.value("name", "v" + std::to_string(v.id));
        if (!vnames.insert(v.name).second) fail_input("duplicate EOL variable name: " + v.name);
        v.prior = vj.at("prior").get<double>();
        if (!(v.prior >= 0.0 && v.prior <= 1.0)) {
          fail_input("prior outside [0,1] for EOL variable " + v.name + ": " + std::to_string(v.prior));
        }
        const std::string kind = vj.value("kind", "generic");
        if (kind == "stuck") {
          v.kind = EolKind::Stuck;
          v.part = part_ref(vj.at("part"), parts);
          v.op = Stuck{};
          for (std::size_t j = 0; j < n; ++j) {
            if (j != *v.part) v.pairs.emplace_back(*v.part, j);
          }
        } else if (kind == "missing") {
          v.kind = EolKind::Missing;
          v.part = part_ref(vj.at("part"), parts);
          v.op = Damage{DirectionGrid::ones(grid)};
          for (std::size_t j = 0; j < n; ++j) {
            if (j == *v.part) continue;
            v.pairs.emplace_back(*v.part, j);
            v.pairs.emplace_back(j, *v.part);
          }
        } else if (kind == "generic") {
          v.kind = EolKind::Generic;
          v.op = parse_operator(vj.at("operator"), grid, base);
          for (const auto& pr : vj.at("pairs")) {
            const std::size_t i = part_ref(pr.at(0), parts), j = part_ref(pr.at(1), parts);
            if (i == j) fail_input("EOL variable " + v.name + " affects a diagonal pair");
            v.pairs.emplace_back(i, j);
          }
          if (v.pairs.empty()) fail_input("EOL variable " + v.name + " affects no pairs");
        } else {
          fail_input("unknown EOL variable kind: " + kind);
        }
        vars.push_back(std::move(v));
      }
      // At most one Damage per pair, since Damage does not commute.
      std::set<std::pair<std::size_t, std::size_t>> damaged;
      for (const auto& v : vars) {
        if (!std::holds_alternative<Damage>(v.op)) continue;
        for (const auto& pr : v.pairs) {
          if (!damaged.insert(pr).second) fail_input("more than one Damage operator on a pair (" + v.name + ")");
        }
      }
    }

    std::vector<DestructiveSpec> destructive;
    if (spec.contains("destructive")) {
      std::set<std::size_t> seen;
      for (const auto& dj : spec["destructive"]) {
        DestructiveSpec d;
        d.part = part_ref(dj.at("part"), parts);
        if (!seen.insert(d.part).second) fail_input("at most one destructive action per part: " + parts[d.part].name);
        if (dj.contains("collateral")) {
          for (const auto& c : dj["collateral"]) d.collateral.push_back(part_ref(c, parts));
        }
        std::sort(d.collateral.begin(), d.collateral.end());
        if (dj.contains("replacements")) {
          for (const auto& rj : dj["replacements"]) {
            d.replacements.insert_or_assign(part_ref(rj.at("j"), parts), parse_grid(rj.at("grid"), grid, base));
          }
        }
        destructive.push_back(std::move(d));
      }
      std::sort(destructive.begin(), destructive.end(),
                [](const DestructiveSpec& a, const DestructiveSpec& b) { return a.part < b.part; });
    }

    Product prod{spec.value("name", std::string("product")), grid, std::move(parts), std::move(nominal),
                 std::move(tools), std::move(vars), std::move(destructive)};
    if (prod.targets().empty()) fail_input("product declares no target parts");
    return prod;
  } catch (const json::exception& e) {
    fail_input(std::string("product spec schema violation: ") + e.what());
  }
}

Product load_product(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail_input("cannot open product spec: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_input("product spec is not valid JSON (" + path.string() + "): " + e.what());
  }
  return product_from_json(j, path.parent_path());
}

json save_product(const Product& p) {
  json out;
  out["name"] = p.name;
  out["grid"] = {{"n_theta", p.grid.n_theta()}, {"n_phi", p.grid.n_phi()}};
  json parts = json::array();
  for (const auto& part : p.parts) {
    parts.push_back(
        {{"id", part.id}, {"name", part.name}, {"value_penalty", part.value_penalty}, {"is_target", part.is_target}});
  }
  out["parts"] = parts;
  json rel = json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j || p.nominal.at(i, j).all_ones()) continue;
      const auto v = p.nominal.at(i, j).values();
      rel.push_back({{"i", i}, {"j", j}, {"grid", {{"values", std::vector<double>(v.begin(), v.end())}}}});
    }
  }
  out["relations"] = rel;
  json tools = json::array();
  for (const auto& t : p.tools) {
    json ids = json::array();
    for (std::size_t i = 0; i < t.removable.size(); ++i) {
      if (t.removable[i]) ids.push_back(i);
    }
    tools.push_back({{"name", t.tool}, {"parts", ids}});
  }
  out["tools"] = tools;
  json vars = json::array();
  for (const auto& v : p.variables) {
    json vj{{"name", v.name}, {"prior", v.prior}};
    if (v.kind == EolKind::Stuck) {
      vj["kind"] = "stuck";
      vj["part"] = *v.part;
    } else if (v.kind == EolKind::Missing) {
      vj["kind"] = "missing";
      vj["part"] = *v.part;
    } else {
      vj["kind"] = "generic";
      vj["operator"] = operator_to_json(v.op);
      json prs = json::array();
      for (const auto& [a, b] : v.pairs) prs.push_back({a, b});
      vj["pairs"] = prs;
    }
    vars.push_back(vj);
  }
  out["eol_variables"] = vars;
  json destr = json::array();
  for (const auto& d : p.destructive) {
    json dj{{"part", d.part}, {"collateral", d.collateral}};
    json reps = json::array();
    for (const auto& [j, g] : d.replacements) {
      const auto v = g.values();
      reps.push_back({{"j", j}, {"grid", {{"values", std::vector<double>(v.begin(), v.end())}}}});
    }
    dj["replacements"] = reps;
    destr.push_back(dj);
  }
  out["destructive"] = destr;
  return out;
}

ProductState nominal_state(const Product& product) { return product.nominal; }

ProductState realize_state(const Product& product, const std::vector<bool>& assignment) {
  if (assignment.size() != product.variables.size()) fail_input("assignment size does not match variable count");
  ProductState s = product.nominal;
  for (const auto& v : product.variables) {
    if (!assignment[v.id]) continue;
    for (const auto& [i, j] : v.pairs) s.set(i, j, apply_operator(s.at(i, j), v.op));
  }
  return s;
}

GroundTruth ground_truth_from(const Product& product, std::vector<bool> assignment, std::uint64_t seed) {
  ProductState s = realize_state(product, assignment);
  return GroundTruth{seed, std::move(assignment), std::move(s)};
}

GroundTruth realize_ground_truth(const Product& product, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x67726f756e64ULL));
  std::vector<bool> a(product.variables.size());
  for (const auto& v : product.variables) a[v.id] = rng.bernoulli(v.prior);
  return ground_truth_from(product, std::move(a), seed);
}

}  // namespace disasm
