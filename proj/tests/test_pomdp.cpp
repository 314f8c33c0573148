#include <cmath>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "disasm/cell.hpp"
#include "disasm/error.hpp"
#include "disasm/pomdp.hpp"
#include "brute_force.hpp"

using namespace disasm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(DISASM_DATA_DIR);

Product load(const char* name) { return load_product(kData / "products" / (std::string(name) + ".json")); }
Cell cell(const char* name) { return load_cell(kData / "cells" / (std::string(name) + ".json")); }

std::set<std::string> graph_nodes(const PomdpGraph& g) {
  std::set<std::string> out;
  for (const auto& node : g.nodes) out.insert(node.key.encode());
  return out;
}

void check_bundles(const PomdpGraph& g) {
  for (const auto& node : g.nodes) {
    for (const auto& e : node.edges) {
      double sum = 0;
      for (const auto& o : e.outcomes) {
        CHECK(o.prob > 0);
        sum += o.prob;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

json single_part() {
  return json::parse(R"({
    "name": "single",
    "parts": [{"name": "a"}],
    "targets": ["a"],
    "tools": [{"name": "gripper", "parts": ["a"]}]
  })");
}

json single_tool_cell() {
  return json::parse(R"({
    "name": "one", "tools": [{"name": "gripper", "kind": "manipulate", "t_action": 10}],
    "initial_tool": "gripper", "t_place": 5, "t_change": 0
  })");
}

}  // namespace

TEST_CASE("node counts match the brute-force enumerator") {
  Product two = load("two_lid_motor");
  Cell b = cell("cell_b"), a = cell("cell_a");

  SUBCASE("shipped priors, mill available") {
    Pomdp m(two, b);
    PomdpGraph g = build_graph(m);
    CHECK(g.nodes.size() < 5000);
    CHECK(g.nodes.size() > 50);
    CHECK(graph_nodes(g) == testing::brute_force_nodes(two, b));
  }
  SUBCASE("single latent stuck screw") {
    std::vector<double> pri(two.variables.size(), 0.0);
    pri[0] = 0.4;
    Product one = two.with_priors(pri);
    CHECK(graph_nodes(build_graph(Pomdp(one, b))) == testing::brute_force_nodes(one, b));
  }
  SUBCASE("no mill") {
    CHECK(graph_nodes(build_graph(Pomdp(two, a))) == testing::brute_force_nodes(two, a));
  }
  SUBCASE("electric motor") {
    Product em = load("electric_motor");
    CHECK(graph_nodes(build_graph(Pomdp(em, b))) == testing::brute_force_nodes(em, b));
  }
}

TEST_CASE("shipped graphs are sound") {
  struct Case {
    const char* product;
    const char* cell;
  };
  for (Case c : {Case{"electric_motor", "cell_b"}, Case{"two_lid_motor", "cell_b"}, Case{"angle_grinder", "cell_a"}}) {
    CAPTURE(c.product);
    Pomdp m(load(c.product), cell(c.cell));
    PomdpGraph g = build_graph(m);
    CHECK(g.nodes.size() < 5000);
    check_bundles(g);
    CHECK(g.nodes[g.root].key == m.initial_node());
    // Progress: removed set and knowledge never shrink along an edge.
    for (const auto& node : g.nodes) {
      for (const auto& e : node.edges) {
        for (const auto& o : e.outcomes) {
          const NodeKey& to = g.nodes[o.next].key;
          CHECK((node.key.removed & ~to.removed) == 0);
          for (std::size_t v = 0; v < to.knowledge.size(); ++v) {
            if (node.key.knowledge[v] == Knowledge::Unknown) continue;
            // Known values persist until every pair they touch is gone.
            CHECK((to.knowledge[v] == node.key.knowledge[v] || to.knowledge[v] == Knowledge::Unknown));
          }
        }
      }
    }
  }
}

TEST_CASE("mill is a universal backup on the electric motor") {
  Product em = load("electric_motor").with_priors(std::map<std::string, double>{
      {"stuck_screw1", 0.5}, {"stuck_screw2", 0.5}, {"stuck_screw3", 0.5}, {"stuck_screw4", 0.5}});
  PomdpGraph g = build_graph(Pomdp(em, cell("cell_b")));
  // Backward reachability from terminals.
  std::vector<bool> good(g.nodes.size(), false);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) good[i] = g.nodes[i].terminal;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (good[i]) continue;
      for (const auto& e : g.nodes[i].edges)
        for (const auto& o : e.outcomes)
          if (good[o.next] && !good[i]) good[i] = changed = true;
    }
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) CHECK(good[i]);
  for (const auto& n : g.nodes) CHECK_FALSE(n.dead_end());
}

TEST_CASE("trivial graph") {
  Pomdp m(product_from_json(single_part()), cell_from_json(single_tool_cell()));
  PomdpGraph g = build_graph(m);
  CHECK(g.nodes.size() == 2);
  CHECK(g.edge_count() == 1);
  CHECK(g.nodes[g.root].edges[0].outcomes.size() == 1);
  CHECK(g.nodes[g.root].edges[0].outcomes[0].reward == -15);
}

TEST_CASE("enumerate_actions") {
  Product shipped = load("two_lid_motor");
  Product two = shipped.with_priors(std::vector<double>(shipped.variables.size(), 0.0));
  Pomdp m(two, cell("cell_b"));
  NodeKey root = m.initial_node();
  auto acts = m.enumerate_actions(root);
  std::set<std::string> nondestructive;
  for (const auto& a : acts)
    if (a.kind == ActionKind::NonDestructive) nondestructive.insert(two.parts[a.part].name);
  CHECK(nondestructive == std::set<std::string>{"screw1", "screw2", "screw3", "screw4", "screw5"});

  SUBCASE("removed part has no action") {
    NodeKey k = root;
    k.removed |= 1ULL << two.part_index("screw1");
    for (const auto& a : m.enumerate_actions(k)) CHECK(a.part != two.part_index("screw1"));
  }

  SUBCASE("grinder without mill and a known stuck screw") {
    Product gr = load("angle_grinder");
    Pomdp mg(gr, cell("cell_a"));
    NodeKey k = mg.initial_node();
    k.inspected = true;
    k.knowledge[*gr.variable_index("stuck_screw1")] = Knowledge::KnownTrue;
    for (const auto& a : mg.enumerate_actions(k)) {
      CHECK(a.kind == ActionKind::NonDestructive);
      CHECK(gr.parts[a.part].name != "gearbox");
      CHECK(gr.parts[a.part].name != "screw1");
    }
  }

  SUBCASE("inspection comes first when parts may be missing") {
    Pomdp mg(load("angle_grinder"), cell("cell_a"));
    auto first = mg.enumerate_actions(mg.initial_node());
    REQUIRE(first.size() == 1);
    CHECK(first[0].kind == ActionKind::Inspect);
  }
}

TEST_CASE("transition distributions") {
  Cell b = cell("cell_b");
  SUBCASE("free part is removed for sure") {
    Pomdp m(product_from_json(single_part()), cell_from_json(single_tool_cell()));
    auto t = m.transition(m.initial_node(), m.enumerate_actions(m.initial_node())[0]);
    REQUIRE(t.size() == 1);
    CHECK(t[0].prob == 1.0);
    CHECK(t[0].obs[0].kind == ObsKind::Removed);
  }
  SUBCASE("stuck prior 0.9 splits 0.1 / 0.9") {
    Product em = load("electric_motor").with_priors(std::map<std::string, double>{{"stuck_screw1", 0.9}});
    Pomdp m(em, b);
    std::size_t s1 = em.part_index("screw1");
    auto t = m.transition(m.initial_node(), Action{ActionKind::NonDestructive, s1, *b.tool_index("screwdriver")});
    REQUIRE(t.size() == 2);
    CHECK(t[0].obs[0].kind == ObsKind::Removed);
    CHECK(t[0].prob == doctest::Approx(0.1));
    CHECK(t[1].obs[0].kind == ObsKind::StuckDetected);
    CHECK(t[1].prob == doctest::Approx(0.9));
    CHECK(t[1].next.knowledge[*em.variable_index("stuck_screw1")] == Knowledge::KnownTrue);
    // Two-point mixture computed directly.
    CHECK(m.marginal_removal_probability(m.initial_node(), s1, *b.tool_index("screwdriver")) ==
          doctest::Approx(0.9 * 0.0 + 0.1 * 1.0));
  }
  SUBCASE("milling ignores the stuck state") {
    Product em = load("electric_motor").with_priors(std::vector<double>(4, 0.7));
    Pomdp m(em, b);
    auto t = m.transition(m.initial_node(), Action{ActionKind::Destructive, em.part_index("lid"), *b.mill_tool()});
    REQUIRE(t.size() == 1);
    CHECK(t[0].prob == 1.0);
    CHECK(t[0].next.is_removed(em.part_index("lid")));
    CHECK(t[0].next.is_removed(em.part_index("screw3")));
  }
  SUBCASE("unreliable tool adds a no-information outcome") {
    json cj = single_tool_cell();
    cj["tools"][0]["p_success"] = 0.8;
    Pomdp m(product_from_json(single_part()), cell_from_json(cj));
    auto t = m.transition(m.initial_node(), m.enumerate_actions(m.initial_node())[0]);
    REQUIRE(t.size() == 2);
    CHECK(t[0].prob == doctest::Approx(0.8));
    CHECK(t[1].obs[0].kind == ObsKind::NoObservation);
    CHECK(t[1].next == m.initial_node());
  }
}

TEST_CASE("rewards") {
  Product em = load("electric_motor");
  Cell b = cell("cell_b");
  Pomdp m(em, b);
  const std::size_t gripper = *b.tool_index("gripper"), driver = *b.tool_index("screwdriver");
  Action unscrew{ActionKind::NonDestructive, em.part_index("screw1"), driver};
  CHECK(m.reward(unscrew, gripper) == -35);
  CHECK(m.reward(unscrew, driver) == -25);

  json pj = save_product(em);
  for (auto& part : pj["parts"])
    if (part["name"] == "lid") part["value_penalty"] = 60;
  Product valuable = product_from_json(pj);
  Pomdp mv(valuable, b);
  Action mill_lid{ActionKind::Destructive, valuable.part_index("lid"), *b.mill_tool()};
  auto t = mv.transition(mv.initial_node(), mill_lid);
  // 110 s milling + 10 s tool change + 5 s placing + lid 60 + four screws at 1.
  CHECK(t[0].reward == -(110 + 10 + 5 + 60 + 4));
  CHECK(t[0].time == 125);
}

TEST_CASE("observers") {
  ObservationModel ideal;
  CHECK(observe_stuck({0, 0, 0}, {0, 0, 0}, ideal) == 1.0);
  CHECK(observe_stuck({0, 0, 0}, {0, 0, 100}, ideal) == 0.0);
  ObservationModel noisy;
  noisy.p_tp = 0.9;
  noisy.p_fn = 0.1;
  CHECK(observe_stuck({0, 0, 0}, {0, noisy.epsilon_mm / 2, 0}, noisy) == 0.9);

  CHECK(observe_missing(true, ideal) == 0.0);
  CHECK(observe_missing(false, ideal) == 1.0);
  ObservationModel tn;
  tn.p_tn = 0.95;
  tn.p_fp = 0.05;
  CHECK(observe_missing(false, tn) == 0.95);

  SphereGrid g;
  ProductState s(2, g);
  CHECK(observe_glue(s, 0) == std::pair<double, double>{1.0, 0.0});
  s.set(0, 1, DirectionGrid::zeros(g));
  CHECK(observe_glue(s, 0) == std::pair<double, double>{0.0, 1.0});
  DirectionGrid half(g, 0.0);
  half[17] = 0.5;
  s.set(0, 1, half);
  auto [yes, no] = observe_glue(s, 0);
  CHECK(yes == doctest::Approx(0.5));
  CHECK(no == doctest::Approx(0.5));
}

TEST_CASE("graph construction is deterministic and keyed by content") {
  Product em = load("electric_motor");
  Cell b = cell("cell_b");
  PomdpGraph g1 = build_graph(Pomdp(em, b)), g2 = build_graph(Pomdp(em, b));
  CHECK(graph_to_json(g1).dump() == graph_to_json(g2).dump());
  PomdpGraph rt = graph_from_json(graph_to_json(g1));
  CHECK(graph_to_json(rt).dump() == graph_to_json(g1).dump());

  GraphOptions o;
  std::string k = graph_key(em, b, o);
  CHECK(k == g1.key);
  CHECK(graph_key(em.with_priors(std::map<std::string, double>{{"stuck_screw1", 0.3}}), b, o) != k);
  GraphOptions o2 = o;
  o2.gamma = 0.9;
  CHECK(graph_key(em, b, o2) != k);
}

TEST_CASE("node cap") {
  GraphOptions o;
  o.max_nodes = 10;
  try {
    build_graph(Pomdp(load("two_lid_motor"), cell("cell_b")), o);
    FAIL("expected a resource cap error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ResourceCap);
  }
}

TEST_CASE("feasibility stages short-circuit") {
  json cj = single_tool_cell();
  cj["feasibility"] = json::array({{{"tool", "gripper"}, {"part", "a"}, {"stages", {true, false, true}}}});
  Pomdp m(product_from_json(single_part()), cell_from_json(cj));
  m.reset_stage_evaluations();
  CHECK(m.enumerate_actions(m.initial_node()).empty());
  CHECK(m.stage_evaluations() == 2);
}
