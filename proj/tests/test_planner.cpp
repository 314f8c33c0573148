#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "disasm/cell.hpp"
#include "disasm/error.hpp"
#include "disasm/planner.hpp"

using namespace disasm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(DISASM_DATA_DIR);

Product load(const char* name) { return load_product(kData / "products" / (std::string(name) + ".json")); }
Cell cell(const char* name) { return load_cell(kData / "cells" / (std::string(name) + ".json")); }

// Hand-built graph. Nodes are told apart by their removed mask.
struct Builder {
  PomdpGraph g;
  explicit Builder(double gamma) {
    g.options.gamma = gamma;
    g.part_names = {"p0", "p1"};
  }
  std::size_t node(bool terminal = false) {
    GraphNode n;
    n.key.removed = g.nodes.size();
    n.terminal = terminal;
    g.nodes.push_back(n);
    return g.nodes.size() - 1;
  }
  void edge(std::size_t from, std::size_t part, std::vector<std::pair<std::size_t, double>> outs, double reward) {
    GraphEdge e;
    e.action = {ActionKind::NonDestructive, part, 0};
    for (auto [to, p] : outs) e.outcomes.push_back({to, p, reward, -reward, {}});
    g.nodes[from].edges.push_back(e);
  }
  PomdpGraph done() {
    g.reindex();
    return g;
  }
};

// Unscrew (cost 20, succeeds w.p. s) with mill (cost 60) as fallback, or mill at once.
PomdpGraph try_then_mill(double s) {
  Builder b(1.0);
  std::size_t root = b.node(), failed = b.node(), done = b.node(true);
  b.edge(root, 0, {{done, s}, {failed, 1 - s}}, -20);
  b.edge(root, 1, {{done, 1.0}}, -60);
  b.edge(failed, 1, {{done, 1.0}}, -60);
  return b.done();
}

Cell scaled(Cell c, double k) {
  for (auto& t : c.tools) {
    t.t_action *= k;
    for (auto& [_, v] : t.t_action_parts) v *= k;
  }
  c.t_place *= k;
  for (auto& row : c.t_change)
    for (auto& v : row) v *= k;
  return c;
}

}  // namespace

TEST_CASE("value iteration closed forms") {
  SUBCASE("chain sums rewards") {
    Builder b(1.0);
    std::size_t r = b.node(), m = b.node(), t = b.node(true);
    b.edge(r, 0, {{m, 1.0}}, -10);
    b.edge(m, 1, {{t, 1.0}}, -5);
    auto res = value_iteration(b.done());
    CHECK(res.v[r] == -15);
    CHECK(res.v[t] == 0);
  }
  SUBCASE("try then mill") {
    // Q(try) = -20 + (1 - s)(-60); Q(mill) = -60.
    for (double s : {0.1, 0.5, 0.9}) {
      auto res = value_iteration(try_then_mill(s));
      double q_try = -20 - (1 - s) * 60;
      CHECK(res.q[0][0] == doctest::Approx(q_try));
      CHECK(res.q[0][1] == doctest::Approx(-60));
      CHECK(res.v[0] == doctest::Approx(std::max(q_try, -60.0)));
      CHECK(*res.policy.edge[0] == (q_try > -60 ? 0u : 1u));
    }
  }
  SUBCASE("discounting") {
    Builder b(0.5);
    std::size_t r = b.node(), m = b.node(), t = b.node(true);
    b.edge(r, 0, {{m, 1.0}}, -10);
    b.edge(m, 1, {{t, 1.0}}, -8);
    CHECK(value_iteration(b.done()).v[r] == doctest::Approx(-14));
  }
  SUBCASE("dead end penalty") {
    Builder b(1.0);
    std::size_t r = b.node(), dead = b.node(), t = b.node(true);
    b.edge(r, 0, {{t, 0.5}, {dead, 0.5}}, -10);
    b.g.options.dead_end_penalty = 100;
    CHECK(value_iteration(b.done()).v[r] == doctest::Approx(-60));
  }
}

TEST_CASE("value iteration residuals never grow") {
  Pomdp m(load("two_lid_motor"), cell("cell_b"));
  auto res = value_iteration(build_graph(m));
  REQUIRE(res.residuals.size() >= 2);
  for (std::size_t k = 1; k < res.residuals.size(); ++k) CHECK(res.residuals[k] <= res.residuals[k - 1] + 1e-12);
  CHECK(res.residuals.back() <= 1e-10);
}

TEST_CASE("greedy ties go to the lowest index") {
  CHECK(*greedy_index({-3, -1, -1}) == 1);
  CHECK(*greedy_index({-1 - 1e-12, -1}) == 0);
  CHECK_FALSE(greedy_index({}).has_value());
}

TEST_CASE("q-learning on a deterministic chain recovers suffix costs") {
  Builder b(0.99);
  std::size_t r = b.node(), m = b.node(), t = b.node(true);
  b.edge(r, 0, {{m, 1.0}}, -10);
  b.edge(m, 1, {{t, 1.0}}, -5);
  PomdpGraph g = b.done();
  QTable qt = q_learn(g, {}, 3);
  CHECK(qt.q[m][0] == doctest::Approx(-5).epsilon(1e-6));
  CHECK(qt.q[r][0] == doctest::Approx(-10 - 0.99 * 5).epsilon(1e-6));
}

TEST_CASE("q-learning finds the oracle root action on the try-then-mill graph") {
  for (double s : {0.1, 0.9}) {
    PomdpGraph g = try_then_mill(s);
    auto vi = value_iteration(g);
    int agree = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      QLearnParams p;
      p.gamma = 1.0;
      Policy pol = policy_from_qtable(g, q_learn(g, p, seed));
      agree += pol.edge[0] == vi.policy.edge[0] ? 1 : 0;
    }
    CHECK(agree >= 19);
  }
}

TEST_CASE("q-learning is reproducible and records its hyperparameters") {
  Pomdp m(load("electric_motor"), cell("cell_b"));
  PomdpGraph g = build_graph(m);
  QTable a = q_learn(g, {}, 42), b = q_learn(g, {}, 42);
  CHECK(a.q == b.q);
  Policy p = policy_from_qtable(g, a);
  json j = policy_to_json(p, g);
  CHECK(j["hyperparameters"]["gamma"] == 0.99);
  CHECK(j["hyperparameters"]["alpha0"] == 0.7);
  CHECK(j["hyperparameters"]["episodes"] == 5000);
  CHECK(policy_to_json(policy_from_qtable(g, b), g).dump() == j.dump());
  Policy back = policy_from_json(j, g);
  CHECK(back.edge == p.edge);

  PomdpGraph other = build_graph(Pomdp(load("electric_motor").with_priors(std::vector<double>(4, 0.5)), cell("cell_b")));
  try {
    policy_from_json(j, other);
    FAIL("expected incompatibility");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Incompatible);
  }
}

TEST_CASE("oracle argmax is invariant to time scaling") {
  for (const char* name : {"electric_motor", "two_lid_motor"}) {
    Product p = load(name);
    json pj = save_product(p);
    for (auto& part : pj["parts"]) part["value_penalty"] = part.value("value_penalty", 0.0) * 3;
    PomdpGraph g1 = build_graph(Pomdp(p, cell("cell_b")));
    PomdpGraph g3 = build_graph(Pomdp(product_from_json(pj), scaled(cell("cell_b"), 3)));
    REQUIRE(g1.nodes.size() == g3.nodes.size());
    auto v1 = value_iteration(g1), v3 = value_iteration(g3);
    CHECK(v1.policy.edge == v3.policy.edge);
    CHECK(v3.v[g3.root] == doctest::Approx(3 * v1.v[g1.root]));
  }
}

TEST_CASE("bayes filter") {
  Cell b = cell("cell_b");
  const std::size_t driver = *b.tool_index("screwdriver");

  SUBCASE("ideal rates collapse the posterior") {
    Product em = load("electric_motor").with_priors(std::map<std::string, double>{{"stuck_screw1", 0.9}});
    Pomdp m(em, b);
    const std::size_t s1 = em.part_index("screw1"), v = *em.variable_index("stuck_screw1");
    Action a{ActionKind::NonDestructive, s1, driver};
    Belief prior = prior_belief(em);
    Belief stuck = belief_update(m, prior, 0, a, {{ObsKind::StuckDetected, s1}});
    CHECK(stuck.p[v] == 1.0);
    Belief freed = belief_update(m, prior, 0, a, {{ObsKind::Removed, s1}});
    CHECK(freed.p[v] == 0.0);
    // Idempotent under the same observation.
    CHECK(belief_update(m, stuck, 0, a, {{ObsKind::StuckDetected, s1}}).p == stuck.p);
    // Other variables are untouched.
    CHECK(stuck.p[*em.variable_index("stuck_screw4")] == prior.p[*em.variable_index("stuck_screw4")]);
  }

  SUBCASE("noisy detector") {
    json cj = save_cell(b);
    cj["observer"] = {{"p_tp", 0.9}, {"p_fn", 0.1}, {"p_fp", 0.1}, {"p_tn", 0.9}, {"epsilon_mm", 5}};
    Product em = load("electric_motor").with_priors(std::map<std::string, double>{{"stuck_screw1", 0.5}});
    Pomdp m(em, cell_from_json(cj));
    const std::size_t s1 = em.part_index("screw1"), v = *em.variable_index("stuck_screw1");
    Belief post = belief_update(m, prior_belief(em), 0, Action{ActionKind::NonDestructive, s1, driver},
                                {{ObsKind::StuckDetected, s1}});
    // 0.5 * 0.9 / (0.5 * 0.9 + 0.5 * 0.1)
    CHECK(post.p[v] == doctest::Approx(0.9));
  }

  SUBCASE("inspection") {
    Product gr = load("angle_grinder");
    Pomdp m(gr, cell("cell_a"));
    const std::size_t v = *gr.variable_index("missing_screw3"), s3 = gr.part_index("screw3");
    Action inspect{ActionKind::Inspect, kNoPart, 0};
    CHECK(belief_update(m, prior_belief(gr), 0, inspect, {{ObsKind::Missing, s3}}).p[v] == 1.0);
    CHECK(belief_update(m, prior_belief(gr), 0, inspect, {{ObsKind::PresentConfirmed, s3}}).p[v] == 0.0);
  }

  SUBCASE("most likely assignment") {
    Belief bl{{0.2, 0.5, 0.8}};
    CHECK(bl.most_likely() == std::vector<bool>{false, false, true});
  }
}

TEST_CASE("action selection follows the belief") {
  Product em = load("electric_motor");
  Cell b = cell("cell_b");
  Pomdp m(em, b);
  PomdpGraph g = build_graph(m);
  auto vi = value_iteration(g);
  const std::size_t s4 = em.part_index("screw4"), driver = *b.tool_index("screwdriver");

  // Low priors: the nominal first move, which is to try the screw that may be stuck.
  Belief prior = prior_belief(em);
  auto first = select_action(g, vi.policy, m, prior, 0, m.initial_node().tool, true);
  REQUIRE(first);
  CHECK(*first == Action{ActionKind::NonDestructive, s4, driver});
  CHECK(*first == *vi.policy.action(g, g.root));

  Belief stuck = belief_update(m, prior, 0, *first, {{ObsKind::StuckDetected, s4}});
  auto next = select_action(g, vi.policy, m, stuck, 0, static_cast<std::uint32_t>(driver), true);
  REQUIRE(next);
  CHECK(next->kind == ActionKind::Destructive);
  CHECK(next->part == em.part_index("lid"));
}

TEST_CASE("deterministic baseline") {
  Cell b = cell("cell_b");

  SUBCASE("prefers the large lid on a nominal two-lid motor") {
    Product two = load("two_lid_motor");
    DeterministicBaseline det(two, b);
    NodeKey k = det.model().initial_node();
    std::vector<std::string> seen;
    while (auto a = det.plan(k)) {
      seen.push_back(two.parts[a->part].name);
      auto t = det.model().transition(k, *a);
      REQUIRE(t.size() == 1);
      k = t[0].next;
    }
    CHECK(std::find(seen.begin(), seen.end(), "large_lid") != seen.end());
    CHECK(std::find(seen.begin(), seen.end(), "small_lid") == seen.end());
    CHECK(seen.back() == "rotor");
    CHECK(det.model().is_terminal(k));
  }

  SUBCASE("a stuck screw makes it mill the lid") {
    Product em = load("electric_motor");
    DeterministicBaseline det(em, b);
    NodeKey k = det.model().initial_node();
    auto first = det.plan(k);
    REQUIRE(first);
    CHECK(first->kind == ActionKind::NonDestructive);
    k.knowledge[*em.variable_index("stuck_" + em.parts[first->part].name)] = Knowledge::KnownTrue;
    k.tool = static_cast<std::uint32_t>(first->tool);
    auto next = det.plan(det.model().canonical(k));
    REQUIRE(next);
    CHECK(next->kind == ActionKind::Destructive);
    CHECK(em.parts[next->part].name == "lid");
    CHECK(det.replans() >= 1);
  }

  SUBCASE("a missing screw is skipped") {
    Product gr = load("angle_grinder");
    DeterministicBaseline det(gr, cell("cell_a"));
    NodeKey k = det.model().initial_node();
    k.inspected = true;
    k.knowledge[*gr.variable_index("missing_screw3")] = Knowledge::KnownTrue;
    k = det.model().canonical(k);
    CHECK(k.is_removed(gr.part_index("screw3")));
    while (auto a = det.plan(k)) {
      CHECK(gr.parts[a->part].name != "screw3");
      k = det.model().transition(k, *a).front().next;
    }
    CHECK(det.model().is_terminal(k));
  }
}
