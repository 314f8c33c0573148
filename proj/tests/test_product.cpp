#include <algorithm>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "disasm/error.hpp"
#include "disasm/product.hpp"

using namespace disasm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kProducts = fs::path(DISASM_DATA_DIR) / "products";

Product motor() { return load_product(kProducts / "electric_motor.json"); }
Product two_lid() { return load_product(kProducts / "two_lid_motor.json"); }
Product grinder() { return load_product(kProducts / "angle_grinder.json"); }

json tiny_spec() {
  return json::parse(R"({
    "name": "tiny",
    "parts": [{"name": "a"}, {"name": "b"}],
    "targets": ["a"],
    "relations": [{"i": "a", "j": "b", "grid": {"half_space": "+z"}, "mirror": true}],
    "tools": [{"name": "gripper", "parts": ["a", "b"]}],
    "eol_variables": [{"name": "stuck_a", "kind": "stuck", "part": "a", "prior": 0.5}]
  })");
}

bool same_relations(const ProductState& x, const ProductState& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (!(x.at(i, j) == y.at(i, j))) return false;
  return true;
}

}  // namespace

TEST_CASE("shipped products load") {
  Product p = two_lid();
  CHECK(p.size() == 12);
  CHECK(p.parts[p.part_index("rotor")].is_target);
  CHECK(p.targets() == std::vector<std::size_t>{p.part_index("rotor")});
  CHECK(p.grid.size() == 512);
  CHECK(motor().variables.size() == 4);
  CHECK(grinder().variables.size() == 2);
}

TEST_CASE("loader validation") {
  json s = tiny_spec();
  CHECK_NOTHROW(product_from_json(s));

  json empty = s;
  empty["parts"] = json::array();
  CHECK_THROWS_AS(product_from_json(empty), Error);

  json bad_prior = s;
  bad_prior["eol_variables"][0]["prior"] = 1.2;
  CHECK_THROWS_AS(product_from_json(bad_prior), Error);

  json unknown_part = s;
  unknown_part["targets"] = {"zzz"};
  CHECK_THROWS_AS(product_from_json(unknown_part), Error);

  try {
    product_from_json(bad_prior);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Input);
  }
}

TEST_CASE("nominal state") {
  Product p = motor();
  ProductState s = nominal_state(p);
  CHECK(s.removed_set().empty());
  // Rotor is buried under the lid.
  CHECK(s.part_feasibility(p.part_index("rotor")).p == 0.0);
  // Screws leave along +z.
  Feasibility f = s.part_feasibility(p.part_index("screw1"));
  CHECK(f.p == 1.0);
  CHECK(p.grid.center_of(f.best_bin).z > 0.9);
}

TEST_CASE("grinder head has a single pull direction region") {
  Product p = grinder();
  ProductState s = nominal_state(p);
  const DirectionGrid& g = s.at(p.part_index("gearbox"), p.part_index("body"));
  std::size_t free_bins = 0;
  for (std::size_t b = 0; b < g.size(); ++b) {
    if (g[b] == 0) continue;
    ++free_bins;
    CHECK(p.grid.theta_of(b) < p.grid.d_theta());
  }
  CHECK(free_bins == p.grid.n_phi());
}

TEST_CASE("mark_removed") {
  Product p = motor();
  ProductState s = nominal_state(p);
  const std::size_t lid = p.part_index("lid"), rotor = p.part_index("rotor");

  SUBCASE("idempotent") {
    ProductState once = mark_removed(s, lid);
    CHECK(same_relations(mark_removed(once, lid), once));
  }

  SUBCASE("lifting the lid frees the rotor") {
    CHECK(s.part_feasibility(rotor).p == 0.0);
    CHECK(mark_removed(s, lid).part_feasibility(rotor).p > 0.0);
    CHECK(mark_removed(s, lid).removed(lid));
  }

  SUBCASE("order does not matter") {
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    ProductState forward = s, backward = s;
    for (std::size_t i : order) forward = mark_removed(forward, i);
    std::reverse(order.begin(), order.end());
    for (std::size_t i : order) backward = mark_removed(backward, i);
    CHECK(same_relations(forward, backward));
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(forward.part_feasibility(i).p == 1.0);
  }
}

TEST_CASE("ground truth realization") {
  Product p = two_lid();
  SUBCASE("zero priors give the nominal relations") {
    Product z = p.with_priors(std::vector<double>(p.variables.size(), 0.0));
    CHECK(same_relations(realize_ground_truth(z, 7).state, nominal_state(z)));
  }
  SUBCASE("unit priors apply every operator") {
    Product one = p.with_priors(std::vector<double>(p.variables.size(), 1.0));
    GroundTruth gt = realize_ground_truth(one, 7);
    CHECK(std::all_of(gt.assignment.begin(), gt.assignment.end(), [](bool b) { return b; }));
    for (const auto& v : one.variables)
      for (auto [i, j] : v.pairs) CHECK(gt.state.at(i, j).all_zeros());
    CHECK(gt.state.part_feasibility(p.part_index("screw1")).p == 0.0);
  }
  SUBCASE("same seed, same truth") {
    GroundTruth a = realize_ground_truth(p, 99), b = realize_ground_truth(p, 99);
    CHECK(a.assignment == b.assignment);
    CHECK(same_relations(a.state, b.state));
  }
  SUBCASE("prior 0.5 frequency") {
    Product half = p.with_priors(std::vector<double>(p.variables.size(), 0.5));
    int hits = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) hits += realize_ground_truth(half, s).assignment[0] ? 1 : 0;
    CHECK(std::abs(hits / 10000.0 - 0.5) < 0.02);
  }
}

TEST_CASE("stuck pair stays blocked until destroyed") {
  Product p = motor();
  const std::size_t s4 = p.part_index("screw4");
  std::vector<bool> a(p.variables.size(), false);
  a[*p.variable_index("stuck_screw4")] = true;
  ProductState st = ground_truth_from(p, a).state;
  CHECK(st.part_feasibility(s4).p == 0.0);
  for (std::size_t other : {p.part_index("screw1"), p.part_index("rotor")}) {
    if (other == s4) continue;
    st = mark_removed(st, other);
    CHECK(st.part_feasibility(s4).p == 0.0);
  }
}

TEST_CASE("missing part never blocks") {
  Product p = grinder();
  std::vector<bool> a(p.variables.size(), false);
  a[*p.variable_index("missing_screw3")] = true;
  ProductState st = ground_truth_from(p, a).state;
  const std::size_t s3 = p.part_index("screw3");
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (j == s3) continue;
    CHECK(st.at(s3, j).all_ones());
    CHECK(st.at(j, s3).all_ones());
  }
}

TEST_CASE("save and reload is semantically identical") {
  for (const Product& p : {motor(), two_lid(), grinder()}) {
    Product r = product_from_json(save_product(p));
    CHECK(r.name == p.name);
    REQUIRE(r.size() == p.size());
    CHECK(same_relations(r.nominal, p.nominal));
    REQUIRE(r.variables.size() == p.variables.size());
    for (std::size_t k = 0; k < p.variables.size(); ++k) {
      CHECK(r.variables[k].name == p.variables[k].name);
      CHECK(r.variables[k].prior == p.variables[k].prior);
      CHECK(r.variables[k].pairs == p.variables[k].pairs);
      CHECK(r.variables[k].op == p.variables[k].op);
    }
    CHECK(r.targets() == p.targets());
    CHECK(r.destructive.size() == p.destructive.size());
  }
}

TEST_CASE("prior overrides") {
  Product p = motor().with_priors(std::map<std::string, double>{{"stuck_screw1", 0.4}});
  CHECK(p.variables[*p.variable_index("stuck_screw1")].prior == 0.4);
  CHECK_THROWS_AS(motor().with_priors(std::map<std::string, double>{{"nope", 0.4}}), Error);
  CHECK_THROWS_AS(motor().with_priors(std::map<std::string, double>{{"stuck_screw1", -0.1}}), Error);
}
