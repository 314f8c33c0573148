#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "disasm/error.hpp"
#include "disasm/extract.hpp"
#include "disasm/mesh.hpp"

using namespace disasm;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(DISASM_DATA_DIR) / "fixtures";

TriMesh block() { return make_box({-5, -5, 0}, {5, 5, 10}); }
TriMesh slab() { return make_box({-20, -20, -5}, {20, 20, 0}); }
TriMesh peg() { return make_prism(0, 0, 3, 10, 30, 16); }
TriMesh base() { return make_holed_prism(10, 3, 0, 20, 10, 16); }

// Directions leaving a flat support: polar angle at most 90 degrees plus tolerance.
DirectionGrid half_space_oracle(const SphereGrid& g, bool up, double tol) {
  DirectionGrid out(g, 0.0);
  for (std::size_t b = 0; b < g.size(); ++b) {
    double c = std::cos(g.theta_of(b));
    out[b] = (up ? c : -c) >= -tol ? 1.0 : 0.0;
  }
  return out;
}

// Peg in a blind hole: only directions within asin(tol) of the hole axis.
DirectionGrid cone_oracle(const SphereGrid& g, bool up, double tol) {
  DirectionGrid out(g, 0.0);
  for (std::size_t b = 0; b < g.size(); ++b) {
    double th = up ? g.theta_of(b) : std::acos(-1.0) - g.theta_of(b);
    out[b] = th <= std::asin(tol) ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace

TEST_CASE("mesh primitives are closed and outward") {
  CHECK(block().signed_volume() == doctest::Approx(1000));
  CHECK(block().surface_area() == doctest::Approx(600));
  CHECK(peg().signed_volume() > 0);
  CHECK(base().signed_volume() > 0);
  CHECK(base().signed_volume() < make_prism(0, 0, 10, 0, 20, 16).signed_volume());
  CHECK(block().degenerate_count() == 0);
}

TEST_CASE("stl and obj round trip") {
  fs::path dir = fs::temp_directory_path() / "disasm_mesh_rt";
  fs::create_directories(dir);
  TriMesh m = peg();
  save_stl(m, dir / "p.stl");
  save_obj(m, dir / "p.obj");
  for (const char* f : {"p.stl", "p.obj"}) {
    TriMesh r = load_mesh(dir / f);
    CHECK(r.triangles().size() == m.triangles().size());
    CHECK(r.signed_volume() == doctest::Approx(m.signed_volume()).epsilon(1e-5));
  }
  CHECK_THROWS_AS(load_mesh(dir / "missing.stl"), Error);
  CHECK_THROWS_AS(load_mesh(dir / "p.xyz"), Error);
}

TEST_CASE("separated cubes are unconstrained") {
  SphereGrid g;
  TriMesh a = make_box({0, 0, 0}, {10, 10, 10});
  TriMesh b = make_box({30, 0, 0}, {40, 10, 10});
  ExtractionResult r = extract_relation_detailed(a, b, g);
  CHECK(r.contacts == 0);
  CHECK(r.relation.all_ones());
}

TEST_CASE("block on slab matches the analytic half space") {
  SphereGrid g;
  for (double tol : {1e-6, 0.15}) {
    ExtractionOptions o;
    o.eps_normal = tol;
    ExtractionResult up = extract_relation_detailed(block(), slab(), g, o);
    ExtractionResult down = extract_relation_detailed(slab(), block(), g, o);
    CHECK(up.contacts > 0);
    REQUIRE(up.contact_normals.size() == 1);
    CHECK(up.contact_normals[0].z == doctest::Approx(1.0));
    CHECK(up.relation == half_space_oracle(g, true, tol));
    CHECK(down.relation == half_space_oracle(g, false, tol));
    CHECK(down.relation == up.relation.mirrored());
  }
}

TEST_CASE("peg in hole matches the analytic cone") {
  SphereGrid g;
  for (double tol : {0.15, 0.35}) {
    ExtractionOptions o;
    o.eps_normal = tol;
    DirectionGrid pr = extract_relation(peg(), base(), g, o);
    DirectionGrid br = extract_relation(base(), peg(), g, o);
    CHECK(pr == cone_oracle(g, true, tol));
    CHECK(br == cone_oracle(g, false, tol));
    CHECK(br == pr.mirrored());
  }
  // With a tight tolerance the lateral walls leave no bin center free.
  CHECK(extract_relation(peg(), base(), g).all_zeros());
}

TEST_CASE("shipped fixtures match the generators") {
  SphereGrid g;
  ExtractionOptions o;
  o.eps_normal = 0.15;
  TriMesh p = load_mesh(kFixtures / "peg_in_hole" / "peg.stl");
  TriMesh b = load_mesh(kFixtures / "peg_in_hole" / "base.stl");
  CHECK(extract_relation(p, b, g, o) == cone_oracle(g, true, 0.15));
  TriMesh bl = load_mesh(kFixtures / "block_on_slab" / "block.stl");
  TriMesh sl = load_mesh(kFixtures / "block_on_slab" / "slab.stl");
  CHECK(extract_relation(bl, sl, g, o) == half_space_oracle(g, true, 0.15));
}
