#include "disasm/extract.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <set>

#include "disasm/error.hpp"

namespace disasm {

namespace {

struct Hit {
  double t;
  std::size_t tri;
};

// Moller-Trumbore; only triangles facing the ray count.
std::optional<Hit> cast(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_max) {
  std::optional<Hit> best;
  const auto& verts = mesh.vertices();
  for (std::size_t k = 0; k < mesh.triangles().size(); ++k) {
    if (mesh.areas()[k] <= 1e-12 || dot(mesh.normals()[k], dir) >= 0) continue;
    const auto& tri = mesh.triangles()[k];
    const Vec3 e1 = verts[tri[1]] - verts[tri[0]];
    const Vec3 e2 = verts[tri[2]] - verts[tri[0]];
    const Vec3 p = cross(dir, e2);
    const double det = dot(e1, p);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 s = origin - verts[tri[0]];
    const double u = dot(s, p) * inv;
    if (u < -1e-9 || u > 1 + 1e-9) continue;
    const Vec3 q = cross(s, e1);
    const double v = dot(dir, q) * inv;
    if (v < -1e-9 || u + v > 1 + 1e-9) continue;
    const double t = dot(e2, q) * inv;
    if (t < 0 || t > t_max) continue;
    if (!best || t < best->t) best = Hit{t, k};
  }
  return best;
}

void check_mesh(const TriMesh& m, const ExtractionOptions& opts, const char* which) {
  if (m.triangles().empty() || m.surface_area() <= 0) fail_input(std::string("degenerate mesh: ") + which);
  const double frac = static_cast<double>(m.degenerate_count()) / static_cast<double>(m.triangles().size());
  if (frac > opts.max_degenerate_fraction) {
    fail_input(std::string("degenerate mesh: ") + which + " has too many zero-area triangles");
  }
}

}  // namespace

ExtractionResult extract_relation_detailed(const TriMesh& mesh_i, const TriMesh& mesh_j, const SphereGrid& grid,
                                           const ExtractionOptions& opts) {
  if (opts.n_samples == 0) fail_input("extract_relation: n_samples must be >= 1");
  check_mesh(mesh_i, opts, "mesh_i");
  check_mesh(mesh_j, opts, "mesh_j");

  constexpr double kG = 1.32471795724474602596;  // plastic number, R2 sequence
  const double a1 = 1.0 / kG, a2 = 1.0 / (kG * kG);
  const double total = mesh_i.surface_area();
  const double band = 2.0 * opts.eps_contact;

  ExtractionResult res{DirectionGrid::ones(grid), 0, 0, {}};
  std::set<std::array<long long, 3>> seen;
  const auto& verts = mesh_i.vertices();
  for (std::size_t k = 0; k < mesh_i.triangles().size(); ++k) {
    if (mesh_i.areas()[k] <= 1e-12) continue;
    const auto& tri = mesh_i.triangles()[k];
    const Vec3 n = mesh_i.normals()[k];
    const Vec3 centroid = (verts[tri[0]] + verts[tri[1]] + verts[tri[2]]) * (1.0 / 3.0);
    const auto count = std::max<long long>(
        1, std::llround(static_cast<double>(opts.n_samples) * mesh_i.areas()[k] / total));
    for (long long s = 0; s < count; ++s) {
      double u = std::fmod(0.5 + a1 * static_cast<double>(s + 1), 1.0);
      double v = std::fmod(0.5 + a2 * static_cast<double>(s + 1), 1.0);
      if (u + v > 1) u = 1 - u, v = 1 - v;
      Vec3 p = verts[tri[0]] * (1 - u - v) + verts[tri[1]] * u + verts[tri[2]] * v;
      p = centroid + (p - centroid) * 0.98;  // stay off shared edges
      ++res.samples;
      const auto hit = cast(mesh_j, p - n * opts.eps_contact, n, band);
      if (!hit) continue;
      ++res.contacts;
      const Vec3 cn = mesh_j.normals()[hit->tri];
      const std::array<long long, 3> key{std::llround(cn.x * 1e9), std::llround(cn.y * 1e9),
                                         std::llround(cn.z * 1e9)};
      if (seen.insert(key).second) res.contact_normals.push_back(cn);
    }
  }

  for (std::size_t b = 0; b < grid.size(); ++b) {
    const Vec3 d = grid.center_of(b);
    for (const Vec3& cn : res.contact_normals) {
      if (dot(d, cn) < -opts.eps_normal) {
        res.relation[b] = 0.0;
        break;
      }
    }
  }
  return res;
}

DirectionGrid extract_relation(const TriMesh& mesh_i, const TriMesh& mesh_j, const SphereGrid& grid,
                               const ExtractionOptions& opts) {
  return extract_relation_detailed(mesh_i, mesh_j, grid, opts).relation;
}

}  // namespace disasm
