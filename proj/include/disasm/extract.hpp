#pragma once

#include <cstddef>
#include <vector>

#include "disasm/mesh.hpp"
#include "disasm/relation.hpp"

namespace disasm {

struct ExtractionOptions {
  std::size_t n_samples = 4096;
  double eps_contact = 0.05;  // mm
  double eps_normal = 1e-6;
  // Fraction of zero-area triangles tolerated before a mesh is rejected.
  double max_degenerate_fraction = 0.01;
};

struct ExtractionResult {
  DirectionGrid relation;
  std::size_t samples = 0;
  std::size_t contacts = 0;
  // Deduplicated contact normals, each pointing from mesh_j into mesh_i.
  std::vector<Vec3> contact_normals;
};

// Binary relation psi_ij: directions in which mesh_i can translate away from
// mesh_j. Rays leave sample points on mesh_i (offset inward by eps_contact)
// along the outward normal; front-facing hits on mesh_j within the contact
// band become contacts. Without contacts the result is all ones.
ExtractionResult extract_relation_detailed(const TriMesh& mesh_i, const TriMesh& mesh_j, const SphereGrid& grid,
                                           const ExtractionOptions& opts = {});

DirectionGrid extract_relation(const TriMesh& mesh_i, const TriMesh& mesh_j, const SphereGrid& grid,
                               const ExtractionOptions& opts = {});

}  // namespace disasm
