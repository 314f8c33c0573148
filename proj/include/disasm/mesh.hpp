#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "disasm/vec3.hpp"

namespace disasm {

// Triangle mesh in millimetres with counter-clockwise (outward) winding.
class TriMesh {
 public:
  TriMesh() = default;
  TriMesh(std::vector<Vec3> vertices, std::vector<std::array<std::uint32_t, 3>> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<std::uint32_t, 3>>& triangles() const { return triangles_; }
  // Unit normal per triangle; zero vector for degenerate triangles.
  const std::vector<Vec3>& normals() const { return normals_; }
  const std::vector<double>& areas() const { return areas_; }

  std::size_t degenerate_count() const;
  double surface_area() const;
  double signed_volume() const;

  TriMesh translated(const Vec3& offset) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<std::array<std::uint32_t, 3>> triangles_;
  std::vector<Vec3> normals_;
  std::vector<double> areas_;
};

// STL (binary or ASCII) or OBJ, chosen by extension.
TriMesh load_mesh(const std::filesystem::path& path);
void save_stl(const TriMesh& mesh, const std::filesystem::path& path);
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

TriMesh make_box(const Vec3& lo, const Vec3& hi);
// Regular prism with `sides` lateral faces around the z axis through (cx, cy).
TriMesh make_prism(double cx, double cy, double radius, double z0, double z1, int sides);
// Prism of `outer_radius` from z0 to z1 with a coaxial blind hole of
// `inner_radius` reaching from the top face down to z1 - hole_depth.
TriMesh make_holed_prism(double outer_radius, double inner_radius, double z0, double z1, double hole_depth,
                         int sides);

}  // namespace disasm
