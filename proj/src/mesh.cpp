#include "disasm/mesh.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "disasm/error.hpp"

namespace disasm {

namespace fs = std::filesystem;

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<std::array<std::uint32_t, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  normals_.reserve(triangles_.size());
  areas_.reserve(triangles_.size());
  for (const auto& t : triangles_) {
    for (auto idx : t) {
      if (idx >= vertices_.size()) fail_input("mesh triangle index out of range: " + std::to_string(idx));
    }
    const Vec3 n = cross(vertices_[t[1]] - vertices_[t[0]], vertices_[t[2]] - vertices_[t[0]]);
    const double len = norm(n);
    areas_.push_back(0.5 * len);
    normals_.push_back(len > 1e-14 ? n * (1.0 / len) : Vec3{});
  }
}

std::size_t TriMesh::degenerate_count() const {
  std::size_t n = 0;
  for (double a : areas_) n += (a <= 1e-12) ? 1 : 0;
  return n;
}

double TriMesh::surface_area() const {
  double s = 0;
  for (double a : areas_) s += a;
  return s;
}

double TriMesh::signed_volume() const {
  double v = 0;
  for (const auto& t : triangles_) v += dot(vertices_[t[0]], cross(vertices_[t[1]], vertices_[t[2]])) / 6.0;
  return v;
}

TriMesh TriMesh::translated(const Vec3& offset) const {
  auto verts = vertices_;
  for (auto& v : verts) v = v + offset;
  return TriMesh(std::move(verts), triangles_);
}

namespace {

struct VertexWelder {
  std::vector<Vec3> vertices;
  std::map<std::array<double, 3>, std::uint32_t> index;

  std::uint32_t add(const Vec3& v) {
    auto [it, inserted] = index.try_emplace({v.x, v.y, v.z}, static_cast<std::uint32_t>(vertices.size()));
    if (inserted) vertices.push_back(v);
    return it->second;
  }
};

TriMesh load_stl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_input("cannot open mesh: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  VertexWelder w;
  std::vector<std::array<std::uint32_t, 3>> tris;
  bool binary = false;
  if (data.size() >= 84) {
    std::uint32_t count = 0;
    std::memcpy(&count, data.data() + 80, 4);
    binary = data.size() == 84 + static_cast<std::size_t>(count) * 50;
    if (binary) {
      for (std::uint32_t k = 0; k < count; ++k) {
        const char* rec = data.data() + 84 + static_cast<std::size_t>(k) * 50;
        std::array<std::uint32_t, 3> tri{};
        for (int v = 0; v < 3; ++v) {
          float xyz[3];
          std::memcpy(xyz, rec + 12 + v * 12, 12);
          tri[v] = w.add({xyz[0], xyz[1], xyz[2]});
        }
        tris.push_back(tri);
      }
    }
  }
  if (!binary) {
    if (data.rfind("solid", 0) != 0) fail_input("not an STL file: " + path.string());
    std::istringstream ss(data);
    std::string tok;
    std::vector<std::uint32_t> pending;
    while (ss >> tok) {
      if (tok == "vertex") {
        Vec3 v;
        if (!(ss >> v.x >> v.y >> v.z)) fail_input("malformed STL vertex in " + path.string());
        pending.push_back(w.add(v));
      } else if (tok == "endloop") {
        if (pending.size() != 3) fail_input("STL facet without 3 vertices in " + path.string());
        tris.push_back({pending[0], pending[1], pending[2]});
        pending.clear();
      }
    }
  }
  if (tris.empty()) fail_input("mesh has no triangles: " + path.string());
  return TriMesh(std::move(w.vertices), std::move(tris));
}

TriMesh load_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail_input("cannot open mesh: " + path.string());
  std::vector<Vec3> verts;
  std::vector<std::array<std::uint32_t, 3>> tris;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) fail_input("malformed OBJ vertex in " + path.string());
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string corner;
      while (ls >> corner) {
        const long raw = std::stol(corner.substr(0, corner.find('/')));
        const long resolved = raw < 0 ? static_cast<long>(verts.size()) + raw : raw - 1;
        if (resolved < 0) fail_input("OBJ face index out of range in " + path.string());
        idx.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (tris.empty()) fail_input("mesh has no triangles: " + path.string());
  return TriMesh(std::move(verts), std::move(tris));
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

// Appends a triangle, flipping its winding if it disagrees with `outward`.
void add_tri(std::vector<std::array<std::uint32_t, 3>>& tris, const std::vector<Vec3>& v, std::uint32_t a,
             std::uint32_t b, std::uint32_t c, const Vec3& outward) {
  const Vec3 n = cross(v[b] - v[a], v[c] - v[a]);
  if (dot(n, outward) < 0) std::swap(b, c);
  tris.push_back({a, b, c});
}

void add_quad(std::vector<std::array<std::uint32_t, 3>>& tris, const std::vector<Vec3>& v, std::uint32_t a,
              std::uint32_t b, std::uint32_t c, std::uint32_t d, const Vec3& outward) {
  add_tri(tris, v, a, b, c, outward);
  add_tri(tris, v, a, c, d, outward);
}

}  // namespace

TriMesh load_mesh(const fs::path& path) {
  if (!fs::exists(path)) fail_input("mesh file not found: " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".stl") return load_stl(path);
  if (ext == ".obj") return load_obj(path);
  fail_input("unsupported mesh format: " + path.string());
}

void save_stl(const TriMesh& mesh, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("cannot write mesh: " + path.string());
  char header[80] = {};
  std::strncpy(header, "disasm binary stl", sizeof header - 1);
  out.write(header, 80);
  const auto count = static_cast<std::uint32_t>(mesh.triangles().size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (std::size_t k = 0; k < mesh.triangles().size(); ++k) {
    float rec[12];
    const Vec3& n = mesh.normals()[k];
    rec[0] = static_cast<float>(n.x), rec[1] = static_cast<float>(n.y), rec[2] = static_cast<float>(n.z);
    for (int v = 0; v < 3; ++v) {
      const Vec3& p = mesh.vertices()[mesh.triangles()[k][v]];
      rec[3 + 3 * v] = static_cast<float>(p.x);
      rec[4 + 3 * v] = static_cast<float>(p.y);
      rec[5 + 3 * v] = static_cast<float>(p.z);
    }
    out.write(reinterpret_cast<const char*>(rec), sizeof rec);
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

void save_obj(const TriMesh& mesh, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail_input("cannot write mesh: " + path.string());
  out.precision(17);
  for (const auto& v : mesh.vertices()) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles()) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

TriMesh make_box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int k = 0; k < 8; ++k) v.push_back({(k & 1) ? hi.x : lo.x, (k & 2) ? hi.y : lo.y, (k & 4) ? hi.z : lo.z});
  std::vector<std::array<std::uint32_t, 3>> t;
  add_quad(t, v, 0, 2, 3, 1, {0, 0, -1});
  add_quad(t, v, 4, 5, 7, 6, {0, 0, 1});
  add_quad(t, v, 0, 1, 5, 4, {0, -1, 0});
  add_quad(t, v, 2, 6, 7, 3, {0, 1, 0});
  add_quad(t, v, 0, 4, 6, 2, {-1, 0, 0});
  add_quad(t, v, 1, 3, 7, 5, {1, 0, 0});
  return TriMesh(std::move(v), std::move(t));
}

namespace {

Vec3 ring_point(double cx, double cy, double r, int k, int sides, double z) {
  const double a = 2.0 * std::numbers::pi * k / sides;
  return {cx + r * std::cos(a), cy + r * std::sin(a), z};
}

Vec3 radial(int k, int sides) {
  const double a = 2.0 * std::numbers::pi * (k + 0.5) / sides;
  return {std::cos(a), std::sin(a), 0};
}

}  // namespace

TriMesh make_prism(double cx, double cy, double radius, double z0, double z1, int sides) {
  if (sides < 3) fail_input("prism needs at least 3 sides");
  std::vector<Vec3> v;
  const auto n = static_cast<std::uint32_t>(sides);
  for (int k = 0; k < sides; ++k) v.push_back(ring_point(cx, cy, radius, k, sides, z0));
  for (int k = 0; k < sides; ++k) v.push_back(ring_point(cx, cy, radius, k, sides, z1));
  v.push_back({cx, cy, z0});
  v.push_back({cx, cy, z1});
  std::vector<std::array<std::uint32_t, 3>> t;
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint32_t k1 = (k + 1) % n;
    add_quad(t, v, k, k1, n + k1, n + k, radial(static_cast<int>(k), sides));
    add_tri(t, v, 2 * n, k1, k, {0, 0, -1});
    add_tri(t, v, 2 * n + 1, n + k, n + k1, {0, 0, 1});
  }
  return TriMesh(std::move(v), std::move(t));
}

TriMesh make_holed_prism(double outer_radius, double inner_radius, double z0, double z1, double hole_depth,
                         int sides) {
  if (sides < 3) fail_input("prism needs at least 3 sides");
  if (!(inner_radius < outer_radius) || !(hole_depth < z1 - z0)) fail_input("invalid holed prism dimensions");
  const double zf = z1 - hole_depth;
  const auto n = static_cast<std::uint32_t>(sides);
  std::vector<Vec3> v;
  for (int k = 0; k < sides; ++k) v.push_back(ring_point(0, 0, outer_radius, k, sides, z0));  // 0..n-1
  for (int k = 0; k < sides; ++k) v.push_back(ring_point(0, 0, outer_radius, k, sides, z1));  // n..
  for (int k = 0; k < sides; ++k) v.push_back(ring_point(0, 0, inner_radius, k, sides, z1));  // 2n..
  for (int k = 0; k < sides; ++k) v.push_back(ring_point(0, 0, inner_radius, k, sides, zf));  // 3n..
  v.push_back({0, 0, z0});                                                                     // 4n
  v.push_back({0, 0, zf});                                                                     // 4n+1
  std::vector<std::array<std::uint32_t, 3>> t;
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint32_t k1 = (k + 1) % n;
    const Vec3 r = radial(static_cast<int>(k), sides);
    add_quad(t, v, k, k1, n + k1, n + k, r);                      // outer wall
    add_tri(t, v, 4 * n, k1, k, {0, 0, -1});                      // bottom
    add_quad(t, v, n + k, n + k1, 2 * n + k1, 2 * n + k, {0, 0, 1});  // top annulus
    add_quad(t, v, 2 * n + k, 2 * n + k1, 3 * n + k1, 3 * n + k, -r);  // hole wall, faces the axis
    add_tri(t, v, 4 * n + 1, 3 * n + k, 3 * n + k1, {0, 0, 1});   // hole floor
  }
  return TriMesh(std::move(v), std::move(t));
}

}  // namespace disasm
