// Writes the mesh fixtures used by the extraction tests:
//   two_cubes      separated cubes, no contact
//   block_on_slab  block resting on a wider slab
//   peg_in_hole    hexadecagonal peg seated in a blind hole
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disasm/mesh.hpp"

namespace fs = std::filesystem;
using disasm::TriMesh;

namespace {

struct Part {
  std::string name;
  TriMesh mesh;
};

void write_fixture(const fs::path& dir, const std::string& name, const std::vector<Part>& parts,
                   const std::string& target) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["name"] = name;
  manifest["parts"] = nlohmann::json::array();
  for (const auto& p : parts) {
    disasm::save_stl(p.mesh, dir / (p.name + ".stl"));
    manifest["parts"].push_back({{"name", p.name}, {"mesh", p.name + ".stl"}});
  }
  manifest["targets"] = {target};
  std::ofstream(dir / "manifest.json") << manifest.dump(1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("data/fixtures");
  try {
    write_fixture(root / "two_cubes", "two_cubes",
                  {{"cube_a", disasm::make_box({0, 0, 0}, {10, 10, 10})},
                   {"cube_b", disasm::make_box({30, 0, 0}, {40, 10, 10})}},
                  "cube_a");
    write_fixture(root / "block_on_slab", "block_on_slab",
                  {{"block", disasm::make_box({-5, -5, 0}, {5, 5, 10})},
                   {"slab", disasm::make_box({-20, -20, -5}, {20, 20, 0})}},
                  "block");
    write_fixture(root / "peg_in_hole", "peg_in_hole",
                  {{"peg", disasm::make_prism(0, 0, 3, 10, 30, 16)},
                   {"base", disasm::make_holed_prism(10, 3, 0, 20, 10, 16)}},
                  "peg");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "fixtures written to " << root.string() << "\n";
  return 0;
}
