#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "disasm/vec3.hpp"

namespace disasm {

// Discretized unit sphere. Bins are cells of a uniform (theta, phi) lattice,
// theta in [0, pi] (polar, from +z), phi in [0, 2pi). Bin index is theta-major:
// index = t * n_phi + p.
class SphereGrid {
 public:
  static constexpr std::size_t kDefaultTheta = 16;
  static constexpr std::size_t kDefaultPhi = 32;

  SphereGrid() : SphereGrid(kDefaultTheta, kDefaultPhi) {}
  SphereGrid(std::size_t n_theta, std::size_t n_phi);

  std::size_t n_theta() const { return n_theta_; }
  std::size_t n_phi() const { return n_phi_; }
  std::size_t size() const { return n_theta_ * n_phi_; }
  double d_theta() const;
  double d_phi() const;

  double theta_of(std::size_t bin) const;
  double phi_of(std::size_t bin) const;

  // Unit vector at the bin center.
  Vec3 center_of(std::size_t bin) const;

  // Bin whose (theta, phi) cell contains the direction, i.e. the nearest
  // center in parameter space. Throws on a zero vector.
  std::size_t bin_of(const Vec3& direction) const;

  // Largest angle between a bin's center and any of its cell corners.
  double angular_radius(std::size_t bin) const;

  bool operator==(const SphereGrid&) const = default;

 private:
  std::size_t n_theta_;
  std::size_t n_phi_;
};

Vec3 direction_from_angles(double theta, double phi);

// Probability of free relative motion per direction bin.
class DirectionGrid {
 public:
  explicit DirectionGrid(SphereGrid grid, double fill = 0.0);
  DirectionGrid(SphereGrid grid, std::vector<double> values);

  static DirectionGrid ones(const SphereGrid& g) { return DirectionGrid(g, 1.0); }
  static DirectionGrid zeros(const SphereGrid& g) { return DirectionGrid(g, 0.0); }
  // 1 on bins whose center lies within half_angle of `axis`, else 0.
  static DirectionGrid cone(const SphereGrid& g, const Vec3& axis, double half_angle);
  // 1 on bins whose center satisfies center . normal >= -tolerance.
  static DirectionGrid half_space(const SphereGrid& g, const Vec3& normal, double tolerance = 0.0);

  const SphereGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t bin) const { return values_[bin]; }
  double& operator[](std::size_t bin) { return values_[bin]; }
  std::span<const double> values() const { return values_; }

  bool all_ones() const;
  bool all_zeros() const;
  bool is_binary() const;

  // Value at -d for every d (relation of the opposite motion).
  DirectionGrid mirrored() const;

  bool operator==(const DirectionGrid&) const = default;

 private:
  SphereGrid grid_;
  std::vector<double> values_;
};

nlohmann::json to_json(const DirectionGrid& g);
DirectionGrid grid_from_json(const nlohmann::json& j);

// End-of-life operators on a nominal relation.
struct Stuck {
  bool operator==(const Stuck&) const = default;
};
struct Wear {
  DirectionGrid added;
  bool operator==(const Wear&) const = default;
};
struct Deform {
  double delta_theta = 0;
  double delta_phi = 0;
  bool operator==(const Deform&) const = default;
};
struct Damage {
  DirectionGrid replacement;
  bool operator==(const Damage&) const = default;
};
using EolOperator = std::variant<Stuck, Wear, Deform, Damage>;

DirectionGrid apply_operator(const DirectionGrid& psi0, const EolOperator& op);

struct Feasibility {
  double p = 0;
  std::size_t best_bin = 0;
};

// max over bins of the product over the row; ties go to the lowest bin.
Feasibility feasibility(std::span<const DirectionGrid* const> row);
Feasibility feasibility(std::span<const DirectionGrid> row);

}  // namespace disasm
