#include "disasm/relation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "disasm/error.hpp"

namespace disasm {

namespace {

constexpr double kPi = std::numbers::pi;

void require_same_grid(const SphereGrid& a, const SphereGrid& b) {
  if (!(a == b)) {
    fail_input("direction grid resolution mismatch: " + std::to_string(a.n_theta()) + "x" +
               std::to_string(a.n_phi()) + " vs " + std::to_string(b.n_theta()) + "x" +
               std::to_string(b.n_phi()));
  }
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(dot(a, b), -1.0, 1.0));
}

}  // namespace

SphereGrid::SphereGrid(std::size_t n_theta, std::size_t n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
  if (n_theta < 2 || n_phi < 4) {
    fail_input("sphere grid needs n_theta >= 2 and n_phi >= 4, got " + std::to_string(n_theta) + "x" +
               std::to_string(n_phi));
  }
}

double SphereGrid::d_theta() const { return kPi / static_cast<double>(n_theta_); }
double SphereGrid::d_phi() const { return 2.0 * kPi / static_cast<double>(n_phi_); }

double SphereGrid::theta_of(std::size_t bin) const {
  return (static_cast<double>(bin / n_phi_) + 0.5) * d_theta();
}
double SphereGrid::phi_of(std::size_t bin) const {
  return (static_cast<double>(bin % n_phi_) + 0.5) * d_phi();
}

Vec3 direction_from_angles(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

Vec3 SphereGrid::center_of(std::size_t bin) const { return direction_from_angles(theta_of(bin), phi_of(bin)); }

std::size_t SphereGrid::bin_of(const Vec3& direction) const {
  const double len = norm(direction);
  if (!(len > 0.0) || !std::isfinite(len)) fail_input("bin_of: zero or non-finite direction");
  const Vec3 d = direction * (1.0 / len);
  const double theta = std::acos(std::clamp(d.z, -1.0, 1.0));
  double phi = std::atan2(d.y, d.x);
  if (phi < 0) phi += 2.0 * kPi;
  auto t = static_cast<std::size_t>(theta / d_theta());
  auto p = static_cast<std::size_t>(phi / d_phi());
  t = std::min(t, n_theta_ - 1);
  p %= n_phi_;
  return t * n_phi_ + p;
}

double SphereGrid::angular_radius(std::size_t bin) const {
  const Vec3 c = center_of(bin);
  const double t0 = static_cast<double>(bin / n_phi_) * d_theta();
  const double p0 = static_cast<double>(bin % n_phi_) * d_phi();
  double r = 0;
  for (double t : {t0, t0 + d_theta()}) {
    for (double p : {p0, p0 + d_phi()}) r = std::max(r, angle_between(c, direction_from_angles(t, p)));
  }
  return r;
}

DirectionGrid::DirectionGrid(SphereGrid grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

DirectionGrid::DirectionGrid(SphereGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    fail_input("direction grid expects " + std::to_string(grid_.size()) + " values, got " +
               std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) fail_input("direction grid value outside [0,1]: " + std::to_string(v));
  }
}

DirectionGrid DirectionGrid::cone(const SphereGrid& g, const Vec3& axis, double half_angle) {
  const Vec3 a = normalized(axis);
  DirectionGrid out(g, 0.0);
  for (std::size_t b = 0; b < g.size(); ++b) {
    if (angle_between(g.center_of(b), a) <= half_angle) out[b] = 1.0;
  }
  return out;
}

DirectionGrid DirectionGrid::half_space(const SphereGrid& g, const Vec3& normal, double tolerance) {
  const Vec3 n = normalized(normal);
  DirectionGrid out(g, 0.0);
  for (std::size_t b = 0; b < g.size(); ++b) {
    if (dot(g.center_of(b), n) >= -tolerance) out[b] = 1.0;
  }
  return out;
}

bool DirectionGrid::all_ones() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 1.0; });
}
bool DirectionGrid::all_zeros() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}
bool DirectionGrid::is_binary() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

DirectionGrid DirectionGrid::mirrored() const {
  DirectionGrid out(grid_, 0.0);
  for (std::size_t b = 0; b < size(); ++b) out[b] = values_[grid_.bin_of(-grid_.center_of(b))];
  return out;
}

nlohmann::json to_json(const DirectionGrid& g) {
  return {{"n_theta", g.grid().n_theta()},
          {"n_phi", g.grid().n_phi()},
          {"values", std::vector<double>(g.values().begin(), g.values().end())}};
}

DirectionGrid grid_from_json(const nlohmann::json& j) {
  try {
    SphereGrid g(j.at("n_theta").get<std::size_t>(), j.at("n_phi").get<std::size_t>());
    return DirectionGrid(g, j.at("values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    fail_input(std::string("malformed direction grid: ") + e.what());
  }
}

DirectionGrid apply_operator(const DirectionGrid& psi0, const EolOperator& op) {
  const SphereGrid& g = psi0.grid();
  return std::visit(
      [&](const auto& o) -> DirectionGrid {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Stuck>) {
          return DirectionGrid(g, 0.0);
        } else if constexpr (std::is_same_v<T, Wear>) {
          require_same_grid(g, o.added.grid());
          DirectionGrid out = psi0;
          for (std::size_t b = 0; b < g.size(); ++b) out[b] = std::min(1.0, psi0[b] + o.added[b]);
          return out;
        } else if constexpr (std::is_same_v<T, Deform>) {
          // Each bin's content moves to the bin containing its shifted center.
          // Collisions keep the larger value.
          DirectionGrid out(g, 0.0);
          for (std::size_t b = 0; b < g.size(); ++b) {
            const Vec3 moved = direction_from_angles(g.theta_of(b) + o.delta_theta, g.phi_of(b) + o.delta_phi);
            const std::size_t target = g.bin_of(moved);
            out[target] = std::max(out[target], psi0[b]);
          }
          return out;
        } else {
          require_same_grid(g, o.replacement.grid());
          return o.replacement;
        }
      },
      op);
}

Feasibility feasibility(std::span<const DirectionGrid* const> row) {
  if (row.empty()) fail_input("feasibility: empty relation row");
  const SphereGrid& g = row.front()->grid();
  for (const DirectionGrid* d : row) require_same_grid(g, d->grid());
  Feasibility best{-1.0, 0};
  for (std::size_t b = 0; b < g.size(); ++b) {
    double prod = 1.0;
    for (const DirectionGrid* d : row) {
      prod *= (*d)[b];
      if (prod == 0.0) break;
    }
    if (prod > best.p) best = {prod, b};
  }
  return best;
}

Feasibility feasibility(std::span<const DirectionGrid> row) {
  std::vector<const DirectionGrid*> ptrs;
  ptrs.reserve(row.size());
  for (const auto& d : row) ptrs.push_back(&d);
  return feasibility(std::span<const DirectionGrid* const>(ptrs));
}

}  // namespace disasm
