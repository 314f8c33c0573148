#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "disasm/relation.hpp"

namespace disasm {

struct Part {
  std::size_t id = 0;
  std::string name;
  double value_penalty = 0;  // seconds-equivalent, charged when destroyed
  bool is_target = false;
};

// Full pairwise relation matrix. Identical grids may be shared between
// entries; sharing is invisible to callers.
class ProductState {
 public:
  ProductState(std::size_t n, const SphereGrid& grid);

  std::size_t size() const { return n_; }
  const SphereGrid& grid() const { return grid_; }
  const DirectionGrid& at(std::size_t i, std::size_t j) const { return *cells_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, DirectionGrid g);
  void set_shared(std::size_t i, std::size_t j, std::shared_ptr<const DirectionGrid> g);
  std::shared_ptr<const DirectionGrid> shared(std::size_t i, std::size_t j) const { return cells_[i * n_ + j]; }

  // Every relation of i is all ones.
  bool removed(std::size_t i) const;
  std::vector<std::size_t> removed_set() const;

  // Feasibility of translating part i away from all other parts.
  Feasibility part_feasibility(std::size_t i) const;

 private:
  std::size_t n_;
  SphereGrid grid_;
  std::shared_ptr<const DirectionGrid> ones_;
  std::vector<std::shared_ptr<const DirectionGrid>> cells_;
};

// Clears row and column i; other entries are untouched.
ProductState mark_removed(const ProductState& state, std::size_t i);

struct ToolMatrix {
  std::string tool;
  std::vector<bool> removable;  // per part
};

enum class EolKind { Stuck, Missing, Generic };

struct EolVariable {
  std::size_t id = 0;
  std::string name;
  EolKind kind = EolKind::Generic;
  std::optional<std::size_t> part;  // set for Stuck and Missing
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  EolOperator op = Stuck{};
  double prior = 0;
};

struct DestructiveSpec {
  std::size_t part = 0;
  std::vector<std::size_t> collateral;  // destroyed together with `part`
  std::map<std::size_t, DirectionGrid> replacements;  // psi_new(part, j); unlisted j become all ones
};

struct Product {
  std::string name;
  SphereGrid grid;
  std::vector<Part> parts;
  ProductState nominal;
  std::vector<ToolMatrix> tools;
  std::vector<EolVariable> variables;
  std::vector<DestructiveSpec> destructive;

  std::size_t size() const { return parts.size(); }
  std::vector<std::size_t> targets() const;
  std::size_t part_index(const std::string& name) const;
  std::optional<std::size_t> variable_index(const std::string& name) const;
  const DestructiveSpec* destructive_for(std::size_t part) const;
  // Name of the non-destructive tool that can remove `part`, if any.
  std::optional<std::string> tool_for(std::size_t part) const;

  // Copy with the listed priors replaced (keys are variable names).
  Product with_priors(const std::map<std::string, double>& overrides) const;
  Product with_priors(const std::vector<double>& priors) const;
};

Product product_from_json(const nlohmann::json& spec, const std::filesystem::path& base_dir = {});
Product load_product(const std::filesystem::path& path);
// Canonical, fully expanded form; loading it reproduces the product.
nlohmann::json save_product(const Product& product);

ProductState nominal_state(const Product& product);

// Applies the operators of true variables (ascending id) to the nominal state.
ProductState realize_state(const Product& product, const std::vector<bool>& assignment);

struct GroundTruth {
  std::uint64_t seed = 0;
  std::vector<bool> assignment;
  ProductState state;
};

GroundTruth realize_ground_truth(const Product& product, std::uint64_t seed);
GroundTruth ground_truth_from(const Product& product, std::vector<bool> assignment, std::uint64_t seed = 0);

}  // namespace disasm
