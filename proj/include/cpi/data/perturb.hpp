#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cpi/data/dataset.hpp"

namespace cpi::data {

enum class PerturbationType { shuffle_property, shuffle_multi, mutate_property, mutate_multi };

struct PerturbationKind {
  PerturbationType type = PerturbationType::shuffle_property;
  int m = 2;  // extra attribute columns for the multi variants

  bool is_multi() const {
    return type == PerturbationType::shuffle_multi || type == PerturbationType::mutate_multi;
  }
  bool is_shuffle() const {
    return type == PerturbationType::shuffle_property || type == PerturbationType::shuffle_multi;
  }
  std::string name() const;
  static PerturbationKind parse(const std::string& name, int m = 2);
};

// Uniform draw over the four operator types.
PerturbationKind random_kind(std::mt19937_64& rng, int m = 2);

struct PerturbResult {
  TabularDataset perturbed;
  std::vector<Index> changed_rows;  // positions whose record differs
  TabularDataset original_rows;     // Z: the changed rows before perturbation
  TabularDataset perturbed_rows;    // Z': the same rows after perturbation
  Index touched_cells = 0;          // cells selected by the operator (<= budget)
};

// Applies one perturbation operator under an L0 budget on cells.
//
// The property column, plus m other uniformly chosen attribute columns for
// the multi variants, each get an independent uniformly drawn row subset of
// size in [lo, budget / (1 + m_eff)] (lo = 2 for shuffles, 1 for mutations).
// Shuffles permute the selected cells within their column; mutations replace
// each selected categorical cell with a uniformly drawn different category
// and each numeric cell with the value of a uniformly drawn other row.
// If the input is encoded, the outputs are encoded with the same encoder.
PerturbResult perturb(const TabularDataset& ds, const PerturbationKind& kind, Index budget,
                      std::uint64_t seed);

}  // namespace cpi::data
