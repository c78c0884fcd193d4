#pragma once

#include <cstdint>
#include <utility>

#include "cpi/data/dataset.hpp"
#include "cpi/data/property.hpp"

namespace cpi::data {

// Disjoint random partition into (provider, adversary) of sizes
// (n_provider, rows - n_provider).
std::pair<TabularDataset, TabularDataset> split_provider_adversary(const TabularDataset& ds,
                                                                   Index n_provider,
                                                                   std::uint64_t seed);

// n distinct rows drawn uniformly without replacement, kept in source order.
TabularDataset sample_subset(const TabularDataset& ds, Index n, std::uint64_t seed);

// n distinct rows whose positive-category rate is round(rate * n) / n.
// Used to give shadow and target training sets a spread of property values.
TabularDataset sample_with_rate(const TabularDataset& ds, Index n, double rate,
                                const PropertySpec& spec, std::uint64_t seed);

// Rows of `ds` not in `taken` (positions into ds).
TabularDataset complement(const TabularDataset& ds, const std::vector<Index>& taken);

// Positions of a uniformly drawn subset, sorted.
std::vector<Index> draw_positions(Index n, Index k, std::uint64_t seed);

}  // namespace cpi::data
