#include "cpi/data/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cpi/errors.hpp"

namespace cpi::data {

namespace {

std::vector<Index> draw_from(std::vector<Index> pool, Index k, std::mt19937_64& rng) {
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, Index(pool.size()) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::vector<Index> draw_positions(Index n, Index k, std::uint64_t seed) {
  if (k > n) throw ConfigError("cannot draw " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<Index> all(n);
  std::iota(all.begin(), all.end(), Index(0));
  std::mt19937_64 rng(seed);
  return draw_from(std::move(all), k, rng);
}

TabularDataset complement(const TabularDataset& ds, const std::vector<Index>& taken) {
  std::vector<bool> used(ds.rows(), false);
  for (Index r : taken) used.at(r) = true;
  std::vector<Index> rest;
  rest.reserve(ds.rows() - Index(taken.size()));
  for (Index r = 0; r < ds.rows(); ++r)
    if (!used[r]) rest.push_back(r);
  return ds.select_rows(rest);
}

std::pair<TabularDataset, TabularDataset> split_provider_adversary(const TabularDataset& ds,
                                                                   Index n_provider,
                                                                   std::uint64_t seed) {
  if (n_provider < 1 || n_provider >= ds.rows())
    throw ConfigError("provider size must be in [1, " + std::to_string(ds.rows() - 1) + "]");
  const auto taken = draw_positions(ds.rows(), n_provider, seed);
  return {ds.select_rows(taken), complement(ds, taken)};
}

TabularDataset sample_subset(const TabularDataset& ds, Index n, std::uint64_t seed) {
  if (n < 1 || n > ds.rows())
    throw ConfigError("subset size " + std::to_string(n) + " not in [1, " +
                      std::to_string(ds.rows()) + "]");
  return ds.select_rows(draw_positions(ds.rows(), n, seed));
}

TabularDataset sample_with_rate(const TabularDataset& ds, Index n, double rate,
                                const PropertySpec& spec, std::uint64_t seed) {
  if (!(rate >= 0 && rate <= 1)) throw ConfigError("rate must be in [0, 1]");
  if (n < 1 || n > ds.rows()) throw ConfigError("sample size out of range");
  const int c = ds.schema().index_of(spec.column);
  const int pos = positive_code(ds.schema(), spec);
  std::vector<Index> positives, negatives;
  for (Index r = 0; r < ds.rows(); ++r)
    (ds.code(r, c) == pos ? positives : negatives).push_back(r);
  const Index n_pos = Index(std::llround(rate * double(n)));
  const Index n_neg = n - n_pos;
  if (n_pos > Index(positives.size()) || n_neg > Index(negatives.size()))
    throw ConfigError("not enough rows to sample " + std::to_string(n) + " rows at rate " +
                      std::to_string(rate) + " (" + std::to_string(positives.size()) +
                      " positive rows available)");
  std::mt19937_64 rng(seed);
  auto a = draw_from(std::move(positives), n_pos, rng);
  auto b = draw_from(std::move(negatives), n_neg, rng);
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return ds.select_rows(a);
}

}  // namespace cpi::data
