#include "cpi/data/perturb.hpp"

#include <algorithm>
#include <numeric>

#include "cpi/data/sampling.hpp"
#include "cpi/errors.hpp"

namespace cpi::data {

std::string PerturbationKind::name() const {
  switch (type) {
    case PerturbationType::shuffle_property: return "shuffle-property";
    case PerturbationType::shuffle_multi: return "shuffle-multi";
    case PerturbationType::mutate_property: return "mutate-property";
    case PerturbationType::mutate_multi: return "mutate-multi";
  }
  return "?";
}

PerturbationKind PerturbationKind::parse(const std::string& name, int m) {
  PerturbationKind k;
  k.m = m;
  if (name == "shuffle-property") k.type = PerturbationType::shuffle_property;
  else if (name == "shuffle-multi") k.type = PerturbationType::shuffle_multi;
  else if (name == "mutate-property") k.type = PerturbationType::mutate_property;
  else if (name == "mutate-multi") k.type = PerturbationType::mutate_multi;
  else throw ConfigError("unknown perturbation kind '" + name + "'");
  return k;
}

PerturbationKind random_kind(std::mt19937_64& rng, int m) {
  std::uniform_int_distribution<int> pick(0, 3);
  PerturbationKind k;
  k.type = PerturbationType(pick(rng));
  k.m = m;
  return k;
}

namespace {

std::vector<Index> pick_rows(Index n, Index k, std::mt19937_64& rng) {
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index(0));
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

PerturbResult perturb(const TabularDataset& ds, const PerturbationKind& kind, Index budget,
                      std::uint64_t seed) {
  if (budget < 1) throw ConfigError("perturbation budget must be >= 1");
  if (ds.rows() == 0) throw ConfigError("cannot perturb an empty dataset");
  const Schema& schema = ds.schema();
  const int prop = schema.property_index();
  if (schema.columns[prop].kind != ColumnKind::categorical)
    throw ConfigError("property column must be categorical");

  std::vector<int> others;
  for (int c : schema.attribute_indices())
    if (c != prop) others.push_back(c);
  const int attribute_count = int(others.size()) + 1;
  if (kind.is_multi() && (kind.m < 1 || kind.m >= attribute_count))
    throw ConfigError("multi perturbation needs 1 <= m < " + std::to_string(attribute_count));

  std::mt19937_64 rng(seed);
  std::vector<int> columns{prop};
  if (kind.is_multi()) {
    std::shuffle(others.begin(), others.end(), rng);
    columns.insert(columns.end(), others.begin(), others.begin() + kind.m);
  }

  const Index per_column = std::min<Index>(budget / Index(columns.size()), ds.rows());
  const Index lo = std::min<Index>(kind.is_shuffle() ? 2 : 1, per_column);

  RowMatrix cells = ds.cells();
  PerturbResult out;
  for (int c : columns) {
    if (per_column == 0) break;
    std::uniform_int_distribution<Index> size_dist(lo, per_column);
    const Index s = size_dist(rng);
    const auto rows = pick_rows(ds.rows(), s, rng);
    out.touched_cells += s;
    if (kind.is_shuffle()) {
      std::vector<double> vals;
      vals.reserve(rows.size());
      for (Index r : rows) vals.push_back(cells(r, c));
      std::shuffle(vals.begin(), vals.end(), rng);
      for (std::size_t i = 0; i < rows.size(); ++i) cells(rows[i], c) = vals[i];
      continue;
    }
    const Column& col = schema.columns[c];
    for (Index r : rows) {
      if (col.kind == ColumnKind::categorical) {
        const int k = int(col.vocabulary.size());
        if (k < 2) continue;
        std::uniform_int_distribution<int> alt(0, k - 2);
        int v = alt(rng);
        if (v >= int(cells(r, c))) ++v;
        cells(r, c) = double(v);
      } else {
        std::uniform_int_distribution<Index> donor(0, ds.rows() - 1);
        cells(r, c) = ds.cell(donor(rng), c);
      }
    }
  }

  for (Index r = 0; r < ds.rows(); ++r)
    if ((cells.row(r).array() != ds.cells().row(r).array()).any()) out.changed_rows.push_back(r);
  out.perturbed = ds.with_cells(std::move(cells));
  out.original_rows = ds.select_rows(out.changed_rows);
  out.perturbed_rows = out.perturbed.select_rows(out.changed_rows);
  return out;
}

}  // namespace cpi::data
