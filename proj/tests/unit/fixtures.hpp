#pragma once

#include <cmath>
#include <memory>
#include <random>

#include "cpi/data/dataset.hpp"
#include "cpi/data/property.hpp"

namespace cpi::testing {

inline data::SchemaPtr toy_schema() {
  data::Schema s;
  s.columns = {{"color", data::ColumnKind::categorical, {"red", "green", "blue"}},
               {"size", data::ColumnKind::numeric, {}},
               {"flag", data::ColumnKind::categorical, {"no", "yes"}},
               {"label", data::ColumnKind::categorical, {"a", "b"}}};
  s.label_column = "label";
  s.property_column = "flag";
  return std::make_shared<const data::Schema>(s);
}

inline data::PropertySpec toy_property() {
  data::PropertySpec p;
  p.column = "flag";
  p.positive_category = "yes";
  p.edges = {0.0, 0.3, 1.0};
  p.sampling_range = {0.1, 0.5};
  return p;
}

// Label depends on size, color and flag, so small MLPs learn it.
inline data::TabularDataset toy_data(data::Index n, double flag_rate, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> c3(0, 2);
  std::normal_distribution<double> g(0, 1);
  std::bernoulli_distribution f(flag_rate);
  std::uniform_real_distribution<double> u(0, 1);
  data::RowMatrix cells(n, 4);
  for (data::Index r = 0; r < n; ++r) {
    const int color = c3(rng);
    const double size = g(rng);
    const int flag = f(rng) ? 1 : 0;
    const double logit = 1.5 * size + (color == 2 ? 1.0 : -0.5) + (flag ? 1.5 : 0.0);
    cells.row(r) << color, size, flag, u(rng) < 1 / (1 + std::exp(-logit)) ? 1 : 0;
  }
  return data::encode(data::TabularDataset(toy_schema(), cells));
}

}  // namespace cpi::testing
