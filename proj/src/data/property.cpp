#include "cpi/data/property.hpp"

#include <cmath>

#include "cpi/errors.hpp"

namespace cpi::data {

void PropertySpec::validate() const {
  if (edges.size() < 3) throw ConfigError("property needs at least two bins");
  if (edges.front() != 0.0 || edges.back() != 1.0)
    throw ConfigError("property bins must cover [0, 1]");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ConfigError("property bin edges must increase strictly");
  if (!(sampling_range.first >= 0 && sampling_range.second <= 1 &&
        sampling_range.first <= sampling_range.second))
    throw ConfigError("property sampling range must be an interval inside [0, 1]");
  if (column.empty() || positive_category.empty())
    throw ConfigError("property needs a column and a positive category");
}

int PropertySpec::bin_of(double value) const {
  if (value < edges.front() || value > edges.back())
    throw ConfigError("property value outside [0, 1]");
  for (int b = 0; b + 1 < int(edges.size()) - 1; ++b)
    if (value < edges[b + 1]) return b;
  return class_count() - 1;
}

nlohmann::json PropertySpec::to_json() const {
  return {{"column", column},
          {"positive_category", positive_category},
          {"edges", edges},
          {"sampling_range", {sampling_range.first, sampling_range.second}}};
}

PropertySpec PropertySpec::from_json(const nlohmann::json& j) {
  PropertySpec p;
  try {
    p.column = j.at("column").get<std::string>();
    p.positive_category = j.at("positive_category").get<std::string>();
    if (j.contains("edges")) p.edges = j.at("edges").get<std::vector<double>>();
    if (j.contains("sampling_range")) {
      auto r = j.at("sampling_range").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("sampling_range needs two values");
      p.sampling_range = {r[0], r[1]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed property spec: ") + e.what());
  }
  p.validate();
  return p;
}

int positive_code(const Schema& schema, const PropertySpec& spec) {
  const Column& col = schema.columns[schema.index_of(spec.column)];
  if (col.kind != ColumnKind::categorical)
    throw ConfigError("property column '" + spec.column + "' must be categorical");
  const int code = col.category_index(spec.positive_category);
  if (code < 0)
    throw ConfigError("category '" + spec.positive_category + "' not in column '" + spec.column + "'");
  return code;
}

PropertyValue compute_property(const TabularDataset& ds, const PropertySpec& spec) {
  if (ds.rows() == 0) throw ConfigError("property of an empty dataset");
  const int c = ds.schema().index_of(spec.column);
  const int pos = positive_code(ds.schema(), spec);
  const Index hits = (ds.cells().col(c).array() == double(pos)).count();
  PropertyValue out;
  out.value = double(hits) / double(ds.rows());
  out.cls = spec.bin_of(out.value);
  return out;
}

}  // namespace cpi::data
