#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "cpi/data/dataset.hpp"

namespace cpi::data {

// A confidential property: the rate of one category in one categorical
// column, binned into classes by right-open intervals (last one closed at 1).
struct PropertySpec {
  std::string column;
  std::string positive_category;
  std::vector<double> edges{0.0, 0.05, 1.0};  // bins [e0,e1), [e1,e2), ..., [e_{k-1}, e_k]
  // Range from which property-controlled samples draw their target rate.
  std::pair<double, double> sampling_range{0.0, 0.10};

  int class_count() const { return int(edges.size()) - 1; }
  int bin_of(double value) const;
  void validate() const;

  nlohmann::json to_json() const;
  static PropertySpec from_json(const nlohmann::json& j);
};

struct PropertyValue {
  double value = 0;
  int cls = 0;
};

PropertyValue compute_property(const TabularDataset& ds, const PropertySpec& spec);

// Category code of the positive category (throws when the column is not
// categorical or the category is unknown).
int positive_code(const Schema& schema, const PropertySpec& spec);

}  // namespace cpi::data
