#pragma once

// Tabular records, their schema and the one-hot/standardized encoding.
//
// Raw cells live in a row-major double matrix: numeric columns hold the value,
// categorical columns hold the index into the column vocabulary.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "cpi/nn/mlp.hpp"

namespace cpi::data {

using RowMatrix = nn::RowMatrix<double>;
using Index = Eigen::Index;

enum class ColumnKind { categorical, numeric };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> vocabulary;  // categorical only

  int category_index(const std::string& value) const;  // -1 if absent
};

struct Schema {
  std::vector<Column> columns;
  std::string label_column;
  std::string property_column;

  void validate() const;
  int index_of(const std::string& name) const;  // throws ConfigError
  int label_index() const { return index_of(label_column); }
  int property_index() const { return index_of(property_column); }
  // Every column except the label, in schema order.
  std::vector<int> attribute_indices() const;

  nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& j);
};

using SchemaPtr = std::shared_ptr<const Schema>;

class TabularDataset;

// Fixed mapping from raw records to network inputs. Categorical attributes
// become one-hot blocks (vocabulary order), numeric attributes are
// standardized with the stored statistics, attributes follow schema order and
// the label column maps to its vocabulary index.
struct Encoder {
  SchemaPtr schema;
  std::vector<double> means;  // per schema column, numeric only
  std::vector<double> stds;
  std::vector<bool> zero_variance;
  std::vector<Index> block_offset;  // per schema column, -1 for the label
  Index width = 0;

  static Encoder fit(const TabularDataset& ds);
  nn::Matrix<double> features(const TabularDataset& ds) const;
  nn::Labels labels(const TabularDataset& ds) const;
  bool has_zero_variance() const;
  // Inverse of a one-hot block: category index per row.
  std::vector<int> decode_category(const nn::Matrix<double>& features, int column) const;

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j, SchemaPtr schema);
};

struct Encoded {
  std::shared_ptr<const Encoder> encoder;
  nn::Matrix<double> features;
  nn::Labels labels;
};

class TabularDataset {
 public:
  TabularDataset() = default;
  // Validates every cell against the schema. `row_ids` default to 0..n-1.
  TabularDataset(SchemaPtr schema, RowMatrix cells, std::vector<Index> row_ids = {});

  const Schema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  Index rows() const { return cells_.rows(); }
  Index cols() const { return cells_.cols(); }
  const RowMatrix& cells() const { return cells_; }
  double cell(Index r, Index c) const { return cells_(r, c); }
  // Category code of a categorical cell.
  int code(Index r, Index c) const { return int(cells_(r, c)); }
  std::string text(Index r, Index c) const;
  // Stable identity of each row in the dataset it was originally loaded from.
  const std::vector<Index>& row_ids() const { return row_ids_; }

  TabularDataset select_rows(const std::vector<Index>& rows) const;
  // Same rows, different cells; keeps the encoder (re-encodes with it).
  TabularDataset with_cells(RowMatrix cells) const;

  bool is_encoded() const { return static_cast<bool>(encoded_); }
  const Encoded& encoded() const;
  const nn::Matrix<double>& features() const { return encoded().features; }
  const nn::Labels& labels() const { return encoded().labels; }
  const Encoder& encoder() const { return *encoded().encoder; }

  friend TabularDataset encode(const TabularDataset& ds);
  friend TabularDataset encode(const TabularDataset& ds, std::shared_ptr<const Encoder> enc);

 private:
  SchemaPtr schema_;
  RowMatrix cells_;
  std::vector<Index> row_ids_;
  std::shared_ptr<const Encoded> encoded_;
};

// Fits an encoder on `ds` and populates the encoded view.
TabularDataset encode(const TabularDataset& ds);
// Encodes with an existing encoder (same schema).
TabularDataset encode(const TabularDataset& ds, std::shared_ptr<const Encoder> enc);

// Number of cells that differ between two datasets of equal shape.
Index differing_cells(const TabularDataset& a, const TabularDataset& b);

}  // namespace cpi::data
