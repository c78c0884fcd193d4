#include "cpi/data/dataset.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "cpi/errors.hpp"

namespace cpi::data {

int Column::category_index(const std::string& value) const {
  for (std::size_t i = 0; i < vocabulary.size(); ++i)
    if (vocabulary[i] == value) return int(i);
  return -1;
}

void Schema::validate() const {
  if (columns.empty()) throw ConfigError("schema has no columns");
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (!seen.insert(c.name).second) throw ConfigError("duplicate column '" + c.name + "'");
    if (c.kind == ColumnKind::categorical && c.vocabulary.empty())
      throw ConfigError("categorical column '" + c.name + "' has an empty vocabulary");
  }
  const int li = index_of(label_column);
  if (columns[li].kind != ColumnKind::categorical || columns[li].vocabulary.size() < 2)
    throw ConfigError("label column '" + label_column + "' must be categorical with >= 2 classes");
  const int pi = index_of(property_column);
  if (pi == li) throw ConfigError("property column cannot be the label column");
}

int Schema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return int(i);
  throw ConfigError("unknown column '" + name + "'");
}

std::vector<int> Schema::attribute_indices() const {
  std::vector<int> out;
  const int li = label_index();
  for (int i = 0; i < int(columns.size()); ++i)
    if (i != li) out.push_back(i);
  return out;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json jc{{"name", c.name},
                      {"kind", c.kind == ColumnKind::categorical ? "categorical" : "numeric"}};
    if (c.kind == ColumnKind::categorical) jc["vocabulary"] = c.vocabulary;
    cols.push_back(std::move(jc));
  }
  return {{"columns", cols}, {"label_column", label_column}, {"property_column", property_column}};
}

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  try {
    for (const auto& jc : j.at("columns")) {
      Column c;
      c.name = jc.at("name").get<std::string>();
      const auto kind = jc.at("kind").get<std::string>();
      if (kind == "categorical") {
        c.kind = ColumnKind::categorical;
        c.vocabulary = jc.at("vocabulary").get<std::vector<std::string>>();
      } else if (kind == "numeric") {
        c.kind = ColumnKind::numeric;
      } else {
        throw ConfigError("column '" + c.name + "' has unknown kind '" + kind + "'");
      }
      s.columns.push_back(std::move(c));
    }
    s.label_column = j.at("label_column").get<std::string>();
    s.property_column = j.at("property_column").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

TabularDataset::TabularDataset(SchemaPtr schema, RowMatrix cells, std::vector<Index> row_ids)
    : schema_(std::move(schema)), cells_(std::move(cells)), row_ids_(std::move(row_ids)) {
  if (!schema_) throw ConfigError("dataset without schema");
  schema_->validate();
  if (cells_.cols() != Index(schema_->columns.size()))
    throw ShapeError("dataset has " + std::to_string(cells_.cols()) + " columns, schema has " +
                     std::to_string(schema_->columns.size()));
  if (row_ids_.empty()) {
    row_ids_.resize(cells_.rows());
    for (Index i = 0; i < cells_.rows(); ++i) row_ids_[i] = i;
  } else if (Index(row_ids_.size()) != cells_.rows()) {
    throw ShapeError("row id count does not match row count");
  }
  for (Index c = 0; c < cells_.cols(); ++c) {
    const Column& col = schema_->columns[c];
    for (Index r = 0; r < cells_.rows(); ++r) {
      const double v = cells_(r, c);
      if (col.kind == ColumnKind::categorical) {
        if (v != std::floor(v) || v < 0 || v >= double(col.vocabulary.size()))
          throw IngestError("row " + std::to_string(r) + ", column '" + col.name +
                                "': category code out of vocabulary",
                            long(r), col.name);
      } else if (!std::isfinite(v)) {
        throw IngestError("row " + std::to_string(r) + ", column '" + col.name +
                              "': non-finite numeric value",
                          long(r), col.name);
      }
    }
  }
}

std::string TabularDataset::text(Index r, Index c) const {
  const Column& col = schema_->columns[c];
  if (col.kind == ColumnKind::categorical) return col.vocabulary[code(r, c)];
  std::ostringstream os;
  os.precision(17);
  os << cells_(r, c);
  return os.str();
}

TabularDataset TabularDataset::select_rows(const std::vector<Index>& rows) const {
  TabularDataset out;
  out.schema_ = schema_;
  out.cells_ = cells_(rows, Eigen::all);
  out.row_ids_.reserve(rows.size());
  for (Index r : rows) out.row_ids_.push_back(row_ids_.at(r));
  if (encoded_) {
    auto e = std::make_shared<Encoded>();
    e->encoder = encoded_->encoder;
    e->features = encoded_->features(rows, Eigen::all);
    e->labels = encoded_->labels(rows);
    out.encoded_ = std::move(e);
  }
  return out;
}

TabularDataset TabularDataset::with_cells(RowMatrix cells) const {
  if (cells.rows() != cells_.rows() || cells.cols() != cells_.cols())
    throw ShapeError("replacement cells have a different shape");
  TabularDataset out(schema_, std::move(cells), row_ids_);
  if (encoded_) return encode(out, encoded_->encoder);
  return out;
}

const Encoded& TabularDataset::encoded() const {
  if (!encoded_) throw ConfigError("dataset has not been encoded");
  return *encoded_;
}

// ---------------------------------------------------------------------------

Encoder Encoder::fit(const TabularDataset& ds) {
  if (ds.rows() == 0) throw ConfigError("cannot fit an encoder on an empty dataset");
  Encoder e;
  e.schema = ds.schema_ptr();
  const auto& cols = ds.schema().columns;
  const int li = ds.schema().label_index();
  e.means.assign(cols.size(), 0.0);
  e.stds.assign(cols.size(), 1.0);
  e.zero_variance.assign(cols.size(), false);
  e.block_offset.assign(cols.size(), -1);
  Index at = 0;
  for (int c = 0; c < int(cols.size()); ++c) {
    if (c == li) continue;
    e.block_offset[c] = at;
    if (cols[c].kind == ColumnKind::categorical) {
      at += Index(cols[c].vocabulary.size());
      continue;
    }
    const auto col = ds.cells().col(c);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / double(col.size());
    e.means[c] = mean;
    if (var > 0) {
      e.stds[c] = std::sqrt(var);
    } else {
      e.zero_variance[c] = true;
      e.stds[c] = 1.0;
    }
    at += 1;
  }
  e.width = at;
  return e;
}

bool Encoder::has_zero_variance() const {
  for (bool z : zero_variance)
    if (z) return true;
  return false;
}

nn::Matrix<double> Encoder::features(const TabularDataset& ds) const {
  const auto& cols = schema->columns;
  if (ds.cols() != Index(cols.size())) throw ShapeError("dataset does not match encoder schema");
  nn::Matrix<double> X = nn::Matrix<double>::Zero(ds.rows(), width);
  for (int c = 0; c < int(cols.size()); ++c) {
    const Index off = block_offset[c];
    if (off < 0) continue;
    if (cols[c].kind == ColumnKind::categorical) {
      for (Index r = 0; r < ds.rows(); ++r) X(r, off + ds.code(r, c)) = 1.0;
    } else if (!zero_variance[c]) {
      X.col(off) = ((ds.cells().col(c).array() - means[c]) / stds[c]).matrix();
    }
  }
  return X;
}

nn::Labels Encoder::labels(const TabularDataset& ds) const {
  const int li = schema->label_index();
  nn::Labels y(ds.rows());
  for (Index r = 0; r < ds.rows(); ++r) y[r] = ds.code(r, li);
  return y;
}

std::vector<int> Encoder::decode_category(const nn::Matrix<double>& X, int column) const {
  const auto& col = schema->columns.at(column);
  if (col.kind != ColumnKind::categorical || block_offset[column] < 0)
    throw ConfigError("column '" + col.name + "' is not an encoded categorical attribute");
  std::vector<int> out(X.rows());
  const Index off = block_offset[column];
  const Index k = Index(col.vocabulary.size());
  for (Index r = 0; r < X.rows(); ++r) {
    Index best;
    X.row(r).segment(off, k).maxCoeff(&best);
    out[r] = int(best);
  }
  return out;
}

nlohmann::json Encoder::to_json() const {
  return {{"means", means}, {"stds", stds}, {"zero_variance", zero_variance}};
}

Encoder Encoder::from_json(const nlohmann::json& j, SchemaPtr schema) {
  // Rebuild layout from the schema, then overwrite the statistics.
  Encoder e;
  e.schema = std::move(schema);
  const auto& cols = e.schema->columns;
  const int li = e.schema->label_index();
  e.block_offset.assign(cols.size(), -1);
  Index at = 0;
  for (int c = 0; c < int(cols.size()); ++c) {
    if (c == li) continue;
    e.block_offset[c] = at;
    at += cols[c].kind == ColumnKind::categorical ? Index(cols[c].vocabulary.size()) : 1;
  }
  e.width = at;
  e.means = j.at("means").get<std::vector<double>>();
  e.stds = j.at("stds").get<std::vector<double>>();
  e.zero_variance = j.at("zero_variance").get<std::vector<bool>>();
  if (e.means.size() != cols.size() || e.stds.size() != cols.size() ||
      e.zero_variance.size() != cols.size())
    throw ConfigError("encoder statistics do not match schema");
  return e;
}

TabularDataset encode(const TabularDataset& ds) {
  return encode(ds, std::make_shared<const Encoder>(Encoder::fit(ds)));
}

TabularDataset encode(const TabularDataset& ds, std::shared_ptr<const Encoder> enc) {
  if (!enc) throw ConfigError("null encoder");
  TabularDataset out = ds;
  auto e = std::make_shared<Encoded>();
  e->features = enc->features(ds);
  e->labels = enc->labels(ds);
  e->encoder = std::move(enc);
  out.encoded_ = std::move(e);
  return out;
}

Index differing_cells(const TabularDataset& a, const TabularDataset& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("datasets differ in shape");
  return (a.cells().array() != b.cells().array()).count();
}

}  // namespace cpi::data
