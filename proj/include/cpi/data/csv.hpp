#pragma once

#include <iosfwd>
#include <string>

#include "cpi/data/dataset.hpp"

namespace cpi::data {

// Reads a delimited file with a header row. Columns are matched to the schema
// by name (extra file columns are ignored); fields may be double-quoted.
// Errors are IngestError carrying the 1-based data row and the column name.
TabularDataset load_csv(const std::string& path, SchemaPtr schema, char delimiter = ';');
TabularDataset read_csv(std::istream& in, SchemaPtr schema, char delimiter = ';');

// Writes the raw records (category text, numeric values) in schema order.
void write_csv(std::ostream& out, const TabularDataset& ds, char delimiter = ';');
void save_csv(const std::string& path, const TabularDataset& ds, char delimiter = ';');

}  // namespace cpi::data
