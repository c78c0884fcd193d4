#include "cpi/data/csv.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <vector>

#include "cpi/errors.hpp"

namespace cpi::data {

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string quote(const std::string& s, char delim) {
  if (s.find(delim) == std::string::npos && s.find('"') == std::string::npos &&
      s.find('\n') == std::string::npos)
    return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

TabularDataset read_csv(std::istream& in, SchemaPtr schema, char delimiter) {
  if (!schema) throw ConfigError("load_csv needs a schema");
  schema->validate();
  std::string line;
  if (!std::getline(in, line)) throw IngestError("missing header row", 0, "");
  const auto header = split_fields(line, delimiter);
  const int ncol = int(schema->columns.size());
  std::vector<int> source(ncol, -1);
  for (int c = 0; c < ncol; ++c) {
    for (std::size_t h = 0; h < header.size(); ++h)
      if (trim(header[h]) == schema->columns[c].name) source[c] = int(h);
    if (source[c] < 0)
      throw IngestError("missing column '" + schema->columns[c].name + "'", 0,
                        schema->columns[c].name);
  }

  std::vector<double> values;
  Index row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line == "\r") continue;
    ++row;
    const auto fields = split_fields(line, delimiter);
    for (int c = 0; c < ncol; ++c) {
      const Column& col = schema->columns[c];
      if (source[c] >= int(fields.size()))
        throw IngestError("row " + std::to_string(row) + ": missing value for column '" +
                              col.name + "'",
                          row, col.name);
      const std::string f = trim(fields[source[c]]);
      if (col.kind == ColumnKind::categorical) {
        const int code = col.category_index(f);
        if (code < 0)
          throw IngestError("row " + std::to_string(row) + ", column '" + col.name +
                                "': unknown category '" + f + "'",
                            row, col.name);
        values.push_back(double(code));
      } else {
        double v = 0;
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (f.empty() || ec != std::errc() || ptr != f.data() + f.size())
          throw IngestError("row " + std::to_string(row) + ", column '" + col.name +
                                "': unparsable number '" + f + "'",
                            row, col.name);
        values.push_back(v);
      }
    }
  }
  if (row == 0) throw IngestError("no data rows", 0, "");
  RowMatrix cells = Eigen::Map<RowMatrix>(values.data(), row, ncol);
  return TabularDataset(std::move(schema), std::move(cells));
}

TabularDataset load_csv(const std::string& path, SchemaPtr schema, char delimiter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_csv(in, std::move(schema), delimiter);
}

void write_csv(std::ostream& out, const TabularDataset& ds, char delimiter) {
  const Schema& s = ds.schema();
  for (std::size_t c = 0; c < s.columns.size(); ++c)
    out << (c ? std::string(1, delimiter) : "") << quote(s.columns[c].name, delimiter);
  out << '\n' << std::setprecision(17);
  for (Index r = 0; r < ds.rows(); ++r) {
    for (Index c = 0; c < ds.cols(); ++c) {
      if (c) out << delimiter;
      if (s.columns[c].kind == ColumnKind::categorical)
        out << quote(ds.text(r, c), delimiter);
      else
        out << ds.cell(r, c);
    }
    out << '\n';
  }
}

void save_csv(const std::string& path, const TabularDataset& ds, char delimiter) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(out, ds, delimiter);
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace cpi::data
