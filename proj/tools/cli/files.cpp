#include "files.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "cpi/data/csv.hpp"
#include "cpi/errors.hpp"

namespace cpi::cli {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

void write_json(const std::string& path, const nlohmann::json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) make_dirs(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << std::setprecision(17) << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

void save_dataset_dir(const std::string& dir, const data::TabularDataset& encoded, char delimiter) {
  make_dirs(dir);
  data::save_csv((fs::path(dir) / "data.csv").string(), encoded, delimiter);
  write_json((fs::path(dir) / "schema.json").string(),
             {{"schema", encoded.schema().to_json()}, {"delimiter", std::string(1, delimiter)}});
  write_json((fs::path(dir) / "encoder.json").string(), encoded.encoder().to_json());
}

data::TabularDataset load_dataset_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a dataset directory");
  const auto meta = read_json(fs::path(dir) / "schema.json");
  data::SchemaPtr schema;
  char delimiter = ';';
  try {
    schema = std::make_shared<const data::Schema>(data::Schema::from_json(meta.at("schema")));
    delimiter = meta.at("delimiter").get<std::string>().at(0);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed schema.json in '" + dir + "': " + e.what());
  }
  const auto raw = data::load_csv((fs::path(dir) / "data.csv").string(), schema, delimiter);
  auto enc = std::make_shared<const data::Encoder>(
      data::Encoder::from_json(read_json(fs::path(dir) / "encoder.json"), schema));
  return data::encode(raw, enc);
}

std::string snapshot_path(const std::string& output, bool is_dir) {
  return is_dir ? (fs::path(output) / "config.json").string() : output + ".config.json";
}

void write_snapshot(const std::string& path, const harness::ExperimentConfig& cfg,
                    const std::vector<std::string>& argv) {
  nlohmann::json j = cfg.to_json();
  j["command_line"] = argv;
  write_json(path, j);
}

}  // namespace cpi::cli
