#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "cpi/data/dataset.hpp"
#include "cpi/harness/config.hpp"

namespace cpi::cli {

// A dataset directory holds data.csv, schema.json and encoder.json so every
// split of an ingested table shares one feature encoding.
void save_dataset_dir(const std::string& dir, const data::TabularDataset& encoded, char delimiter);
data::TabularDataset load_dataset_dir(const std::string& dir);

// Effective config plus the command line, written next to a command's output.
// It loads as a regular config file.
void write_snapshot(const std::string& path, const harness::ExperimentConfig& cfg,
                    const std::vector<std::string>& argv);

// `<output>.config.json` for file outputs, `<dir>/config.json` for directories.
std::string snapshot_path(const std::string& output, bool is_dir);

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace cpi::cli
