#pragma once

// Config resolution for the command line: defaults, then the --config file,
// then explicitly given flags.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

#include "cpi/harness/config.hpp"

namespace cpi::cli {

enum class FlagKind { integer, real, text, list, toggle };

struct FlagSpec {
  std::string name;     // without the leading dashes
  std::string pointer;  // JSON pointer into the experiment config
  FlagKind kind;
  std::string help;
};

// Every override flag the CLI knows; subcommands pick a subset by name.
const std::vector<FlagSpec>& flag_table();

class Overrides {
 public:
  // Registers --config and the named flags on `app`.
  void attach(CLI::App* app, const std::vector<std::string>& names);
  // Pool flags write into this section ("defender_pool" or "adversary_pool").
  void set_pool_section(const std::string& section) { pool_section_ = section; }
  harness::ExperimentConfig resolve() const;
  const std::string& config_path() const { return config_path_; }

 private:
  std::string config_path_;
  std::string pool_section_ = "defender_pool";
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> toggles_;
  std::map<std::string, CLI::Option*> options_;
};

// JSON value for a flag's text, typed by its kind.
nlohmann::json flag_value(const FlagSpec& spec, const std::string& text);

}  // namespace cpi::cli
