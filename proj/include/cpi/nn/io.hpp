#pragma once

// Model persistence. The binary format is
//   "CPIMLP01" | u32 layer count | u32 widths... | f64 flat parameters
// with all integers and floats little-endian.

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>

#include "cpi/nn/mlp.hpp"

namespace cpi::nn {

void write_model(std::ostream& out, const Mlp& model);
Mlp read_model(std::istream& in);
void save_model(const std::string& path, const Mlp& model);
Mlp load_model(const std::string& path);

// Human-readable export: layer sizes, then per-layer weights (rows = output
// neurons) and biases.
nlohmann::json model_to_json(const Mlp& model);
Mlp model_from_json(const nlohmann::json& j);

}  // namespace cpi::nn
