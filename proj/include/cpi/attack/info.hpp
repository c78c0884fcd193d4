#pragma once

// Adversary-visible model information: canonicalised parameters (white-box)
// or concatenated output probabilities on a fixed query set (black-box).

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "cpi/nn/mlp.hpp"

namespace cpi::attack {

using ModelInfo = nn::Vector<double>;

enum class InfoKind { white_box, black_box };

std::string to_string(InfoKind kind);
InfoKind parse_info_kind(const std::string& name);

struct InfoMode {
  InfoKind kind = InfoKind::white_box;
  nn::Matrix<double> query_set;  // black-box only, one encoded row per query

  static InfoMode white_box() { return {}; }
  static InfoMode black_box(nn::Matrix<double> queries);
  void validate() const;
  // Length of the info vector for a given architecture.
  Eigen::Index info_length(const std::vector<int>& layer_sizes) const;
  // FNV-1a over the query matrix bytes (0 for white-box).
  std::uint64_t query_hash() const;
};

// Per hidden layer: neuron order by descending sum of incoming weights
// (stable, so ties keep their index order).
std::vector<std::vector<int>> canonical_order(const nn::Mlp& model);

// Reorders hidden neurons, permuting the outgoing weights consistently.
nn::Mlp permute_hidden(const nn::Mlp& model, const std::vector<std::vector<int>>& order);

// Position map of the permutation in flat-parameter space:
// info[i] = theta[map[i]].
std::vector<Eigen::Index> flat_permutation(const std::vector<int>& layer_sizes,
                                           const std::vector<std::vector<int>>& order);

ModelInfo extract_info_whitebox(const nn::Mlp& model);
ModelInfo extract_info_blackbox(const nn::Mlp& model, const nn::Matrix<double>& query_set);
ModelInfo extract_info(const nn::Mlp& model, const InfoMode& mode);

}  // namespace cpi::attack
