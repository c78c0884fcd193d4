#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpi/data/dataset.hpp"
#include "cpi/data/perturb.hpp"
#include "cpi/data/property.hpp"
#include "cpi/nn/hessian.hpp"
#include "cpi/nn/mlp.hpp"
#include "cpi/nn/train.hpp"

namespace cpi::shadow {

using data::Index;

struct Provenance {
  enum class Kind { reference, approximated };
  Kind kind = Kind::reference;
  int source = -1;  // reference index (approximated only)
  data::PerturbationKind perturbation;
  Index budget = 0;
  std::uint64_t seed = 0;
  // Approximated only.
  Index changed_rows = 0;
  int ihvp_iterations = 0;
  double ihvp_residual = 0;
  bool ihvp_converged = true;
};

struct ShadowEntry {
  nn::Mlp params;
  data::TabularDataset train_data;  // empty when the pool was built without retaining data
  double property_value = 0;
  int property_class = 0;
  Provenance provenance;
  std::vector<Index> train_row_ids;  // reference entries: ids of the sampled rows
};

struct ShadowPool {
  std::vector<ShadowEntry> entries;
  int k_reference = 0;
  double build_seconds = 0;
  double reference_seconds = 0;
  double approximation_seconds = 0;

  int size() const { return int(entries.size()); }
  int approximated_count() const { return size() - k_reference; }
};

struct ShadowTrainConfig {
  std::vector<int> hidden{32, 16};
  nn::TrainConfig train;
  Index subset_size = 2000;
  // Sample each subset with a positive-category rate drawn uniformly from the
  // property's sampling range, instead of a plain uniform subset.
  bool controlled_rate = true;
  // Common initialisation for every shadow; unset draws one per shadow.
  std::optional<std::uint64_t> init_seed;

  void validate() const;
};

struct PoolConfig {
  int n_total = 500;
  int k_reference = 100;
  Index budget = 1000;
  int extra_columns = 2;  // m for the multi perturbation variants
  // Exactly (N-K)/K approximations per reference (remainder spread over the
  // first references) instead of uniform reference draws.
  bool balanced = true;
  nn::IhvpConfig ihvp;
  // Keep every entry's training data in the returned pool.
  bool retain_data = true;
  ShadowTrainConfig shadow;

  void validate() const;
};

// Layer sizes of a shadow/target model for an encoded dataset.
std::vector<int> architecture(const data::TabularDataset& encoded, const std::vector<int>& hidden);

// Trains K reference shadows on independent subsets of the encoded `aux`.
std::vector<ShadowEntry> train_reference_shadows(const data::TabularDataset& aux, int k,
                                                 const ShadowTrainConfig& cfg,
                                                 const data::PropertySpec& spec,
                                                 std::uint64_t seed);

struct InfluenceDelta {
  nn::Vector<double> delta;
  nn::IhvpResult<double> solve;
};

// -(1/n) (H + damping I)^-1 (sum grad l(z') - sum grad l(z)), with H the
// Hessian of the mean training loss (plus L2) of `params` on (x, y).
InfluenceDelta influence_delta(const nn::Mlp& params, const nn::Matrix<double>& x,
                               const nn::Labels& y, const nn::Matrix<double>& z_x,
                               const nn::Labels& z_y, const nn::Matrix<double>& zp_x,
                               const nn::Labels& zp_y, double l2_coeff,
                               const nn::IhvpConfig& ihvp);

// Perturbs the reference's training data and shifts its parameters by the
// influence delta evaluated at the reference parameters.
ShadowEntry approximate_shadow(const ShadowEntry& ref, int ref_index,
                               const data::PerturbationKind& kind, Index budget,
                               const nn::IhvpConfig& ihvp, double l2_coeff,
                               const data::PropertySpec& spec, std::uint64_t seed);

// K trained references followed by N-K approximated entries.
ShadowPool build_shadow_pool(const data::TabularDataset& aux, const PoolConfig& cfg,
                             const data::PropertySpec& spec, std::uint64_t seed);

// Pool directory: manifest.json plus models/<index>.model. Training data is
// recorded as row ids (references) and perturbation seeds (approximated
// entries); `load_pool` rebuilds it when given the source dataset.
void save_pool(const std::string& dir, const ShadowPool& pool, const nlohmann::json& extra = {});
ShadowPool load_pool(const std::string& dir, const data::TabularDataset* source = nullptr,
                     const data::PropertySpec* spec = nullptr);
nlohmann::json read_pool_manifest(const std::string& dir);

}  // namespace cpi::shadow
