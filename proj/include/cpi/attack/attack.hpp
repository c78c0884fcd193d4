#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "cpi/attack/info.hpp"
#include "cpi/nn/mlp.hpp"
#include "cpi/nn/train.hpp"
#include "cpi/shadow/pool.hpp"

namespace cpi::attack {

struct AttackDataset {
  nn::Matrix<double> features;  // one ModelInfo per row
  nn::Labels classes;
  nn::Vector<double> weights;   // empty = unweighted; otherwise mean 1
  int class_count = 2;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index info_length() const { return features.cols(); }
  bool weighted() const { return weights.size() != 0; }
};

AttackDataset build_attack_dataset(const shadow::ShadowPool& pool, const InfoMode& mode,
                                   int class_count);

// How distances between info vectors are measured for the kernel.
enum class DistanceScale {
  raw,           // |a - b|^2
  standardized,  // per-coordinate standardisation (attack-dataset statistics),
                 // squared distance divided by the vector length
};

struct KernelConfig {
  double sigma2 = 0.75;
  DistanceScale scale = DistanceScale::standardized;

  void validate() const;
};

// r_i = N exp(-d_i / 2 sigma2) / sum_j exp(-d_j / 2 sigma2), in log space.
nn::Vector<double> kernel_weights(const nn::Vector<double>& squared_distances, double sigma2);

nn::Vector<double> squared_distances(const AttackDataset& ds, const ModelInfo& target,
                                     DistanceScale scale);

AttackDataset estimate_weights(const AttackDataset& ds, const ModelInfo& target,
                               const KernelConfig& kernel);

// Effective sample size (sum w)^2 / sum w^2 of a weight vector.
double effective_sample_size(const nn::Vector<double>& w);

struct Standardizer {
  nn::RowVector<double> mean;
  nn::RowVector<double> scale;  // std, with 1 for constant coordinates

  static Standardizer fit(const nn::Matrix<double>& x);
  nn::Matrix<double> apply(const nn::Matrix<double>& x) const;
  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

struct AttackModel {
  Standardizer scaler;
  nn::Mlp net;
};

struct AttackTrainConfig {
  std::vector<int> hidden{32, 16, 8};
  nn::TrainConfig train;
  std::uint64_t init_seed = 0;

  void validate() const;
};

// Minimises the (weighted, if weights are set) mean cross-entropy of the
// attack network on standardised info vectors.
AttackModel train_attack(const AttackDataset& ds, const AttackTrainConfig& cfg);
// Warm-start training of an existing attack on `ds` (scaler kept).
AttackModel continue_training(AttackModel attack, const AttackDataset& ds, const nn::TrainConfig& cfg);

struct Inference {
  int cls = 0;
  nn::Vector<double> probabilities;
};

Inference infer_property(const AttackModel& attack, const ModelInfo& target);

// Gradient of the attack's cross-entropy against `cls` with respect to the raw
// (unstandardised) info vector.
ModelInfo attack_loss_gradient(const AttackModel& attack, const ModelInfo& target, int cls,
                               double* loss = nullptr);

// features.bin (u64 rows, u64 cols, f64 row-major) + manifest.json.
void save_attack_dataset(const std::string& dir, const AttackDataset& ds, const InfoMode& mode,
                         const KernelConfig* kernel = nullptr);
AttackDataset load_attack_dataset(const std::string& dir);

void save_attack_model(const std::string& path, const AttackModel& attack);
AttackModel load_attack_model(const std::string& path);

}  // namespace cpi::attack
