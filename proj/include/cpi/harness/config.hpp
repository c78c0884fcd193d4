#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpi/attack/attack.hpp"
#include "cpi/data/property.hpp"
#include "cpi/data/synthetic.hpp"
#include "cpi/defense/arms_race.hpp"
#include "cpi/defense/baselines.hpp"
#include "cpi/shadow/pool.hpp"

namespace cpi::harness {

using data::Index;

enum class Method { none, dshare, ours_r, ours_a, noisy_label, dp_sgd, resample, adversarial_defense };

std::string to_string(Method m);
Method parse_method(const std::string& name);
bool uses_defender_pool(Method m);

struct DatasetConfig {
  std::string path;  // empty: synthetic data
  char delimiter = ';';
  data::Schema schema = data::bank_schema();
  data::SyntheticBankConfig synthetic;
};

struct SplitConfig {
  Index provider = 25000;
  Index target_allotment = 10000;  // the rest of the provider's data simulates attacks
  Index target_rows = 2500;        // sampled from the allotment, train + test
  double test_fraction = 0.2;

  // Sizes must nest: target_rows <= allotment < provider < dataset rows.
  void check(Index dataset_rows) const;
};

struct BaselineConfig {
  double flip_frac = 0.1;
  defense::DpConfig dp;
  double drop_frac = 0.2;
  double gamma = 0.4;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  data::PropertySpec property = data::bank_default_property();
  attack::InfoKind mode = attack::InfoKind::white_box;
  Index queries = 1000;
  int n_cases = 20;
  SplitConfig split;
  std::vector<int> target_hidden{32, 16};
  // Initialisation shared by the target and all shadows; unset draws one per model.
  std::optional<std::uint64_t> init_seed = 0x1417;
  nn::TrainConfig target_train;
  shadow::PoolConfig defender_pool;
  shadow::PoolConfig adversary_pool;
  attack::AttackTrainConfig attack;
  attack::KernelConfig kernel;
  defense::ArmsRaceConfig arms_race;
  BaselineConfig baselines;
  Method method = Method::dshare;
  // Evaluation attack: responsive (kernel-weighted toward each target) or static.
  bool responsive_evaluation = true;
  std::uint64_t seed = 1;
  int workers = 1;

  ExperimentConfig();
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep the defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Default worker count: the CPI_WORKERS environment variable, else 1.
int default_workers();

ExperimentConfig load_config(const std::string& path);

}  // namespace cpi::harness
