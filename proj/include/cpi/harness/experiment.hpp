#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cpi/attack/attack.hpp"
#include "cpi/data/dataset.hpp"
#include "cpi/data/property.hpp"
#include "cpi/harness/config.hpp"
#include "cpi/harness/report.hpp"

namespace cpi::harness {

// Loads (or generates) the dataset named by the config and encodes it once.
data::TabularDataset load_dataset(const DatasetConfig& cfg);

// Data of one case: the provider's simulation pool, the adversary's share and
// the target's train/test rows, all drawn from the case seed.
struct CaseSplit {
  std::uint64_t seed = 0;
  data::TabularDataset provider_sim, adversary, train, test;
  data::PropertyValue truth;
};
CaseSplit split_case(const ExperimentConfig& cfg, const data::TabularDataset& full, int case_id);

// Per-case state of the adversary that does not depend on the defense
// method: its shadow attack dataset (and static attack) for a case seed.
struct AdversaryArtifacts {
  attack::InfoMode mode;
  attack::AttackDataset shadows;
  double build_seconds = 0;
  std::shared_ptr<const attack::AttackModel> static_attack;
};

// Encoded dataset plus a cache of adversary artifacts, reused across runs
// and sweep points so comparisons stay paired.
class Session {
 public:
  explicit Session(data::TabularDataset encoded) : data_(std::move(encoded)) {}
  const data::TabularDataset& data() const { return data_; }

  std::shared_ptr<const AdversaryArtifacts> find(const std::string& key) const;
  void store(const std::string& key, std::shared_ptr<const AdversaryArtifacts> value);
  void clear_cache();

 private:
  data::TabularDataset data_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const AdversaryArtifacts>> cache_;
};

// Runs every method on the same cases (shared splits, target initialisation
// and defender pool), one report per method in the given order.
std::vector<Report> run_methods(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                                Session& session);
Report run_experiment(const ExperimentConfig& cfg, Session& session);
Report run_experiment(const ExperimentConfig& cfg);

// Parameters: lambda, K, delta, flip_frac, epsilon_privacy, drop_frac, gamma.
ExperimentConfig with_parameter(ExperimentConfig cfg, const std::string& parameter, double value);
std::vector<Report> sweep(const ExperimentConfig& cfg, const std::string& parameter,
                          const std::vector<double>& values, Session& session);

}  // namespace cpi::harness
