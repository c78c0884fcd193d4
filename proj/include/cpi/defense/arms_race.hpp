#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "cpi/attack/attack.hpp"
#include "cpi/attack/info.hpp"
#include "cpi/nn/mlp.hpp"
#include "cpi/shadow/pool.hpp"

namespace cpi::defense {

// Objective ascended for the property term. Both decrease the attack's
// probability of the true class along the same direction; `complement`
// (log(1 - p_true)) keeps a usable gradient while the attack is confidently
// right and fades once it is fooled, `cross_entropy` (-log p_true) does the
// opposite.
enum class PropertyLoss { complement, cross_entropy };

std::string to_string(PropertyLoss loss);
PropertyLoss parse_property_loss(const std::string& name);

struct ArmsRaceConfig {
  double lambda = 0.3;
  int max_iters = 50;
  double epsilon = 0;  // 0 selects 1e-3 * sqrt(p)
  int defense_steps = 20;
  double defense_lr = 0.01;
  // Step size lr / sqrt(t) in round t; constant otherwise.
  bool decay = true;
  int attack_epochs = 5;
  // Responsive (kernel-weighted) attack; false gives the static attack.
  bool responsive = true;
  PropertyLoss property_loss = PropertyLoss::cross_entropy;
  attack::KernelConfig kernel;
  attack::AttackTrainConfig attack;

  void validate() const;
  double epsilon_for(Eigen::Index parameter_count) const;
  nlohmann::json to_json() const;
  // Missing keys keep the values of `base`.
  static ArmsRaceConfig from_json(const nlohmann::json& j, const ArmsRaceConfig& base);
  static ArmsRaceConfig from_json(const nlohmann::json& j);
};

// The provider's private training set and its true property class.
struct ProviderData {
  const nn::Matrix<double>& x;
  const nn::Labels& y;
  int true_class;
};

struct StepResult {
  nn::Mlp params;
  double property_loss_before = 0;  // L_P
  double property_loss_after = 0;
  double task_loss_before = 0;      // L_T
  double task_loss_after = 0;
  int steps_taken = 0;
  bool aborted = false;  // non-finite objective; params are the last finite iterate
};

// Gradient of L_P - lambda * L_T with respect to the target parameters, where
// L_P is the frozen attack's cross-entropy against the true class. In
// white-box mode the gradient is routed through `order` (held fixed).
nn::Vector<double> defense_gradient(const nn::Mlp& target, const attack::AttackModel& attack,
                                    const ProviderData& data, const attack::InfoMode& mode,
                                    double lambda,
                                    const std::vector<std::vector<int>>* order = nullptr,
                                    double* property_loss = nullptr, double* task_loss = nullptr,
                                    PropertyLoss objective = PropertyLoss::complement);

// `steps` gradient-ascent updates on L_P - lambda * L_T against a frozen attack.
StepResult defense_step(const nn::Mlp& target, const attack::AttackModel& attack,
                        const ProviderData& data, const attack::InfoMode& mode, double lambda,
                        int steps, double lr, PropertyLoss objective = PropertyLoss::complement);

// Re-estimates weights against the current target info (when `responsive`)
// and continues training the attack for `cfg.epochs`.
attack::AttackModel attack_refine(attack::AttackModel attack, const attack::AttackDataset& ds,
                                  const attack::ModelInfo& target_info, bool responsive,
                                  const attack::KernelConfig& kernel, const nn::TrainConfig& cfg,
                                  double* attack_loss = nullptr);

struct TraceRecord {
  int iter = 0;
  double theta_change = 0;
  double property_loss = 0;
  double task_loss = 0;
  double attack_loss = 0;
  double seconds = 0;
};

struct ArmsRaceTrace {
  std::vector<TraceRecord> records;
  std::string terminated_by;  // "epsilon" or "max_iters"
  double epsilon = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct ArmsRaceResult {
  nn::Mlp secure;
  ArmsRaceTrace trace;
  attack::AttackModel attack;
  double seconds = 0;
};

ArmsRaceResult arms_race(const nn::Mlp& target0, const attack::AttackDataset& shadows,
                         const ProviderData& data, const attack::InfoMode& mode,
                         const ArmsRaceConfig& cfg);
ArmsRaceResult arms_race(const nn::Mlp& target0, const shadow::ShadowPool& pool,
                         const ProviderData& data, const data::PropertySpec& spec,
                         const attack::InfoMode& mode, const ArmsRaceConfig& cfg);

}  // namespace cpi::defense
