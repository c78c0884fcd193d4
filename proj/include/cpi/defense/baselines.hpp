#pragma once

#include <cstdint>

#include "cpi/attack/attack.hpp"
#include "cpi/data/dataset.hpp"
#include "cpi/data/property.hpp"
#include "cpi/defense/arms_race.hpp"
#include "cpi/nn/train.hpp"

namespace cpi::defense {

// Flips exactly round(flip_frac * n) labels, each to a uniformly drawn
// different class.
data::TabularDataset baseline_noisy_label(const data::TabularDataset& ds, double flip_frac,
                                          std::uint64_t seed);

struct DpConfig {
  double epsilon = 1.0;  // privacy budget
  double clip_norm = 1.0;

  void validate() const;
};

// Rescales g onto the clip_norm ball when it lies outside.
void clip_gradient(nn::Vector<double>& g, double clip_norm);

// Per-batch gradient hook: clip, then add Laplace noise with scale
// clip_norm / (epsilon * batch_size) to every coordinate.
nn::GradientTransform<double> dp_transform(const DpConfig& dp, int batch_size);

nn::Mlp baseline_dp_sgd(const nn::Mlp& params, const nn::Matrix<double>& x, const nn::Labels& y,
                        const DpConfig& dp, const nn::TrainConfig& cfg);

// Drops round(drop_frac * positives) uniformly chosen positive-category rows.
data::TabularDataset baseline_resample(const data::TabularDataset& ds, double drop_frac,
                                       const data::PropertySpec& spec, std::uint64_t seed);

struct AdversarialDefenseResult {
  nn::Mlp secure;
  attack::AttackModel attack;
  double seconds = 0;
};

// One-shot defense: an unweighted attack trained once on the shadows, then
// `cfg.max_iters` rounds of defense steps (trade-off gamma) against it with no
// attack refits.
AdversarialDefenseResult baseline_adversarial_defense(const nn::Mlp& target0,
                                                      const attack::AttackDataset& shadows,
                                                      const ProviderData& data,
                                                      const attack::InfoMode& mode, double gamma,
                                                      const ArmsRaceConfig& cfg);

}  // namespace cpi::defense
