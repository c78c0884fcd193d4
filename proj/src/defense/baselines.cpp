#include "cpi/defense/baselines.hpp"

#include <cmath>
#include <random>

#include "cpi/data/sampling.hpp"
#include "cpi/errors.hpp"
#include "cpi/util/seed.hpp"

namespace cpi::defense {

data::TabularDataset baseline_noisy_label(const data::TabularDataset& ds, double flip_frac,
                                          std::uint64_t seed) {
  if (!(flip_frac > 0 && flip_frac < 1)) throw ConfigError("flip_frac must be in (0, 1)");
  const int label = ds.schema().label_index();
  const int classes = int(ds.schema().columns[label].vocabulary.size());
  const auto n_flip = data::Index(std::llround(flip_frac * double(ds.rows())));
  const auto rows = data::draw_positions(ds.rows(), n_flip, derive_seed(seed, 1));
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::uniform_int_distribution<int> other(0, classes - 2);
  data::RowMatrix cells = ds.cells();
  for (auto r : rows) {
    int v = other(rng);
    if (v >= int(cells(r, label))) ++v;
    cells(r, label) = v;
  }
  return ds.with_cells(std::move(cells));
}

void DpConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("privacy budget epsilon must be > 0");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be > 0");
}

void clip_gradient(nn::Vector<double>& g, double clip_norm) {
  const double n = g.norm();
  if (n > clip_norm) g *= clip_norm / n;
}

nn::GradientTransform<double> dp_transform(const DpConfig& dp, int batch_size) {
  dp.validate();
  const double scale = dp.clip_norm / (dp.epsilon * double(batch_size));
  return [clip = dp.clip_norm, scale](nn::Vector<double>& g, std::mt19937_64& rng) {
    clip_gradient(g, clip);
    // Laplace(0, b) as the difference of two exponentials with mean b.
    std::exponential_distribution<double> e(1.0 / scale);
    for (auto& x : g) x += e(rng) - e(rng);
  };
}

nn::Mlp baseline_dp_sgd(const nn::Mlp& params, const nn::Matrix<double>& x, const nn::Labels& y,
                        const DpConfig& dp, const nn::TrainConfig& cfg) {
  return nn::sgd_train(params, x, y, cfg, nn::Vector<double>(), dp_transform(dp, cfg.batch_size)).params;
}

data::TabularDataset baseline_resample(const data::TabularDataset& ds, double drop_frac,
                                       const data::PropertySpec& spec, std::uint64_t seed) {
  if (!(drop_frac > 0 && drop_frac < 1)) throw ConfigError("drop_frac must be in (0, 1)");
  const int c = ds.schema().index_of(spec.column);
  const int pos = data::positive_code(ds.schema(), spec);
  std::vector<data::Index> positives;
  for (data::Index r = 0; r < ds.rows(); ++r)
    if (ds.code(r, c) == pos) positives.push_back(r);
  if (positives.empty()) throw ConfigError("resampling needs rows with the positive category");
  const auto n_drop = data::Index(std::llround(drop_frac * double(positives.size())));
  std::vector<bool> drop(ds.rows(), false);
  for (auto i : data::draw_positions(data::Index(positives.size()), n_drop, seed)) drop[positives[i]] = true;
  std::vector<data::Index> keep;
  for (data::Index r = 0; r < ds.rows(); ++r)
    if (!drop[r]) keep.push_back(r);
  return ds.select_rows(keep);
}

AdversarialDefenseResult baseline_adversarial_defense(const nn::Mlp& target0,
                                                      const attack::AttackDataset& shadows,
                                                      const ProviderData& data,
                                                      const attack::InfoMode& mode, double gamma,
                                                      const ArmsRaceConfig& cfg) {
  cfg.validate();
  if (!(gamma >= 0)) throw ConfigError("gamma must be >= 0");
  const Stopwatch watch;
  attack::AttackDataset plain = shadows;
  plain.weights.resize(0);
  AdversarialDefenseResult out;
  out.attack = attack::train_attack(plain, cfg.attack);
  nn::Mlp theta = target0;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    const double lr = cfg.decay ? cfg.defense_lr / std::sqrt(double(t)) : cfg.defense_lr;
    auto step = defense_step(theta, out.attack, data, mode, gamma, cfg.defense_steps, lr, cfg.property_loss);
    const double change = (step.params.flatten() - theta.flatten()).norm();
    theta = std::move(step.params);
    if (change < cfg.epsilon_for(theta.parameter_count())) break;
  }
  out.secure = std::move(theta);
  out.seconds = watch.seconds();
  return out;
}

}  // namespace cpi::defense
