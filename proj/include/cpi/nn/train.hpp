#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "cpi/errors.hpp"
#include "cpi/nn/mlp.hpp"

namespace cpi::nn {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  double l2_coeff = 0.0;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(l2_coeff >= 0)) throw ConfigError("l2_coeff must be >= 0");
  }
};

template <typename Scalar>
struct TrainResult {
  MlpParams<Scalar> params;
  std::vector<Scalar> loss_history;  // mean mini-batch loss per epoch
};

// Hook applied to every mini-batch gradient before the update (clipping,
// noise). Receives the trainer's generator so runs stay seed-deterministic.
template <typename Scalar>
using GradientTransform = std::function<void(Vector<Scalar>&, std::mt19937_64&)>;

// Plain mini-batch SGD with a fixed step. The shuffle order is drawn from
// `cfg.seed`; the last batch of an epoch may be short. Optional per-sample
// weights scale each sample's loss (weighted mean over the batch).
template <typename Scalar, typename Derived>
TrainResult<Scalar> sgd_train(MlpParams<Scalar> params, const Eigen::MatrixBase<Derived>& inputs,
                              const Labels& labels, const TrainConfig& cfg,
                              const Vector<Scalar>& sample_weights = Vector<Scalar>(),
                              const GradientTransform<Scalar>& transform = {}) {
  cfg.validate();
  const Eigen::Index n = inputs.rows();
  if (n == 0) throw ConfigError("cannot train on an empty dataset");
  check_labels(labels, n, params.output_width());
  if (sample_weights.size() && sample_weights.size() != n)
    throw ShapeError("sample weight count does not match row count");

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  Vector<Scalar> theta = params.flatten();
  const Scalar lr = Scalar(cfg.learning_rate);

  TrainResult<Scalar> out;
  out.loss_history.reserve(cfg.epochs);
  std::vector<Eigen::Index> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Scalar epoch_loss = 0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(n, start + cfg.batch_size);
      batch.assign(order.begin() + start, order.begin() + stop);
      const Matrix<Scalar> xb = inputs(batch, Eigen::all);
      const Labels yb = labels(batch);
      LossGradient<Scalar> lg =
          sample_weights.size()
              ? loss_and_gradient(params, xb, yb, cfg.l2_coeff, Vector<Scalar>(sample_weights(batch)))
              : loss_and_gradient(params, xb, yb, cfg.l2_coeff);
      if (transform) transform(lg.grad, rng);
      theta -= lr * lg.grad;
      params.assign(theta);
      epoch_loss += lg.loss;
      ++batches;
    }
    out.loss_history.push_back(epoch_loss / Scalar(batches));
  }
  out.params = std::move(params);
  return out;
}

}  // namespace cpi::nn
