#pragma once

// Dense feed-forward network: ReLU hidden layers, softmax output.
//
// Samples are rows. Layer l maps width size[l] to size[l+1] through a weight
// matrix of shape (size[l+1] x size[l]) and a bias of length size[l+1].
// The flat parameter layout is, for every layer in order, the weight matrix
// in row-major order (one row per output neuron) followed by the bias.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cpi/errors.hpp"

namespace cpi::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Labels = Eigen::VectorXi;

inline constexpr double kProbabilityFloor = 1e-12;

inline Eigen::Index parameter_count(const std::vector<int>& layer_sizes) {
  Eigen::Index p = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    p += Eigen::Index(layer_sizes[l + 1]) * layer_sizes[l] + layer_sizes[l + 1];
  return p;
}

inline void validate_layer_sizes(const std::vector<int>& layer_sizes) {
  if (layer_sizes.size() < 2)
    throw ConfigError("network needs at least an input and an output layer");
  for (int w : layer_sizes)
    if (w < 1) throw ConfigError("layer widths must be >= 1");
}

template <typename Scalar>
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;

  std::size_t layer_count() const { return weights.size(); }
  int input_width() const { return layer_sizes.front(); }
  int output_width() const { return layer_sizes.back(); }
  Eigen::Index parameter_count() const { return nn::parameter_count(layer_sizes); }

  static MlpParams zeros(const std::vector<int>& sizes) {
    validate_layer_sizes(sizes);
    MlpParams m;
    m.layer_sizes = sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      m.weights.push_back(Matrix<Scalar>::Zero(sizes[l + 1], sizes[l]));
      m.biases.push_back(Vector<Scalar>::Zero(sizes[l + 1]));
    }
    return m;
  }

  Vector<Scalar> flatten() const {
    Vector<Scalar> flat(parameter_count());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto& W = weights[l];
      Eigen::Map<RowMatrix<Scalar>>(flat.data() + at, W.rows(), W.cols()) = W;
      at += W.size();
      flat.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
    return flat;
  }

  void assign(const Eigen::Ref<const Vector<Scalar>>& flat) {
    if (flat.size() != parameter_count())
      throw ShapeError("flat parameter vector has length " +
                       std::to_string(flat.size()) + ", expected " +
                       std::to_string(parameter_count()));
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      auto& W = weights[l];
      W = Eigen::Map<const RowMatrix<Scalar>>(flat.data() + at, W.rows(), W.cols());
      at += W.size();
      biases[l] = flat.segment(at, biases[l].size());
      at += biases[l].size();
    }
  }

  static MlpParams unflatten(const std::vector<int>& sizes,
                             const Eigen::Ref<const Vector<Scalar>>& flat) {
    MlpParams m = zeros(sizes);
    m.assign(flat);
    return m;
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> m;
    m.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      m.weights.push_back(weights[l].template cast<Other>());
      m.biases.push_back(biases[l].template cast<Other>());
    }
    return m;
  }
};

using Mlp = MlpParams<double>;

// Offsets of each layer's weight block and bias block in the flat layout.
struct LayerOffsets {
  std::vector<Eigen::Index> weight;
  std::vector<Eigen::Index> bias;
};

inline LayerOffsets layer_offsets(const std::vector<int>& sizes) {
  LayerOffsets o;
  Eigen::Index at = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    o.weight.push_back(at);
    at += Eigen::Index(sizes[l + 1]) * sizes[l];
    o.bias.push_back(at);
    at += sizes[l + 1];
  }
  return o;
}

// He-uniform weights, zero biases.
template <typename Scalar = double>
MlpParams<Scalar> mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  auto m = MlpParams<Scalar>::zeros(layer_sizes);
  std::mt19937_64 rng(seed);
  for (auto& W : m.weights) {
    const double bound = std::sqrt(6.0 / double(W.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    // Row-major fill so the draw order matches the flat layout.
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = Scalar(u(rng));
  }
  return m;
}

template <typename Scalar>
void softmax_rows(Matrix<Scalar>& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Scalar mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
}

// Stored forward pass. pre[l] is the pre-activation of layer l (the last one
// holds the logits), post[0] is the input and post[l+1] = relu(pre[l]) for
// hidden layers.
template <typename Scalar>
struct ForwardPass {
  std::vector<Matrix<Scalar>> pre;
  std::vector<Matrix<Scalar>> post;
  Matrix<Scalar> probs;
};

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward_pass(const MlpParams<Scalar>& params,
                                 const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.cols() != params.input_width())
    throw ShapeError("input width " + std::to_string(inputs.cols()) +
                     " does not match network input width " +
                     std::to_string(params.input_width()));
  ForwardPass<Scalar> fp;
  const std::size_t L = params.layer_count();
  fp.pre.resize(L);
  fp.post.resize(L);
  fp.post[0] = inputs;
  for (std::size_t l = 0; l < L; ++l) {
    Matrix<Scalar> z = fp.post[l] * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    fp.pre[l] = std::move(z);
    if (l + 1 < L) fp.post[l + 1] = fp.pre[l].cwiseMax(Scalar(0));
  }
  fp.probs = fp.pre[L - 1];
  softmax_rows(fp.probs);
  return fp;
}

template <typename Scalar, typename Derived>
Matrix<Scalar> forward(const MlpParams<Scalar>& params,
                       const Eigen::MatrixBase<Derived>& inputs) {
  return forward_pass(params, inputs).probs;
}

inline void check_labels(const Labels& labels, Eigen::Index rows, int classes) {
  if (labels.size() != rows)
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " does not match row count " + std::to_string(rows));
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= classes)
      throw ShapeError("label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " +
                       std::to_string(classes) + ")");
}

// Mean (optionally weighted) negative log-likelihood of the true class,
// probabilities clamped to [1e-12, 1].
template <typename Scalar>
Scalar loss_xent(const Matrix<Scalar>& probs, const Labels& labels,
                 const Vector<Scalar>& sample_weights = Vector<Scalar>()) {
  check_labels(labels, probs.rows(), int(probs.cols()));
  if (probs.rows() == 0) return Scalar(0);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const Scalar p = std::clamp(probs(i, labels[i]), Scalar(kProbabilityFloor), Scalar(1));
    const Scalar li = -std::log(p);
    total += sample_weights.size() ? sample_weights[i] * li : li;
  }
  return total / Scalar(probs.rows());
}

// Reverse pass from the gradient with respect to the logits. Writes the
// parameter gradient into `grad` (flat layout, overwritten) and, when
// `input_grad` is non-null, the gradient with respect to the inputs.
template <typename Scalar>
void backprop_logits(const MlpParams<Scalar>& params, const ForwardPass<Scalar>& fp,
                     Matrix<Scalar> delta, Vector<Scalar>& grad,
                     Matrix<Scalar>* input_grad = nullptr) {
  const std::size_t L = params.layer_count();
  const LayerOffsets off = layer_offsets(params.layer_sizes);
  grad.resize(params.parameter_count());
  for (std::size_t l = L; l-- > 0;) {
    const auto& W = params.weights[l];
    Eigen::Map<RowMatrix<Scalar>> gW(grad.data() + off.weight[l], W.rows(), W.cols());
    gW.noalias() = delta.transpose() * fp.post[l];
    grad.segment(off.bias[l], W.rows()) = delta.colwise().sum().transpose();
    if (l == 0) {
      if (input_grad) *input_grad = delta * W;
      break;
    }
    Matrix<Scalar> up = delta * W;
    delta = (fp.pre[l - 1].array() > Scalar(0)).select(up, Scalar(0));
  }
}

enum class Reduction { mean, sum };

template <typename Scalar>
struct LossGradient {
  Scalar loss = 0;
  Vector<Scalar> grad;
};

// Loss + exact gradient of
//   (1/n or 1) * sum_i w_i * xent_i  +  (l2/2) * |theta|^2.
// An empty batch contributes only the L2 term.
template <typename Scalar, typename Derived>
LossGradient<Scalar> loss_and_gradient(const MlpParams<Scalar>& params,
                                       const Eigen::MatrixBase<Derived>& inputs,
                                       const Labels& labels, double l2_coeff,
                                       const Vector<Scalar>& sample_weights = Vector<Scalar>(),
                                       Reduction reduction = Reduction::mean) {
  check_labels(labels, inputs.rows(), params.output_width());
  if (sample_weights.size() && sample_weights.size() != inputs.rows())
    throw ShapeError("sample weight count does not match row count");
  LossGradient<Scalar> out;
  if (inputs.rows() == 0) {
    const Vector<Scalar> theta = params.flatten();
    out.loss = Scalar(0.5 * l2_coeff) * theta.squaredNorm();
    out.grad = Scalar(l2_coeff) * theta;
    return out;
  }
  const auto fp = forward_pass(params, inputs);
  const Scalar scale = reduction == Reduction::mean ? Scalar(1) / Scalar(inputs.rows()) : Scalar(1);
  Matrix<Scalar> delta = fp.probs;
  Scalar total = 0;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const Scalar p = std::clamp(fp.probs(i, labels[i]), Scalar(kProbabilityFloor), Scalar(1));
    const Scalar wi = sample_weights.size() ? sample_weights[i] : Scalar(1);
    total += sample_weights.size() ? wi * -std::log(p) : -std::log(p);
    delta(i, labels[i]) -= Scalar(1);
    if (sample_weights.size()) delta.row(i) *= wi;
  }
  delta *= scale;
  backprop_logits(params, fp, std::move(delta), out.grad);
  out.loss = total * scale;
  if (l2_coeff != 0) {
    const Vector<Scalar> theta = params.flatten();
    out.loss += Scalar(0.5 * l2_coeff) * theta.squaredNorm();
    out.grad += Scalar(l2_coeff) * theta;
  }
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> backward(const MlpParams<Scalar>& params,
                        const Eigen::MatrixBase<Derived>& inputs, const Labels& labels,
                        double l2_coeff) {
  return loss_and_gradient(params, inputs, labels, l2_coeff).grad;
}

// Gradient of the mean cross-entropy with respect to the inputs (one row per
// sample).
template <typename Scalar, typename Derived>
Matrix<Scalar> input_gradient(const MlpParams<Scalar>& params,
                              const Eigen::MatrixBase<Derived>& inputs,
                              const Labels& labels) {
  check_labels(labels, inputs.rows(), params.output_width());
  const auto fp = forward_pass(params, inputs);
  Matrix<Scalar> delta = fp.probs;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) delta(i, labels[i]) -= Scalar(1);
  delta /= Scalar(inputs.rows());
  Vector<Scalar> unused;
  Matrix<Scalar> gx;
  backprop_logits(params, fp, std::move(delta), unused, &gx);
  return gx;
}

// Vector-Jacobian product of the output probabilities: the parameter gradient
// of sum_ij upstream(i,j) * probs(i,j).
template <typename Scalar, typename Derived>
Vector<Scalar> output_vjp(const MlpParams<Scalar>& params,
                          const Eigen::MatrixBase<Derived>& inputs,
                          const Matrix<Scalar>& upstream) {
  const auto fp = forward_pass(params, inputs);
  if (upstream.rows() != fp.probs.rows() || upstream.cols() != fp.probs.cols())
    throw ShapeError("upstream gradient shape does not match network outputs");
  Matrix<Scalar> delta(fp.probs.rows(), fp.probs.cols());
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const Scalar dot = upstream.row(i).dot(fp.probs.row(i));
    delta.row(i) = ((upstream.row(i).array() - dot) * fp.probs.row(i).array()).matrix();
  }
  Vector<Scalar> grad;
  backprop_logits(params, fp, std::move(delta), grad);
  return grad;
}

// Row-wise argmax, ties to the lowest index.
template <typename Scalar>
Labels argmax_rows(const Matrix<Scalar>& probs) {
  Labels out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[i] = int(best);
  }
  return out;
}

template <typename Scalar, typename Derived>
double accuracy(const MlpParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs,
                const Labels& labels) {
  if (inputs.rows() == 0) throw ConfigError("accuracy of an empty set");
  const Labels pred = argmax_rows(forward(params, inputs));
  return double((pred.array() == labels.array()).count()) / double(labels.size());
}

}  // namespace cpi::nn
