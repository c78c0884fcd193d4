#pragma once

// Hessian-vector products of the empirical cross-entropy loss and damped
// inverse-HVP solvers built on top of them.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cpi/errors.hpp"
#include "cpi/nn/mlp.hpp"

namespace cpi::nn {

enum class HvpMethod { finite_difference, exact };
enum class IhvpMethod { conjugate_gradient, stochastic_recursive };

struct IhvpConfig {
  IhvpMethod method = IhvpMethod::conjugate_gradient;
  double damping = 0.01;
  int max_iters = 50;
  double tolerance = 1e-4;
  // |B|: rows subsampled (without replacement) for Hessian estimation.
  int sample_count = 512;
  HvpMethod hvp = HvpMethod::finite_difference;
  // Stochastic-recursive only: Hessian scale (must exceed the top eigenvalue)
  // and mini-batch size per recursion step.
  double recursion_scale = 10.0;
  int recursion_batch = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(damping >= 0)) throw ConfigError("damping must be >= 0");
    if (!(tolerance > 0)) throw ConfigError("tolerance must be > 0");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (sample_count < 1) throw ConfigError("sample_count must be >= 1");
    if (!(recursion_scale > 0)) throw ConfigError("recursion_scale must be > 0");
    if (recursion_batch < 1) throw ConfigError("recursion_batch must be >= 1");
  }
};

template <typename Scalar>
struct IhvpResult {
  Vector<Scalar> x;
  int iterations = 0;
  double residual_norm = 0;  // relative to |v| for CG; step size for recursion
  bool converged = false;
};

// Central difference of exact gradients along v, with the stencil width scaled
// to the parameter magnitude and v normalised so the product is exactly
// homogeneous in v.
template <typename Scalar, typename Derived>
Vector<Scalar> hvp_finite_difference(const MlpParams<Scalar>& params,
                                     const Eigen::MatrixBase<Derived>& inputs,
                                     const Labels& labels,
                                     const Vector<Scalar>& v, double l2_coeff) {
  const Vector<Scalar> theta = params.flatten();
  const Scalar vnorm = v.norm();
  if (vnorm == Scalar(0)) return Vector<Scalar>::Zero(v.size());
  const Scalar eps = Scalar(1e-4) * (Scalar(1) + theta.cwiseAbs().maxCoeff());
  const Vector<Scalar> dir = v / vnorm;
  MlpParams<Scalar> shifted = params;
  shifted.assign(theta + eps * dir);
  // The L2 term is added analytically below.
  const Vector<Scalar> gp = loss_and_gradient(shifted, inputs, labels, 0.0).grad;
  shifted.assign(theta - eps * dir);
  const Vector<Scalar> gm = loss_and_gradient(shifted, inputs, labels, 0.0).grad;
  return vnorm * (gp - gm) / (Scalar(2) * eps) + Scalar(l2_coeff) * v;
}

// Forward-over-reverse (R-operator) product. ReLU second derivatives vanish
// almost everywhere, so the only curvature comes from the softmax and from the
// bilinear coupling between layers.
template <typename Scalar, typename Derived>
Vector<Scalar> hvp_exact(const MlpParams<Scalar>& params,
                         const Eigen::MatrixBase<Derived>& inputs, const Labels& labels,
                         const Vector<Scalar>& v, double l2_coeff) {
  const Eigen::Index n = inputs.rows();
  Vector<Scalar> out = Scalar(l2_coeff) * v;
  if (n == 0) return out;
  const auto dir = MlpParams<Scalar>::unflatten(params.layer_sizes, v);
  const auto fp = forward_pass(params, inputs);
  const std::size_t L = params.layer_count();
  const LayerOffsets off = layer_offsets(params.layer_sizes);

  // R-forward.
  std::vector<Matrix<Scalar>> r_pre(L), r_post(L);
  r_post[0] = Matrix<Scalar>::Zero(n, inputs.cols());
  for (std::size_t l = 0; l < L; ++l) {
    Matrix<Scalar> rz = r_post[l] * params.weights[l].transpose() +
                        fp.post[l] * dir.weights[l].transpose();
    rz.rowwise() += dir.biases[l].transpose();
    r_pre[l] = std::move(rz);
    if (l + 1 < L)
      r_post[l + 1] = (fp.pre[l].array() > Scalar(0)).select(r_pre[l], Scalar(0));
  }

  const Scalar inv_n = Scalar(1) / Scalar(n);
  Matrix<Scalar> delta = fp.probs;
  for (Eigen::Index i = 0; i < n; ++i) delta(i, labels[i]) -= Scalar(1);
  delta *= inv_n;
  Matrix<Scalar> r_delta(n, fp.probs.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar dot = fp.probs.row(i).dot(r_pre[L - 1].row(i));
    r_delta.row(i) = ((r_pre[L - 1].row(i).array() - dot) * fp.probs.row(i).array()).matrix();
  }
  r_delta *= inv_n;

  // R-backward.
  for (std::size_t l = L; l-- > 0;) {
    const auto& W = params.weights[l];
    Eigen::Map<RowMatrix<Scalar>> hW(out.data() + off.weight[l], W.rows(), W.cols());
    hW.noalias() += r_delta.transpose() * fp.post[l];
    hW.noalias() += delta.transpose() * r_post[l];
    out.segment(off.bias[l], W.rows()) += r_delta.colwise().sum().transpose();
    if (l == 0) break;
    const auto mask = (fp.pre[l - 1].array() > Scalar(0));
    Matrix<Scalar> up = r_delta * W + delta * dir.weights[l];
    r_delta = mask.select(up, Scalar(0));
    Matrix<Scalar> up_d = delta * W;
    delta = mask.select(up_d, Scalar(0));
  }
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> hvp(const MlpParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs,
                   const Labels& labels, const Vector<Scalar>& v, double l2_coeff,
                   HvpMethod method = HvpMethod::finite_difference) {
  if (v.size() != params.parameter_count())
    throw ShapeError("hvp direction has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(params.parameter_count()));
  check_labels(labels, inputs.rows(), params.output_width());
  return method == HvpMethod::exact
             ? hvp_exact(params, inputs, labels, v, l2_coeff)
             : hvp_finite_difference(params, inputs, labels, v, l2_coeff);
}

namespace detail {

inline std::vector<Eigen::Index> subsample_rows(Eigen::Index n, int count, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  if (count >= n) return idx;
  // Partial Fisher-Yates.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename Scalar>
void check_finite(const Vector<Scalar>& x, int iteration, const char* what) {
  if (!x.allFinite())
    throw NumericError(std::string("non-finite ") + what + " in inverse-HVP at iteration " +
                           std::to_string(iteration),
                       iteration);
}

}  // namespace detail

// Approximately solves (H + damping * I) x = v, with H the Hessian of the
// mean loss (plus L2) over a |B|-row subsample.
template <typename Scalar, typename Derived>
IhvpResult<Scalar> inverse_hvp(const MlpParams<Scalar>& params,
                               const Eigen::MatrixBase<Derived>& inputs,
                               const Labels& labels, const Vector<Scalar>& v,
                               double l2_coeff, const IhvpConfig& cfg) {
  cfg.validate();
  if (v.size() != params.parameter_count())
    throw ShapeError("inverse-HVP right-hand side has wrong length");
  check_labels(labels, inputs.rows(), params.output_width());

  std::mt19937_64 rng(cfg.seed);
  const auto rows = detail::subsample_rows(inputs.rows(), cfg.sample_count, rng);
  const Matrix<Scalar> xb = inputs(rows, Eigen::all);
  const Labels yb = labels(rows);

  IhvpResult<Scalar> res;
  res.x = Vector<Scalar>::Zero(v.size());
  const Scalar vnorm = v.norm();
  if (vnorm == Scalar(0)) {
    res.converged = true;
    return res;
  }

  auto apply = [&](const Vector<Scalar>& d, const Matrix<Scalar>& x, const Labels& y) {
    return Vector<Scalar>(hvp(params, x, y, d, l2_coeff, cfg.hvp) + Scalar(cfg.damping) * d);
  };

  if (cfg.method == IhvpMethod::conjugate_gradient) {
    Vector<Scalar> r = v;
    Vector<Scalar> p = r;
    Scalar rr = r.squaredNorm();
    for (int it = 1; it <= cfg.max_iters; ++it) {
      const Vector<Scalar> Ap = apply(p, xb, yb);
      detail::check_finite(Ap, it, "Hessian product");
      const Scalar curvature = p.dot(Ap);
      res.iterations = it;
      if (!(curvature > Scalar(0))) break;  // indefinite: keep the last iterate
      const Scalar alpha = rr / curvature;
      res.x += alpha * p;
      r -= alpha * Ap;
      detail::check_finite(res.x, it, "iterate");
      const Scalar rr_new = r.squaredNorm();
      if (std::sqrt(rr_new) <= Scalar(cfg.tolerance) * vnorm) {
        res.converged = true;
        break;
      }
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
    res.residual_norm = double(r.norm() / vnorm);
    return res;
  }

  // Stochastic recursion: x_{j+1} = v + (I - A_j / s) x_j, result x / s.
  const Scalar s = Scalar(cfg.recursion_scale);
  Vector<Scalar> x = v;
  const Eigen::Index nb = xb.rows();
  for (int it = 1; it <= cfg.max_iters; ++it) {
    auto pick = detail::subsample_rows(nb, cfg.recursion_batch, rng);
    const Matrix<Scalar> xm = xb(pick, Eigen::all);
    const Labels ym = yb(pick);
    Vector<Scalar> next = v + x - apply(x, xm, ym) / s;
    detail::check_finite(next, it, "iterate");
    const double step = double((next - x).norm() / std::max(next.norm(), Scalar(1e-300)));
    x = std::move(next);
    res.iterations = it;
    res.residual_norm = step;
    if (step <= cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.x = x / s;
  return res;
}

}  // namespace cpi::nn
