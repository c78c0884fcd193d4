#include "doctest.h"

#include <sstream>

#include "cpi/nn/hessian.hpp"
#include "cpi/nn/io.hpp"
#include "cpi/nn/mlp.hpp"
#include "cpi/nn/train.hpp"

using namespace cpi::nn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Batch {
  MatrixXd x;
  Labels y;
};

Batch random_batch(int n, int d, int classes, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> c(0, classes - 1);
  Batch b{MatrixXd(n, d), Labels(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) b.x(i, j) = g(rng);
    b.y[i] = c(rng);
  }
  return b;
}

// Random weights and biases; nonzero biases keep ReLU units off their kink.
Mlp random_mlp(const std::vector<int>& sizes, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.7);
  VectorXd theta(parameter_count(sizes));
  for (auto& t : theta) t = g(rng);
  return Mlp::unflatten(sizes, theta);
}

// Loss evaluated only through forward + loss_xent, independent of backprop.
double objective(const Mlp& m, const VectorXd& theta, const Batch& b, double l2) {
  Mlp t = Mlp::unflatten(m.layer_sizes, theta);
  return loss_xent<double>(forward(t, b.x), b.y) + 0.5 * l2 * theta.squaredNorm();
}

VectorXd fd_gradient(const Mlp& m, const Batch& b, double l2) {
  const VectorXd theta = m.flatten();
  VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * (1 + std::abs(theta[i]));
    VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    g[i] = (objective(m, tp, b, l2) - objective(m, tm, b, l2)) / (2 * h);
  }
  return g;
}

MatrixXd dense_hessian(const Mlp& m, const Batch& b, double l2) {
  const VectorXd theta = m.flatten();
  const Eigen::Index p = theta.size();
  MatrixXd H(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double h = 1e-5;
    VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    H.col(i) = (backward(Mlp::unflatten(m.layer_sizes, tp), b.x, b.y, l2) -
                backward(Mlp::unflatten(m.layer_sizes, tm), b.x, b.y, l2)) /
               (2 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace

TEST_CASE("mlp_init is deterministic and validates widths") {
  const auto a = mlp_init({2, 1}, 7).flatten();
  const auto b = mlp_init({2, 1}, 7).flatten();
  CHECK(a == b);
  const int d = 51;
  CHECK(parameter_count({d, 32, 16, 2}) == 32 * d + 32 + 512 + 16 + 32 + 2);
  CHECK_THROWS_AS(mlp_init({1}, 0), cpi::ConfigError);
  CHECK_THROWS_AS(mlp_init({}, 0), cpi::ConfigError);
  CHECK_THROWS_AS(mlp_init({3, 0, 2}, 0), cpi::ConfigError);
  const auto m = mlp_init({4, 3, 2}, 1);
  CHECK(m.biases[0].isZero());
  CHECK(m.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 4));
}

TEST_CASE("flatten and unflatten round trip") {
  const std::vector<int> sizes{5, 4, 3};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  VectorXd v(parameter_count(sizes));
  for (auto& x : v) x = g(rng);
  CHECK(Mlp::unflatten(sizes, v).flatten() == v);
  CHECK_THROWS_AS(Mlp::unflatten(sizes, VectorXd::Zero(3)), cpi::ShapeError);
}

TEST_CASE("forward outputs are normalised and batch invariant") {
  auto zero = Mlp::zeros({3, 4, 2});
  const MatrixXd x = MatrixXd::Random(5, 3);
  const MatrixXd p0 = forward(zero, x);
  CHECK((p0.array() - 0.5).abs().maxCoeff() < 1e-15);

  const auto m = mlp_init({3, 8, 4}, 11);
  const MatrixXd p = forward(m, x * 10);
  CHECK(p.minCoeff() >= 0);
  CHECK(p.maxCoeff() <= 1);
  CHECK((p.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-9);
  const MatrixXd single = forward(m, MatrixXd(x.row(2) * 10));
  CHECK((single.row(0) - p.row(2)).cwiseAbs().maxCoeff() == 0);
  CHECK_THROWS_AS(forward(m, MatrixXd::Zero(2, 4)), cpi::ShapeError);
}

TEST_CASE("loss_xent examples") {
  MatrixXd p(1, 2);
  p << 1, 0;
  CHECK(loss_xent<double>(p, Labels::Constant(1, 0)) == doctest::Approx(0).epsilon(1e-12));
  p << 0.5, 0.5;
  CHECK(loss_xent<double>(p, Labels::Constant(1, 1)) == doctest::Approx(std::log(2.0)));
  MatrixXd q(2, 2);
  q << 0.8, 0.2, 0.3, 0.7;
  Labels y(2);
  y << 0, 0;
  CHECK(loss_xent<double>(q, y) == doctest::Approx((-std::log(0.8) - std::log(0.3)) / 2));
  CHECK(loss_xent<double>(p, Labels::Constant(1, 0)) > 0);
  MatrixXd zero(1, 2);
  zero << 0, 1;
  CHECK(loss_xent<double>(zero, Labels::Constant(1, 0)) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(loss_xent<double>(q, Labels::Constant(2, 2)), cpi::ShapeError);
}

TEST_CASE("backward matches central finite differences") {
  for (unsigned s = 0; s < 10; ++s) {
    const std::vector<int> sizes{4, 6, 5, 3};
    const auto m = random_mlp(sizes, 100 + s);
    const auto b = random_batch(7, 4, 3, s);
    const double l2 = 0.1 * s;
    const VectorXd g = backward(m, b.x, b.y, l2);
    const VectorXd fd = fd_gradient(m, b, l2);
    const double err = ((g - fd).array().abs() / (1e-6 + fd.array().abs().max(g.array().abs()))).maxCoeff();
    CHECK(err < 1e-4);
  }
}

TEST_CASE("backward chain-rule and L2 examples") {
  auto m = mlp_init({3, 4, 2}, 5);
  Batch b{MatrixXd::Zero(6, 3), Labels::Zero(6)};
  b.y[1] = 1;
  const VectorXd g = backward(m, b.x, b.y, 0.0);
  CHECK(g.head(12).isZero());
  const auto c = random_batch(6, 3, 2, 9);
  const VectorXd g0 = backward(m, c.x, c.y, 0.0);
  const VectorXd g1 = backward(m, c.x, c.y, 0.3);
  CHECK((g1 - g0 - 0.3 * m.flatten()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(backward(m, c.x, Labels::Zero(5), 0.0), cpi::ShapeError);
}

TEST_CASE("input gradient and output vjp match finite differences") {
  const auto m = mlp_init({3, 5, 2}, 8);
  const auto b = random_batch(4, 3, 2, 4);
  const MatrixXd gx = input_gradient(m, b.x, b.y);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      MatrixXd xp = b.x, xm = b.x;
      xp(i, j) += 1e-6;
      xm(i, j) -= 1e-6;
      const double fd = (loss_xent<double>(forward(m, xp), b.y) - loss_xent<double>(forward(m, xm), b.y)) / 2e-6;
      CHECK(gx(i, j) == doctest::Approx(fd).epsilon(1e-5));
    }
  const MatrixXd up = MatrixXd::Random(4, 2);
  const VectorXd g = output_vjp(m, b.x, up);
  const VectorXd theta = m.flatten();
  for (Eigen::Index k = 0; k < theta.size(); k += 3) {
    VectorXd tp = theta, tm = theta;
    tp[k] += 1e-6;
    tm[k] -= 1e-6;
    const double fp = (forward(Mlp::unflatten(m.layer_sizes, tp), b.x).array() * up.array()).sum();
    const double fm = (forward(Mlp::unflatten(m.layer_sizes, tm), b.x).array() * up.array()).sum();
    CHECK(g[k] == doctest::Approx((fp - fm) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("sgd_train descends, separates and is deterministic") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  MatrixXd x(200, 2);
  Labels y(200);
  for (int i = 0; i < 200; ++i) {
    y[i] = i % 2;
    x(i, 0) = g(rng) * 0.3 + (y[i] ? 2 : -2);
    x(i, 1) = g(rng);
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 20;
  cfg.seed = 4;
  const auto r1 = sgd_train(mlp_init({2, 8, 2}, 3), x, y, cfg);
  const auto r2 = sgd_train(mlp_init({2, 8, 2}, 3), x, y, cfg);
  CHECK(r1.loss_history.size() == 20);
  CHECK(r1.loss_history.back() < r1.loss_history.front());
  CHECK(accuracy(r1.params, x, y) == 1.0);
  CHECK(r1.params.flatten() == r2.params.flatten());
  CHECK_THROWS_AS(sgd_train(mlp_init({2, 2}, 0), MatrixXd(0, 2), Labels(0), cfg), cpi::ConfigError);
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), cpi::ConfigError);
}

TEST_CASE("hvp: exact vs finite difference, linearity and symmetry") {
  const auto m = mlp_init({4, 6, 3}, 21);
  const auto b = random_batch(9, 4, 3, 2);
  const Eigen::Index p = m.parameter_count();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  VectorXd v(p), w(p);
  for (auto& e : v) e = g(rng);
  for (auto& e : w) e = g(rng);
  const VectorXd hf = hvp(m, b.x, b.y, v, 0.2, HvpMethod::finite_difference);
  const VectorXd he = hvp(m, b.x, b.y, v, 0.2, HvpMethod::exact);
  CHECK((hf - he).norm() / he.norm() < 1e-4);
  CHECK(hvp(m, b.x, b.y, VectorXd(VectorXd::Zero(p)), 0.2).isZero());
  for (auto method : {HvpMethod::finite_difference, HvpMethod::exact}) {
    const VectorXd a = hvp(m, b.x, b.y, VectorXd(3.5 * v), 0.0, method);
    const VectorXd c = 3.5 * hvp(m, b.x, b.y, v, 0.0, method);
    CHECK((a - c).norm() <= 1e-9 * (1 + c.norm()));
  }
  const double vhw = v.dot(hvp(m, b.x, b.y, w, 0.0, HvpMethod::exact));
  const double whv = w.dot(hvp(m, b.x, b.y, v, 0.0, HvpMethod::exact));
  CHECK(std::abs(vhw - whv) < 1e-6);
  CHECK_THROWS_AS(hvp(m, b.x, b.y, VectorXd(VectorXd::Zero(3)), 0.0), cpi::ShapeError);

  // Linear-softmax model on one sample against an FD-of-gradients oracle.
  const auto lin = mlp_init({3, 2}, 9);
  const auto one = random_batch(1, 3, 2, 6);
  VectorXd u = VectorXd::Random(lin.parameter_count());
  const VectorXd theta = lin.flatten();
  const double e = 1e-5;
  const VectorXd fd = (backward(Mlp::unflatten(lin.layer_sizes, VectorXd(theta + e * u)), one.x, one.y, 0.0) -
                       backward(Mlp::unflatten(lin.layer_sizes, VectorXd(theta - e * u)), one.x, one.y, 0.0)) /
                      (2 * e);
  CHECK((hvp(lin, one.x, one.y, u, 0.0, HvpMethod::exact) - fd).norm() / fd.norm() < 1e-4);
}

TEST_CASE("inverse_hvp: L2-only objective, zero rhs and dense oracle") {
  const auto m = mlp_init({3, 4, 2}, 2);
  Batch empty{MatrixXd(0, 3), Labels(0)};
  VectorXd v = VectorXd::Random(m.parameter_count());
  IhvpConfig cfg;
  cfg.damping = 0.01;
  cfg.tolerance = 1e-12;
  const double c = 0.7;
  const auto r = inverse_hvp(m, empty.x, empty.y, v, c, cfg);
  CHECK((r.x - v / (c + cfg.damping)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(r.converged);
  const auto z = inverse_hvp(m, empty.x, empty.y, VectorXd(VectorXd::Zero(v.size())), c, cfg);
  CHECK(z.x.isZero());

  const auto lr = mlp_init({4, 2}, 13);
  const auto b = random_batch(50, 4, 2, 77);
  const double l2 = 0.05;
  cfg.max_iters = 200;
  cfg.sample_count = 50;
  cfg.tolerance = 1e-10;
  VectorXd rhs = VectorXd::Random(lr.parameter_count());
  const MatrixXd H = dense_hessian(lr, b, l2) +
                     cfg.damping * MatrixXd::Identity(rhs.size(), rhs.size());
  const VectorXd oracle = H.ldlt().solve(rhs);
  for (auto method : {HvpMethod::finite_difference, HvpMethod::exact}) {
    cfg.hvp = method;
    const auto sol = inverse_hvp(lr, b.x, b.y, rhs, l2, cfg);
    CHECK((sol.x - oracle).norm() / oracle.norm() < 1e-3);
  }
  cfg.method = IhvpMethod::stochastic_recursive;
  cfg.hvp = HvpMethod::exact;
  cfg.recursion_batch = 50;
  cfg.max_iters = 5000;
  cfg.recursion_scale = 2.0;
  const auto rec = inverse_hvp(lr, b.x, b.y, rhs, l2, cfg);
  CHECK((rec.x - oracle).norm() / oracle.norm() < 1e-3);

  cfg.damping = -1;
  CHECK_THROWS_AS(inverse_hvp(lr, b.x, b.y, rhs, l2, cfg), cpi::ConfigError);
}

TEST_CASE("inverse_hvp reports non-finite values with the iteration") {
  auto m = mlp_init({2, 2}, 1);
  const auto b = random_batch(4, 2, 2, 1);
  VectorXd v = VectorXd::Ones(m.parameter_count());
  IhvpConfig cfg;
  cfg.hvp = HvpMethod::exact;
  m.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    inverse_hvp(m, b.x, b.y, v, 0.0, cfg);
    FAIL("expected NumericError");
  } catch (const cpi::NumericError& e) {
    CHECK(e.iteration() == 1);
  }
}

TEST_CASE("model serialization round trips") {
  const auto m = mlp_init({5, 3, 2}, 4);
  std::stringstream ss;
  write_model(ss, m);
  const auto back = read_model(ss);
  CHECK(back.layer_sizes == m.layer_sizes);
  CHECK(back.flatten() == m.flatten());
  const auto j = model_to_json(m);
  CHECK(model_from_json(nlohmann::json::parse(j.dump())).flatten() == m.flatten());
  std::stringstream bad("NOTAMODEL");
  CHECK_THROWS_AS(read_model(bad), cpi::IoError);
}
