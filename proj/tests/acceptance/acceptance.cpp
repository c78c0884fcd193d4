#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cpi/attack/attack.hpp"
#include "cpi/harness/experiment.hpp"
#include "cpi/nn/hessian.hpp"
#include "cpi/nn/mlp.hpp"
#include "cpi/shadow/pool.hpp"

using namespace cpi;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Tolerances.
constexpr double kGradRelErr = 1e-4;
constexpr double kHvpSymmetry = 1e-6;
constexpr double kIhvpAbs = 1e-6;
constexpr double kWeightMean = 1e-9;
constexpr double kHandExample = 1e-3;
constexpr double kFidelityCosine = 0.9;
constexpr double kFidelityRelErr = 0.5;
constexpr double kFidelityPassFraction = 0.9;
constexpr double kFidelitySeconds = 120;
constexpr double kSpeedup = 2.0;
constexpr double kUndefendedMin = 0.65;
constexpr double kDefendedLow = 0.45;
constexpr double kDefendedHigh = 0.65;
constexpr double kAccuracyDrop = 0.02;
constexpr double kAblationSlack = 0.05;
constexpr double kEpsilonTermination = 0.8;
constexpr int kMaxRounds = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

VectorXd gaussian(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0, sd);
  VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// 1. Gradient, HVP and inverse-HVP kernels.

double objective(const nn::Mlp& m, const VectorXd& theta, const MatrixXd& x, const nn::Labels& y, double l2) {
  const auto t = nn::Mlp::unflatten(m.layer_sizes, theta);
  return nn::loss_xent<double>(nn::forward(t, x), y) + 0.5 * l2 * theta.squaredNorm();
}

Outcome criterion_kernels() {
  std::mt19937_64 rng(101);
  double worst_grad = 0, worst_sym = 0, worst_ihvp = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> width(2, 6);
    std::vector<int> sizes{width(rng), width(rng), width(rng), 2 + trial % 3};
    const auto m = nn::Mlp::unflatten(sizes, gaussian(nn::parameter_count(sizes), rng, 0.7));
    const int n = 8;
    const MatrixXd x = Eigen::Map<const MatrixXd>(gaussian(n * sizes[0], rng).data(), n, sizes[0]);
    nn::Labels y(n);
    for (int i = 0; i < n; ++i) y[i] = int(rng() % unsigned(sizes.back()));
    const double l2 = 0.05 * (trial % 4);

    const VectorXd theta = m.flatten();
    const VectorXd g = nn::backward(m, x, y, l2);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double h = 1e-6 * (1 + std::abs(theta[i]));
      VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (objective(m, tp, x, y, l2) - objective(m, tm, x, y, l2)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(g[i] - fd) / (1e-6 + std::max(std::abs(fd), std::abs(g[i]))));
    }

    const VectorXd v = gaussian(theta.size(), rng), w = gaussian(theta.size(), rng);
    for (auto method : {nn::HvpMethod::finite_difference, nn::HvpMethod::exact}) {
      const double vhw = v.dot(nn::hvp(m, x, y, w, l2, method));
      const double whv = w.dot(nn::hvp(m, x, y, v, l2, method));
      worst_sym = std::max(worst_sym, std::abs(vhw - whv));
    }

    nn::IhvpConfig ic;
    ic.damping = 0.01 * (1 + trial % 3);
    ic.tolerance = 1e-12;
    const double c = 0.1 + 0.2 * (trial % 5);
    const auto r = nn::inverse_hvp(m, MatrixXd(0, sizes[0]), nn::Labels(0), v, c, ic);
    worst_ihvp = std::max(worst_ihvp, (r.x - v / (c + ic.damping)).cwiseAbs().maxCoeff());
  }
  return {worst_grad < kGradRelErr && worst_sym < kHvpSymmetry && worst_ihvp < kIhvpAbs,
          "max grad rel err " + fmt(worst_grad) + " (< " + fmt(kGradRelErr) + "), max |v'Hw - w'Hv| " +
              fmt(worst_sym) + " (< " + fmt(kHvpSymmetry) + "), max inverse-HVP err " + fmt(worst_ihvp) + " (< " +
              fmt(kIhvpAbs) + ")"};
}

// 2. Kernel importance weights.

Outcome criterion_weights() {
  std::mt19937_64 rng(202);
  double worst_mean = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 5 + int(rng() % 60), d = 2 + int(rng() % 10);
    attack::AttackDataset ds;
    ds.features = Eigen::Map<const MatrixXd>(gaussian(Eigen::Index(n) * d, rng).data(), n, d);
    ds.classes = nn::Labels::Zero(n);
    const auto scale = trial % 2 ? attack::DistanceScale::raw : attack::DistanceScale::standardized;
    const double sigma2 = 0.1 + 2.0 * double(rng() % 100) / 100;
    const auto w = attack::estimate_weights(ds, gaussian(d, rng, 0.5), {sigma2, scale});
    worst_mean = std::max(worst_mean, std::abs(w.weights.mean() - 1));
  }

  attack::AttackDataset same;
  same.features = MatrixXd::Constant(9, 4, 0.3);
  same.classes = nn::Labels::Zero(9);
  const auto ones = attack::estimate_weights(same, VectorXd::Constant(4, 0.3), {});
  const double ones_err = (ones.weights.array() - 1).abs().maxCoeff();

  const VectorXd hand = attack::kernel_weights((VectorXd(3) << 0, 1, 2).finished(), 0.5);
  const VectorXd expected = (VectorXd(3) << 1.996, 0.734, 0.270).finished();
  const double hand_err = (hand - expected).cwiseAbs().maxCoeff();

  return {worst_mean < kWeightMean && ones_err < kWeightMean && hand_err < kHandExample,
          "max |mean - 1| " + fmt(worst_mean) + " over 1000 estimations, identical-info err " + fmt(ones_err) +
              ", hand example (" + fmt(hand[0]) + ", " + fmt(hand[1]) + ", " + fmt(hand[2]) + ") err " +
              fmt(hand_err)};
}

// 3. Influence-delta fidelity on L2-regularised logistic regression.

// Newton iterations to the unique optimum.
nn::Mlp fit_exact(nn::Mlp m, const MatrixXd& x, const nn::Labels& y, double l2) {
  nn::IhvpConfig solve;
  solve.damping = 0;
  solve.tolerance = 1e-12;
  solve.max_iters = 500;
  solve.sample_count = int(x.rows());
  solve.hvp = nn::HvpMethod::exact;
  for (int it = 0; it < 50; ++it) {
    const VectorXd g = nn::backward(m, x, y, l2);
    if (g.norm() < 1e-12) break;
    m.assign(m.flatten() - nn::inverse_hvp(m, x, y, g, l2, solve).x);
  }
  return m;
}

Outcome criterion_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  const int n = 500, d = 6;
  const double l2 = 0.01;
  const VectorXd w_true = gaussian(d, rng);
  MatrixXd x = Eigen::Map<const MatrixXd>(gaussian(n * d, rng).data(), n, d);
  nn::Labels y(n);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < n; ++i) y[i] = u(rng) < 1 / (1 + std::exp(-x.row(i).dot(w_true))) ? 1 : 0;

  const auto base = fit_exact(nn::mlp_init({d, 2}, 7), x, y, l2);
  const nn::IhvpConfig ihvp = harness::ExperimentConfig().defender_pool.ihvp;
  const int cells = n * (d + 1), max_changed = cells / 50;

  int good = 0;
  double worst_cos = 1, worst_rel = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int changed = 1 + int(rng() % unsigned(max_changed));
    MatrixXd xp = x;
    nn::Labels yp = y;
    std::vector<int> picked(cells);
    std::iota(picked.begin(), picked.end(), 0);
    std::shuffle(picked.begin(), picked.end(), rng);
    std::vector<Eigen::Index> rows;
    for (int k = 0; k < changed; ++k) {
      const int r = picked[k] / (d + 1), c = picked[k] % (d + 1);
      if (c == d) yp[r] = 1 - yp[r];
      else xp(r, c) = gaussian(1, rng)[0];
      rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

    const MatrixXd zx = x(rows, Eigen::all), zpx = xp(rows, Eigen::all);
    const nn::Labels zy = y(rows), zpy = yp(rows);
    const VectorXd approx = shadow::influence_delta(base, x, y, zx, zy, zpx, zpy, l2, ihvp).delta;
    const VectorXd actual = fit_exact(base, xp, yp, l2).flatten() - base.flatten();
    const double cos = approx.dot(actual) / (approx.norm() * actual.norm());
    const double rel = (approx - actual).norm() / actual.norm();
    worst_cos = std::min(worst_cos, cos);
    worst_rel = std::max(worst_rel, rel);
    good += cos >= kFidelityCosine && rel <= kFidelityRelErr;
  }
  const double secs = seconds_since(t0);
  const double frac = good / 50.0;
  return {frac >= kFidelityPassFraction && secs < kFidelitySeconds,
          std::to_string(good) + "/50 trials with cosine >= " + fmt(kFidelityCosine) + " and rel err <= " +
              fmt(kFidelityRelErr) + " (worst cosine " + fmt(worst_cos) + ", worst rel err " + fmt(worst_rel) +
              "), " + fmt(secs, 3) + " s"};
}

// 4. Pool construction speedup.

Outcome criterion_speedup(const harness::ExperimentConfig& cfg, const data::TabularDataset& full) {
  const auto split = harness::split_case(cfg, full, 0);
  shadow::PoolConfig pool = cfg.defender_pool;
  pool.n_total = 500;
  pool.k_reference = 100;
  pool.shadow.hidden = cfg.target_hidden;
  pool.shadow.train = cfg.target_train;
  pool.shadow.init_seed = cfg.init_seed;

  auto t0 = std::chrono::steady_clock::now();
  const auto built = shadow::build_shadow_pool(split.provider_sim, pool, cfg.property, 11);
  const double pool_secs = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  const auto refs = shadow::train_reference_shadows(split.provider_sim, 500, pool.shadow, cfg.property, 11);
  const double ref_secs = seconds_since(t0);
  const double ratio = ref_secs / pool_secs;
  return {ratio >= kSpeedup && built.size() == 500 && refs.size() == 500,
          "pool N=500/K=100 " + fmt(pool_secs, 3) + " s, 500 references " + fmt(ref_secs, 3) + " s, speedup " +
              fmt(ratio, 3) + "x (>= " + fmt(kSpeedup) + "x)"};
}

// 5-8. End-to-end runs, shared between criteria.

class EndToEnd {
 public:
  EndToEnd(harness::ExperimentConfig cfg, const data::TabularDataset& full, std::string dump_dir)
      : cfg_(std::move(cfg)), session_(full), dump_dir_(std::move(dump_dir)) {}

  const harness::Report& report(harness::Method m) {
    const auto key = harness::to_string(m);
    if (!reports_.count(key)) {
      for (auto& r : harness::run_methods(cfg_, {m}, session_)) keep(r);
    }
    return reports_.at(key);
  }

  // Runs the missing methods together so they share cases.
  void prefetch(const std::vector<harness::Method>& methods) {
    std::vector<harness::Method> missing;
    for (auto m : methods)
      if (!reports_.count(harness::to_string(m))) missing.push_back(m);
    if (!missing.empty())
      for (auto& r : harness::run_methods(cfg_, missing, session_)) keep(r);
  }

  std::vector<harness::Report> sweep(const std::string& param, const std::vector<double>& values) {
    auto reports = harness::sweep(cfg_, param, values, session_);
    for (const auto& r : reports) dump(r, "sweep_" + param + "_" + r.label);
    return reports;
  }

  const harness::ExperimentConfig& config() const { return cfg_; }

 private:
  void keep(harness::Report r) {
    dump(r, r.method);
    reports_[r.method] = std::move(r);
  }
  void dump(const harness::Report& r, const std::string& name) const {
    if (dump_dir_.empty()) return;
    std::filesystem::create_directories(dump_dir_);
    harness::emit_report(r, dump_dir_ + "/" + name + ".json", harness::ReportFormat::json);
  }

  harness::ExperimentConfig cfg_;
  harness::Session session_;
  std::string dump_dir_;
  std::map<std::string, harness::Report> reports_;
};

Outcome criterion_end_to_end(EndToEnd& e2e) {
  e2e.prefetch({harness::Method::none, harness::Method::dshare});
  const auto& none = e2e.report(harness::Method::none).aggregates;
  const auto& ds = e2e.report(harness::Method::dshare).aggregates;
  const bool pass = none.success_rate >= kUndefendedMin && ds.success_rate >= kDefendedLow &&
                    ds.success_rate <= kDefendedHigh &&
                    ds.mean_accuracy >= none.mean_accuracy - kAccuracyDrop && ds.failures == 0 &&
                    none.failures == 0;
  return {pass, "undefended success " + fmt(none.success_rate) + " (>= " + fmt(kUndefendedMin) +
                    "), defended success " + fmt(ds.success_rate) + " (in [" + fmt(kDefendedLow) + ", " +
                    fmt(kDefendedHigh) + "]), accuracy " + fmt(ds.mean_accuracy) + " vs undefended " +
                    fmt(none.mean_accuracy) + " (drop <= " + fmt(kAccuracyDrop) + "), " +
                    std::to_string(ds.cases) + " cases"};
}

Outcome criterion_ablation(EndToEnd& e2e) {
  e2e.prefetch({harness::Method::dshare, harness::Method::ours_a, harness::Method::ours_r});
  const auto& ds = e2e.report(harness::Method::dshare).aggregates;
  const auto& oa = e2e.report(harness::Method::ours_a).aggregates;
  const auto& orr = e2e.report(harness::Method::ours_r).aggregates;
  const bool pass = oa.success_rate <= ds.success_rate + kAblationSlack &&
                    ds.success_rate <= orr.success_rate + kAblationSlack &&
                    oa.mean_defense_seconds > ds.mean_defense_seconds;
  return {pass, "success ours-a " + fmt(oa.success_rate) + ", dshare " + fmt(ds.success_rate) + ", ours-r " +
                    fmt(orr.success_rate) + " (slack " + fmt(kAblationSlack) + "); defense time ours-a " +
                    fmt(oa.mean_defense_seconds, 3) + " s vs dshare " + fmt(ds.mean_defense_seconds, 3) + " s"};
}

std::string series(const std::vector<double>& v, int digits = 4) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i], digits);
  return s;
}

Outcome criterion_sensitivity(EndToEnd& e2e) {
  const std::vector<double> deltas{100, 200, 500, 1000, 1500};
  const std::vector<double> ks{50, 100, 200, 300, 400};
  std::vector<double> d_success, k_success, k_time;
  for (const auto& r : e2e.sweep("delta", deltas)) d_success.push_back(r.aggregates.success_rate);
  for (const auto& r : e2e.sweep("K", ks)) {
    k_success.push_back(r.aggregates.success_rate);
    k_time.push_back(r.aggregates.mean_pool_seconds);
  }
  const double interior = *std::min_element(d_success.begin() + 1, d_success.end() - 1);
  const bool dip = interior < std::min(d_success.front(), d_success.back());
  bool k_nonincreasing = true, time_increasing = true;
  for (std::size_t i = 1; i < ks.size(); ++i) {
    k_nonincreasing = k_nonincreasing && k_success[i] <= k_success[i - 1];
    time_increasing = time_increasing && k_time[i] > k_time[i - 1];
  }
  return {dip && k_nonincreasing && time_increasing,
          "delta {100,200,500,1000,1500} success " + series(d_success) + " (interior minimum: " +
              (dip ? "yes" : "no") + "); K {50,100,200,300,400} success " + series(k_success) +
              " (non-increasing: " + (k_nonincreasing ? "yes" : "no") + "), pool seconds " + series(k_time, 3) +
              " (increasing: " + (time_increasing ? "yes" : "no") + ")"};
}

Outcome criterion_convergence(EndToEnd& e2e) {
  const auto& r = e2e.report(harness::Method::dshare);
  int ok = 0, by_epsilon = 0, counted = 0;
  double mean_slope = 0;
  for (const auto& c : r.cases) {
    if (c.failed) continue;
    ++counted;
    by_epsilon += c.terminated_by == "epsilon" && c.iterations <= kMaxRounds;
    // Final quartile of the theta-change sequence: least-squares slope.
    const auto& tc = c.theta_changes;
    const std::size_t m = std::min(tc.size(), std::max<std::size_t>(tc.size() / 4, 2));
    if (m < 2) continue;
    const std::size_t start = tc.size() - m;
    double mx = 0, my = 0;
    for (std::size_t i = start; i < tc.size(); ++i) {
      mx += double(i);
      my += tc[i];
    }
    mx /= double(m);
    my /= double(m);
    double sxy = 0, sxx = 0;
    for (std::size_t i = start; i < tc.size(); ++i) {
      sxy += (double(i) - mx) * (tc[i] - my);
      sxx += (double(i) - mx) * (double(i) - mx);
    }
    mean_slope += sxy / sxx;
    ++ok;
  }
  if (ok) mean_slope /= ok;
  const double frac = counted ? double(by_epsilon) / counted : 0;
  return {frac >= kEpsilonTermination && mean_slope <= 0,
          std::to_string(by_epsilon) + "/" + std::to_string(counted) + " cases terminated by epsilon within " +
              std::to_string(kMaxRounds) + " rounds (>= " + fmt(kEpsilonTermination) +
              "), mean final-quartile theta-change slope " + fmt(mean_slope) + " (<= 0)"};
}

std::vector<int> parse_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion."};
  std::string which = "1,2,3,4,5,6,7,8";
  std::optional<int> cases;
  std::string config_path, dump_dir;
  int workers = harness::default_workers();
  app.add_option("--criterion", which, "Comma-separated criteria to run (1-8)");
  app.add_option("--cases", cases, "Override the number of end-to-end cases");
  app.add_option("--config", config_path, "Experiment config for criteria 4-8");
  app.add_option("--workers", workers, "Worker threads");
  app.add_option("--dump", dump_dir, "Directory for the end-to-end reports");
  CLI11_PARSE(app, argc, argv);

  std::vector<int> selected;
  try {
    selected = parse_list(which);
  } catch (const std::exception&) {
    std::cerr << "acceptance: error: bad --criterion list '" << which << "'\n";
    return 2;
  }

  harness::ExperimentConfig cfg = config_path.empty() ? harness::ExperimentConfig() : harness::load_config(config_path);
  cfg.workers = workers;
  cfg.mode = attack::InfoKind::white_box;
  cfg.arms_race.lambda = 0.3;
  cfg.arms_race.max_iters = kMaxRounds;
  if (cases) cfg.n_cases = *cases;

  std::optional<data::TabularDataset> full;
  std::unique_ptr<EndToEnd> e2e;
  auto dataset = [&]() -> const data::TabularDataset& {
    if (!full) full = harness::load_dataset(cfg.dataset);
    return *full;
  };
  auto runs = [&]() -> EndToEnd& {
    if (!e2e) e2e = std::make_unique<EndToEnd>(cfg, dataset(), dump_dir);
    return *e2e;
  };

  int failures = 0;
  for (int c : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      switch (c) {
        case 1: o = criterion_kernels(); break;
        case 2: o = criterion_weights(); break;
        case 3: o = criterion_fidelity(); break;
        case 4: o = criterion_speedup(cfg, dataset()); break;
        case 5: o = criterion_end_to_end(runs()); break;
        case 6: o = criterion_ablation(runs()); break;
        case 7: o = criterion_sensitivity(runs()); break;
        case 8: o = criterion_convergence(runs()); break;
        default: o = {false, "unknown criterion"};
      }
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  return failures ? 1 : 0;
}
