#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>

#include "cpi/errors.hpp"
#include "cpi/harness/experiment.hpp"

using namespace cpi;
using namespace cpi::harness;

namespace {

CaseRecord record(int id, int truth, int predicted, double acc = 0.9) {
  CaseRecord r;
  r.case_id = id;
  r.true_class = truth;
  r.predicted_class = predicted;
  r.accuracy = acc;
  r.undefended_accuracy = acc + 0.01;
  r.defense_seconds = 0.5 * id;
  r.total_seconds = 1 + id;
  return r;
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.dataset.synthetic.rows = 3000;
  c.split.provider = 1500;
  c.split.target_allotment = 800;
  c.split.target_rows = 400;
  c.target_hidden = {8};
  c.target_train.epochs = 3;
  c.target_train.learning_rate = 0.01;
  for (auto* p : {&c.defender_pool, &c.adversary_pool}) {
    p->shadow.subset_size = 200;
    p->budget = 20;
    p->ihvp.max_iters = 10;
  }
  c.defender_pool.n_total = 12;
  c.defender_pool.k_reference = 6;
  c.adversary_pool.n_total = c.adversary_pool.k_reference = 12;
  c.attack.hidden = {4};
  c.attack.train.epochs = 3;
  c.arms_race.max_iters = 2;
  c.arms_race.defense_steps = 2;
  c.arms_race.attack_epochs = 1;
  c.n_cases = 2;
  c.workers = 1;
  return c;
}

}  // namespace

TEST_CASE("attack success rate counts correct inferences over non-failed cases") {
  std::vector<CaseRecord> rs;
  for (int i = 0; i < 100; ++i) rs.push_back(record(i, i % 2, i < 55 ? i % 2 : 1 - i % 2));
  CHECK(attack_success_rate(rs) == doctest::Approx(0.55));
  CaseRecord bad = record(100, 0, 0);
  bad.failed = true;
  rs.push_back(bad);
  CHECK(attack_success_rate(rs) == doctest::Approx(0.55));
  CHECK(aggregate(rs).failures == 1);
  CHECK(aggregate(rs).cases == 100);
}

TEST_CASE("a coin-flip attack scores about one half") {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.5);
  std::vector<CaseRecord> rs;
  for (int i = 0; i < 10000; ++i) rs.push_back(record(i, coin(rng), coin(rng)));
  CHECK(std::abs(attack_success_rate(rs) - 0.5) < 0.02);
}

TEST_CASE("aggregates are recomputable from the case records") {
  std::vector<CaseRecord> rs = {record(0, 0, 0, 0.8), record(1, 1, 0, 0.9), record(2, 1, 1, 0.7)};
  const auto a = aggregate(rs);
  CHECK(a.success_rate == doctest::Approx(2.0 / 3));
  CHECK(a.mean_accuracy == doctest::Approx(0.8));
  CHECK(a.mean_undefended_accuracy == doctest::Approx(0.81));
  CHECK(a.mean_defense_seconds == doctest::Approx(0.5));
  CHECK(a.mean_total_seconds == doctest::Approx(2.0));
}

TEST_CASE("report round trips through json and csv") {
  Report r;
  r.method = "dshare";
  r.label = "lambda=0.3";
  r.config = tiny().to_json();
  r.cases = {record(0, 0, 1, 0.123456789012345), record(1, 1, 1, 0.9)};
  r.cases[0].probabilities = {0.25, 0.75};
  r.cases[0].theta_changes = {0.5, 0.25, 1e-7};
  r.cases[0].terminated_by = "epsilon";
  r.cases[0].iterations = 3;
  r.cases[1].failed = true;
  r.cases[1].error = "numeric error, with a comma";
  r.aggregates = aggregate(r.cases);

  auto check_same = [&](const Report& b) {
    CHECK(b.method == r.method);
    CHECK(b.label == r.label);
    CHECK(b.config == r.config);
    REQUIRE(b.cases.size() == 2);
    CHECK(b.cases[0].accuracy == r.cases[0].accuracy);
    CHECK(b.cases[0].probabilities == r.cases[0].probabilities);
    CHECK(b.cases[0].theta_changes == r.cases[0].theta_changes);
    CHECK(b.cases[0].terminated_by == "epsilon");
    CHECK(b.cases[1].failed);
    CHECK(b.cases[1].error == r.cases[1].error);
    CHECK(b.aggregates.success_rate == r.aggregates.success_rate);
  };
  check_same(report_from_json(report_to_json(r)));
  check_same(report_from_csv(report_to_csv(r)));

  const auto dir = std::filesystem::temp_directory_path() / "cpi_report_test";
  std::filesystem::create_directories(dir);
  emit_report(r, (dir / "r.json").string(), ReportFormat::json);
  emit_report(r, (dir / "r.csv").string(), ReportFormat::csv);
  check_same(parse_report((dir / "r.json").string()));
  check_same(parse_report((dir / "r.csv").string()));
  CHECK_THROWS_AS(parse_report((dir / "missing.json").string()), IoError);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);

  const auto t = tradeoff_csv({r});
  CHECK(t.find("lambda=0.3") != std::string::npos);
}

TEST_CASE("experiment config round trip, partial keys and validation") {
  const auto c = tiny();
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  const auto partial = ExperimentConfig::from_json({{"n_cases", 7}, {"arms_race", {{"lambda", 0.9}}}});
  const ExperimentConfig d;
  CHECK(partial.n_cases == 7);
  CHECK(partial.arms_race.lambda == 0.9);
  CHECK(partial.arms_race.max_iters == d.arms_race.max_iters);
  CHECK(partial.defender_pool.n_total == d.defender_pool.n_total);
  CHECK(partial.init_seed == d.init_seed);

  CHECK_FALSE(ExperimentConfig::from_json({{"target", {{"init_seed", nullptr}}}}).init_seed.has_value());
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"n_cases", 0}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"method", "magic"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"n_cases", "many"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"split", {{"test_fraction", 1.0}}}}), ConfigError);
  CHECK_NOTHROW(d.split.check(45211));
  CHECK_THROWS_AS(d.split.check(20000), ConfigError);
  SplitConfig nested;
  nested.target_allotment = 30000;
  CHECK_THROWS_AS(nested.check(45211), ConfigError);
  nested = SplitConfig{};
  nested.target_rows = 20000;
  CHECK_THROWS_AS(nested.check(45211), ConfigError);

  for (auto m : {Method::none, Method::dshare, Method::ours_r, Method::ours_a, Method::noisy_label,
                 Method::dp_sgd, Method::resample, Method::adversarial_defense})
    CHECK(parse_method(to_string(m)) == m);
}

TEST_CASE("with_parameter maps sweep names onto the config") {
  const ExperimentConfig c;
  CHECK(with_parameter(c, "lambda", 0.5).arms_race.lambda == 0.5);
  CHECK(with_parameter(c, "K", 200).defender_pool.k_reference == 200);
  CHECK(with_parameter(c, "delta", 150).defender_pool.budget == 150);
  CHECK(with_parameter(c, "epsilon_privacy", 2).baselines.dp.epsilon == 2);
  CHECK_THROWS_AS(with_parameter(c, "momentum", 0.9), ConfigError);
  CHECK_THROWS_AS(with_parameter(c, "K", 600), ConfigError);
}

TEST_CASE("case splits are disjoint and deterministic") {
  const auto cfg = tiny();
  const auto full = load_dataset(cfg.dataset);
  const auto s = split_case(cfg, full, 0);
  CHECK(s.train.rows() == 320);
  CHECK(s.test.rows() == 80);
  CHECK(s.adversary.rows() == full.rows() - cfg.split.provider);
  auto ids = [](const data::TabularDataset& d) {
    const auto& v = d.row_ids();
    return std::set<data::Index>(v.begin(), v.end());
  };
  const auto train = ids(s.train), test = ids(s.test), adv = ids(s.adversary), sim = ids(s.provider_sim);
  for (auto r : train) {
    CHECK(test.count(r) == 0);
    CHECK(adv.count(r) == 0);
    CHECK(sim.count(r) == 0);
  }
  for (auto r : sim) CHECK(adv.count(r) == 0);
  CHECK(split_case(cfg, full, 0).train.row_ids() == s.train.row_ids());
  CHECK(split_case(cfg, full, 1).train.row_ids() != s.train.row_ids());
  CHECK(s.truth.cls == data::compute_property(s.train, cfg.property).cls);
}

TEST_CASE("a tiny paired run produces consistent records") {
  auto cfg = tiny();
  Session session(load_dataset(cfg.dataset));
  const auto reports = run_methods(cfg, {Method::none, Method::dshare, Method::noisy_label}, session);
  REQUIRE(reports.size() == 3);
  for (const auto& r : reports) {
    REQUIRE(r.cases.size() == 2);
    const auto again = aggregate(r.cases);
    CHECK(r.aggregates.success_rate == again.success_rate);
    CHECK(r.aggregates.mean_accuracy == again.mean_accuracy);
    for (const auto& c : r.cases) {
      CHECK_FALSE(c.failed);
      CHECK(c.defense_seconds <= c.total_seconds);
      CHECK(c.accuracy >= 0);
      CHECK(c.accuracy <= 1);
    }
  }
  for (int i = 0; i < 2; ++i) {
    CHECK(reports[0].cases[i].true_class == reports[1].cases[i].true_class);
    CHECK(reports[0].cases[i].undefended_accuracy == reports[1].cases[i].undefended_accuracy);
    CHECK(reports[0].cases[i].accuracy == reports[0].cases[i].undefended_accuracy);
    CHECK(reports[1].cases[i].iterations >= 1);
    CHECK(reports[1].cases[i].iterations <= cfg.arms_race.max_iters);
    CHECK(reports[1].cases[i].theta_changes.size() == std::size_t(reports[1].cases[i].iterations));
  }

  cfg.n_cases = 1;
  const auto one = run_experiment(cfg, session);
  CHECK(one.aggregates.success_rate ==
        (one.cases[0].predicted_class == one.cases[0].true_class ? 1.0 : 0.0));
  CHECK(one.aggregates.mean_accuracy == one.cases[0].accuracy);

  const auto points = sweep(cfg, "lambda", {0.1, 1.0}, session);
  REQUIRE(points.size() == 2);
  CHECK(points[0].label == "lambda=0.1");
  CHECK(points[1].config.at("arms_race").at("lambda") == 1.0);
}
