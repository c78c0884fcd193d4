#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <sstream>

#include "cpi/attack/attack.hpp"
#include "cpi/data/sampling.hpp"
#include "cpi/defense/arms_race.hpp"
#include "cpi/defense/baselines.hpp"
#include "cpi/errors.hpp"
#include "cpi/harness/experiment.hpp"
#include "cpi/nn/io.hpp"
#include "cpi/shadow/pool.hpp"
#include "cpi/util/seed.hpp"
#include "files.hpp"
#include "options.hpp"

namespace fs = std::filesystem;
using namespace cpi;
using cli::Overrides;

namespace {

enum Tag : std::uint64_t { kSplit = 1, kTargetTrain, kPool, kQueries, kAttackInit, kAttackTrain, kBaseline };

std::vector<std::string> g_argv;

void print_json(const nlohmann::json& j) { std::cout << j.dump() << '\n'; }

std::uint64_t init_for(const harness::ExperimentConfig& cfg) {
  return cfg.init_seed ? *cfg.init_seed : derive_seed(cfg.seed, kTargetTrain, 1);
}

nn::TrainConfig target_train(const harness::ExperimentConfig& cfg) {
  nn::TrainConfig tc = cfg.target_train;
  tc.seed = derive_seed(cfg.seed, kTargetTrain);
  return tc;
}

nn::Mlp train_target(const harness::ExperimentConfig& cfg, const data::TabularDataset& d) {
  return nn::sgd_train(nn::mlp_init(shadow::architecture(d, cfg.target_hidden), init_for(cfg)), d.features(),
                       d.labels(), target_train(cfg))
      .params;
}

attack::AttackTrainConfig attack_train(const harness::ExperimentConfig& cfg) {
  attack::AttackTrainConfig a = cfg.attack;
  a.init_seed = derive_seed(cfg.seed, kAttackInit);
  a.train.seed = derive_seed(cfg.seed, kAttackTrain);
  return a;
}

attack::InfoMode info_mode(const harness::ExperimentConfig& cfg, const std::string& query_dir) {
  if (cfg.mode == attack::InfoKind::white_box) return {};
  if (query_dir.empty()) throw ConfigError("black-box mode needs --data to draw the query set from");
  const auto q = cli::load_dataset_dir(query_dir);
  return attack::InfoMode::black_box(data::sample_subset(q, cfg.queries, derive_seed(cfg.seed, kQueries)).features());
}

// ingest ------------------------------------------------------------------

struct Ingest {
  Overrides ov;
  std::string out;

  void attach(CLI::App* app) {
    ov.attach(app, {"input", "delimiter", "synthetic-rows"});
    app->add_option("--out", out, "output dataset directory")->required();
  }
  void run() {
    const auto cfg = ov.resolve();
    const auto d = harness::load_dataset(cfg.dataset);
    cli::save_dataset_dir(out, d, cfg.dataset.delimiter);
    cli::write_snapshot(cli::snapshot_path(out, true), cfg, g_argv);
    const auto pv = data::compute_property(d, cfg.property);
    print_json({{"rows", d.rows()},
                {"columns", d.cols()},
                {"features", d.features().cols()},
                {"property_value", pv.value},
                {"property_class", pv.cls},
                {"out", out}});
  }
};

// split -------------------------------------------------------------------

struct Split {
  Overrides ov;
  std::string data, out;

  void attach(CLI::App* app) {
    ov.attach(app, {"provider", "seed"});
    app->add_option("--data", data, "input dataset directory")->required();
    app->add_option("--out", out, "output directory (provider/ and adversary/)")->required();
  }
  void run() {
    const auto cfg = ov.resolve();
    const auto d = cli::load_dataset_dir(data);
    if (cfg.split.provider >= d.rows())
      throw ConfigError("--provider must be smaller than the dataset (" + std::to_string(d.rows()) + " rows)");
    auto [provider, adversary] = data::split_provider_adversary(d, cfg.split.provider, derive_seed(cfg.seed, kSplit));
    const char delim = cfg.dataset.delimiter;
    cli::save_dataset_dir((fs::path(out) / "provider").string(), provider, delim);
    cli::save_dataset_dir((fs::path(out) / "adversary").string(), adversary, delim);
    cli::write_snapshot(cli::snapshot_path(out, true), cfg, g_argv);
    print_json({{"provider_rows", provider.rows()}, {"adversary_rows", adversary.rows()}, {"out", out}});
  }
};

// train-target ------------------------------------------------------------

struct TrainTarget {
  Overrides ov;
  std::string data, test, out;

  void attach(CLI::App* app) {
    ov.attach(app, {"hidden", "epochs", "lr", "seed"});
    app->add_option("--data", data, "training dataset directory")->required();
    app->add_option("--test", test, "held-out dataset directory for accuracy");
    app->add_option("--out", out, "output model file")->required();
  }
  void run() {
    const auto cfg = ov.resolve();
    const auto d = cli::load_dataset_dir(data);
    const auto model = train_target(cfg, d);
    nn::save_model(out, model);
    cli::write_snapshot(cli::snapshot_path(out, false), cfg, g_argv);
    const auto pv = data::compute_property(d, cfg.property);
    nlohmann::json r = {{"train_accuracy", nn::accuracy(model, d.features(), d.labels())},
                        {"property_value", pv.value},
                        {"property_class", pv.cls},
                        {"out", out}};
    if (!test.empty()) {
      const auto t = cli::load_dataset_dir(test);
      r["test_accuracy"] = nn::accuracy(model, t.features(), t.labels());
    }
    print_json(r);
  }
};

// build-pool --------------------------------------------------------------

struct BuildPool {
  Overrides ov;
  std::string data, out, role = "defender";

  void attach(CLI::App* app) {
    ov.attach(app, {"n-total", "k", "budget", "subset", "hidden", "epochs", "lr", "seed"});
    app->add_option("--data", data, "auxiliary dataset directory")->required();
    app->add_option("--role", role, "pool settings to use: defender or adversary")
        ->check(CLI::IsMember({"defender", "adversary"}));
    app->add_option("--out", out, "output pool directory")->required();
  }
  void run() {
    ov.set_pool_section(role + "_pool");
    const auto cfg = ov.resolve();
    shadow::PoolConfig pc = role == "defender" ? cfg.defender_pool : cfg.adversary_pool;
    pc.shadow.hidden = cfg.target_hidden;
    pc.shadow.train = cfg.target_train;
    pc.shadow.init_seed = cfg.init_seed;
    pc.retain_data = false;
    const auto aux = cli::load_dataset_dir(data);
    const auto pool = shadow::build_shadow_pool(aux, pc, cfg.property, derive_seed(cfg.seed, kPool));
    shadow::save_pool(out, pool, {{"role", role}, {"data", fs::absolute(data).string()}});
    cli::write_snapshot(cli::snapshot_path(out, true), cfg, g_argv);
    print_json({{"entries", pool.size()},
                {"references", pool.k_reference},
                {"build_seconds", pool.build_seconds},
                {"reference_seconds", pool.reference_seconds},
                {"approximation_seconds", pool.approximation_seconds},
                {"out", out}});
  }
};

// attack ------------------------------------------------------------------

struct Attack {
  Overrides ov;
  std::string pool, target, data, truth, out;

  void attach(CLI::App* app) {
    ov.attach(app, {"mode", "queries", "sigma2", "static", "seed"});
    app->add_option("--pool", pool, "adversary shadow pool directory")->required();
    app->add_option("--target", target, "target model file")->required();
    app->add_option("--data", data, "dataset directory to draw black-box queries from");
    app->add_option("--truth", truth, "the target's training data, to score the prediction");
    app->add_option("--out", out, "output prediction record (JSON)")->required();
  }
  void run() {
    const auto cfg = ov.resolve();
    const auto mode = info_mode(cfg, data);
    const auto p = shadow::load_pool(pool);
    const auto model = nn::load_model(target);
    const auto ds = attack::build_attack_dataset(p, mode, cfg.property.class_count());
    const auto info = attack::extract_info(model, mode);
    const auto weighted = cfg.responsive_evaluation ? attack::estimate_weights(ds, info, cfg.kernel) : ds;
    const auto inf = attack::infer_property(attack::train_attack(weighted, attack_train(cfg)), info);
    nlohmann::json r = {{"mode", attack::to_string(mode.kind)},
                        {"attack", cfg.responsive_evaluation ? "responsive" : "static"},
                        {"predicted_class", inf.cls},
                        {"probabilities", std::vector<double>(inf.probabilities.begin(), inf.probabilities.end())}};
    if (!truth.empty()) {
      const auto pv = data::compute_property(cli::load_dataset_dir(truth), cfg.property);
      r["true_value"] = pv.value;
      r["true_class"] = pv.cls;
      r["correct"] = pv.cls == inf.cls;
    }
    cli::write_json(out, r);
    cli::write_snapshot(cli::snapshot_path(out, false), cfg, g_argv);
    print_json(r);
  }
};

// defend ------------------------------------------------------------------

struct Defend {
  Overrides ov;
  std::string pool, target, data, out;

  void attach(CLI::App* app) {
    ov.attach(app, {"method", "mode", "queries", "sigma2", "lambda", "max-iters", "epsilon", "defense-lr",
                    "defense-steps", "property-loss", "flip-frac", "dp-epsilon", "clip-norm", "drop-frac",
                    "gamma", "hidden", "epochs", "lr", "seed"});
    app->add_option("--pool", pool, "defender shadow pool directory (arms-race methods)");
    app->add_option("--target", target, "target model file (arms-race methods)");
    app->add_option("--data", data, "the provider's training dataset directory")->required();
    app->add_option("--out", out, "output secure model file")->required();
  }

  void run() {
    using harness::Method;
    const auto cfg = ov.resolve();
    const auto d = cli::load_dataset_dir(data);
    const auto truth = data::compute_property(d, cfg.property);
    const Method m = cfg.method;
    nlohmann::json r = {{"method", harness::to_string(m)}, {"out", out}};
    nn::Mlp secure;
    const bool race = m == Method::dshare || m == Method::ours_r || m == Method::ours_a;
    if (race || m == Method::adversarial_defense) {
      if (pool.empty()) throw ConfigError("--pool is required for method " + harness::to_string(m));
      if (target.empty()) throw ConfigError("--target is required for method " + harness::to_string(m));
      const auto p = shadow::load_pool(pool);
      if (m == Method::ours_a && p.approximated_count() > 0)
        throw ConfigError("ours-a needs a pool of reference shadows only (build it with --k equal to --n-total)");
      const auto target0 = nn::load_model(target);
      const auto mode = info_mode(cfg, data);
      const auto shadows = attack::build_attack_dataset(p, mode, cfg.property.class_count());
      defense::ArmsRaceConfig arms = cfg.arms_race;
      arms.kernel = cfg.kernel;
      arms.attack = attack_train(cfg);
      arms.responsive = m != Method::ours_r;
      const defense::ProviderData provider{d.features(), d.labels(), truth.cls};
      if (race) {
        auto res = defense::arms_race(target0, shadows, provider, mode, arms);
        std::ofstream(out + ".trace.csv") << res.trace.to_csv();
        cli::write_json(out + ".trace.json", res.trace.to_json());
        r["iterations"] = res.trace.records.size();
        r["terminated_by"] = res.trace.terminated_by;
        r["trace"] = out + ".trace.csv";
        secure = std::move(res.secure);
      } else {
        secure = defense::baseline_adversarial_defense(target0, shadows, provider, mode, cfg.baselines.gamma, arms)
                     .secure;
      }
    } else if (m == Method::noisy_label) {
      secure = train_target(cfg, defense::baseline_noisy_label(d, cfg.baselines.flip_frac,
                                                               derive_seed(cfg.seed, kBaseline)));
    } else if (m == Method::resample) {
      secure = train_target(cfg, defense::baseline_resample(d, cfg.baselines.drop_frac, cfg.property,
                                                            derive_seed(cfg.seed, kBaseline)));
    } else if (m == Method::dp_sgd) {
      secure = defense::baseline_dp_sgd(nn::mlp_init(shadow::architecture(d, cfg.target_hidden), init_for(cfg)),
                                        d.features(), d.labels(), cfg.baselines.dp, target_train(cfg));
    } else {
      if (target.empty()) throw ConfigError("--target is required for method none");
      secure = nn::load_model(target);
    }
    nn::save_model(out, secure);
    cli::write_snapshot(cli::snapshot_path(out, false), cfg, g_argv);
    r["train_accuracy"] = nn::accuracy(secure, d.features(), d.labels());
    print_json(r);
  }
};

// evaluate / sweep / report -----------------------------------------------

const std::vector<std::string> kExperimentFlags = {
    "input", "synthetic-rows", "seed", "workers", "cases", "method", "mode", "queries", "provider", "target-rows",
    "hidden", "epochs", "lr", "n-total", "k", "budget", "subset", "sigma2", "lambda", "max-iters", "epsilon",
    "defense-lr", "defense-steps", "property-loss", "flip-frac", "dp-epsilon", "clip-norm", "drop-frac", "gamma",
    "static"};

harness::ReportFormat format_for(const std::string& path, const std::string& format) {
  if (!format.empty()) return harness::parse_report_format(format);
  return fs::path(path).extension() == ".csv" ? harness::ReportFormat::csv : harness::ReportFormat::json;
}

std::string summary_line(const harness::Report& r) {
  std::ostringstream s;
  const auto& a = r.aggregates;
  s << (r.label.empty() ? r.method : r.label + " " + r.method) << ": success " << a.success_rate << ", accuracy "
    << a.mean_accuracy << " (undefended " << a.mean_undefended_accuracy << "), defense " << a.mean_defense_seconds
    << " s, cases " << a.cases << ", failures " << a.failures;
  return s.str();
}

struct Evaluate {
  Overrides ov;
  std::string out, format;

  void attach(CLI::App* app) {
    ov.attach(app, kExperimentFlags);
    app->add_option("--out", out, "report file (.json or .csv)")->required();
    app->add_option("--format", format, "json or csv (default: from the extension)")
        ->check(CLI::IsMember({"json", "csv"}));
  }
  void run() {
    const auto cfg = ov.resolve();
    const auto report = harness::run_experiment(cfg);
    harness::emit_report(report, out, format_for(out, format));
    cli::write_snapshot(cli::snapshot_path(out, false), cfg, g_argv);
    std::cout << summary_line(report) << '\n';
  }
};

struct Sweep {
  Overrides ov;
  std::string parameter, values, out, format = "json";

  void attach(CLI::App* app) {
    ov.attach(app, kExperimentFlags);
    app->add_option("--param", parameter, "lambda, K, delta, flip_frac, epsilon_privacy, drop_frac or gamma")
        ->required();
    app->add_option("--values", values, "comma-separated values")->required();
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  }
  void run() {
    const auto cfg = ov.resolve();
    std::vector<double> points;
    const cli::FlagSpec spec{"values", "", cli::FlagKind::real, ""};
    std::stringstream list(values);
    for (std::string item; std::getline(list, item, ',');) points.push_back(cli::flag_value(spec, item).get<double>());
    harness::Session session(harness::load_dataset(cfg.dataset));
    const auto reports = harness::sweep(cfg, parameter, points, session);
    const auto fmt = harness::parse_report_format(format);
    fs::create_directories(out);
    for (const auto& r : reports) {
      harness::emit_report(r, (fs::path(out) / (r.label + "." + format)).string(), fmt);
      std::cout << summary_line(r) << '\n';
    }
    std::ofstream(fs::path(out) / "tradeoff.csv") << harness::tradeoff_csv(reports);
    cli::write_snapshot(cli::snapshot_path(out, true), cfg, g_argv);
  }
};

struct ReportCmd {
  std::vector<std::string> inputs;
  std::string out, format, tradeoff;

  void attach(CLI::App* app) {
    app->add_option("--in", inputs, "report files")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "convert a single report to this file");
    app->add_option("--format", format, "json or csv (default: from the extension)")
        ->check(CLI::IsMember({"json", "csv"}));
    app->add_option("--tradeoff", tradeoff, "write plot-ready success/accuracy rows here");
  }
  void run() {
    std::vector<harness::Report> reports;
    for (const auto& p : inputs) reports.push_back(harness::parse_report(p));
    for (const auto& r : reports) std::cout << summary_line(r) << '\n';
    if (!out.empty()) {
      if (reports.size() != 1) throw ConfigError("--out converts exactly one --in report");
      harness::emit_report(reports.front(), out, format_for(out, format));
    }
    if (!tradeoff.empty()) std::ofstream(tradeoff) << harness::tradeoff_csv(reports);
  }
};

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Confidential property inference attacks and defenses on shared tabular models", "cpi"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Ingest ingest;
  Split split;
  TrainTarget train;
  BuildPool pool;
  Attack attack_cmd;
  Defend defend;
  Evaluate evaluate;
  Sweep sweep_cmd;
  ReportCmd report;
  ingest.attach(app.add_subcommand("ingest", "validate and encode a CSV (or synthetic) table"));
  split.attach(app.add_subcommand("split", "split a dataset into provider and adversary shares"));
  train.attach(app.add_subcommand("train-target", "train a target model"));
  pool.attach(app.add_subcommand("build-pool", "train reference shadows and approximate the rest"));
  attack_cmd.attach(app.add_subcommand("attack", "infer the confidential property of a target model"));
  defend.attach(app.add_subcommand("defend", "apply a defense to a target model"));
  evaluate.attach(app.add_subcommand("evaluate", "run an experiment and write a report"));
  sweep_cmd.attach(app.add_subcommand("sweep", "run an experiment over parameter values"));
  report.attach(app.add_subcommand("report", "summarise, convert or merge reports"));

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  if (const std::string first = argv[1]; first[0] != '-' && !app.get_subcommand_no_throw(first)) {
    std::cerr << "cpi: error: usage: unknown command '" << first << "'\n";
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "cpi: error: usage: " << msg << '\n';
    return 2;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "ingest") ingest.run();
    else if (name == "split") split.run();
    else if (name == "train-target") train.run();
    else if (name == "build-pool") pool.run();
    else if (name == "attack") attack_cmd.run();
    else if (name == "defend") defend.run();
    else if (name == "evaluate") evaluate.run();
    else if (name == "sweep") sweep_cmd.run();
    else report.run();
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "cpi: error: " << e.kind() << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "cpi: error: internal: " << msg << '\n';
    return 1;
  }
  return 0;
}
