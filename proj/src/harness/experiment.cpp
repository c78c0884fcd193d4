#include "cpi/harness/experiment.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "cpi/data/csv.hpp"
#include "cpi/data/sampling.hpp"
#include "cpi/data/synthetic.hpp"
#include "cpi/defense/arms_race.hpp"
#include "cpi/defense/baselines.hpp"
#include "cpi/errors.hpp"
#include "cpi/util/seed.hpp"

namespace cpi::harness {

data::TabularDataset load_dataset(const DatasetConfig& cfg) {
  if (cfg.path.empty()) return data::encode(data::generate_bank_like(cfg.synthetic));
  return data::encode(
      data::load_csv(cfg.path, std::make_shared<const data::Schema>(cfg.schema), cfg.delimiter));
}

std::shared_ptr<const AdversaryArtifacts> Session::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = cache_.find(key);
  return it == cache_.end() ? nullptr : it->second;
}

void Session::store(const std::string& key, std::shared_ptr<const AdversaryArtifacts> value) {
  std::lock_guard lock(mutex_);
  cache_[key] = std::move(value);
}

void Session::clear_cache() {
  std::lock_guard lock(mutex_);
  cache_.clear();
}

namespace {

enum Tag : std::uint64_t {
  kProviderSplit = 1,
  kAllotmentSplit,
  kRate,
  kTargetSample,
  kTestSplit,
  kTargetInit,
  kTargetTrain,
  kDefenderQueries,
  kAdversaryQueries,
  kDefenderPool,
  kNoisyLabel,
  kResample,
  kDefenseAttackInit,
  kDefenseAttackTrain,
  kAdversaryPool = 20,
  kAdversaryAttackInit,
  kAdversaryAttackTrain,
};

}  // namespace

CaseSplit split_case(const ExperimentConfig& cfg, const data::TabularDataset& full, int case_id) {
  CaseSplit s;
  s.seed = derive_seed(cfg.seed, 0xca5e, std::uint64_t(case_id));
  auto [provider, adversary] = data::split_provider_adversary(full, cfg.split.provider, derive_seed(s.seed, kProviderSplit));
  auto [allotment, sim] = data::split_provider_adversary(provider, cfg.split.target_allotment,
                                                         derive_seed(s.seed, kAllotmentSplit));
  std::mt19937_64 rng(derive_seed(s.seed, kRate));
  std::uniform_real_distribution<double> rate(cfg.property.sampling_range.first, cfg.property.sampling_range.second);
  const auto target_set = data::sample_with_rate(allotment, cfg.split.target_rows, rate(rng), cfg.property,
                                                 derive_seed(s.seed, kTargetSample));
  const auto n_train = Index(std::llround((1 - cfg.split.test_fraction) * double(cfg.split.target_rows)));
  auto [train, test] = data::split_provider_adversary(target_set, n_train, derive_seed(s.seed, kTestSplit));
  s.provider_sim = std::move(sim);
  s.adversary = std::move(adversary);
  s.train = std::move(train);
  s.test = std::move(test);
  s.truth = data::compute_property(s.train, cfg.property);
  return s;
}

namespace {

struct CaseSetup : CaseSplit {
  nn::Mlp target0;
  double split_seconds = 0, target_seconds = 0;
};

std::uint64_t target_init(const ExperimentConfig& cfg, const CaseSetup& s) {
  return cfg.init_seed ? *cfg.init_seed : derive_seed(s.seed, kTargetInit);
}

CaseSetup setup_case(const ExperimentConfig& cfg, const data::TabularDataset& full, int case_id) {
  CaseSetup s;
  const Stopwatch split_watch;
  static_cast<CaseSplit&>(s) = split_case(cfg, full, case_id);
  s.split_seconds = split_watch.seconds();

  const Stopwatch target_watch;
  nn::TrainConfig tc = cfg.target_train;
  tc.seed = derive_seed(s.seed, kTargetTrain);
  s.target0 = nn::sgd_train(nn::mlp_init(shadow::architecture(s.train, cfg.target_hidden),
                                         target_init(cfg, s)),
                            s.train.features(), s.train.labels(), tc)
                  .params;
  s.target_seconds = target_watch.seconds();
  return s;
}

attack::AttackTrainConfig attack_config(const ExperimentConfig& cfg, std::uint64_t seed,
                                        std::uint64_t init_tag, std::uint64_t train_tag) {
  attack::AttackTrainConfig a = cfg.attack;
  a.init_seed = derive_seed(seed, init_tag);
  a.train.seed = derive_seed(seed, train_tag);
  return a;
}

shadow::PoolConfig pool_with_shadow_training(shadow::PoolConfig p, const ExperimentConfig& cfg) {
  p.shadow.hidden = cfg.target_hidden;
  p.shadow.train = cfg.target_train;
  p.shadow.init_seed = cfg.init_seed;
  return p;
}

std::string adversary_key(const ExperimentConfig& cfg, std::uint64_t case_seed) {
  nlohmann::json k = {{"case", case_seed},
                      {"pool", cfg.to_json()["adversary_pool"]},
                      {"mode", attack::to_string(cfg.mode)},
                      {"queries", cfg.queries},
                      {"attack", cfg.to_json()["attack"]},
                      {"target", cfg.to_json()["target"]},
                      {"property", cfg.property.to_json()},
                      {"split", cfg.to_json()["split"]}};
  return k.dump();
}

std::shared_ptr<const AdversaryArtifacts> adversary_for(const ExperimentConfig& cfg, const CaseSetup& s,
                                                        Session& session) {
  const std::string key = adversary_key(cfg, s.seed);
  if (auto hit = session.find(key)) return hit;
  auto art = std::make_shared<AdversaryArtifacts>();
  if (cfg.mode == attack::InfoKind::black_box)
    art->mode = attack::InfoMode::black_box(
        data::sample_subset(s.adversary, cfg.queries, derive_seed(s.seed, kAdversaryQueries)).features());
  const auto pool = shadow::build_shadow_pool(s.adversary, pool_with_shadow_training(cfg.adversary_pool, cfg),
                                              cfg.property, derive_seed(s.seed, kAdversaryPool));
  art->build_seconds = pool.build_seconds;
  art->shadows = attack::build_attack_dataset(pool, art->mode, cfg.property.class_count());
  art->static_attack = std::make_shared<attack::AttackModel>(
      attack::train_attack(art->shadows, attack_config(cfg, s.seed, kAdversaryAttackInit, kAdversaryAttackTrain)));
  session.store(key, art);
  return art;
}

struct DefenderPool {
  attack::AttackDataset shadows;
  double seconds = 0;
};

DefenderPool defender_pool(const ExperimentConfig& cfg, const CaseSetup& s, const attack::InfoMode& mode,
                           shadow::PoolConfig pc) {
  const auto pool = shadow::build_shadow_pool(s.provider_sim, pool_with_shadow_training(pc, cfg), cfg.property,
                                              derive_seed(s.seed, kDefenderPool));
  DefenderPool out;
  out.seconds = pool.build_seconds;
  out.shadows = attack::build_attack_dataset(pool, mode, cfg.property.class_count());
  return out;
}

nn::Mlp retrain(const ExperimentConfig& cfg, const CaseSetup& s, const data::TabularDataset& train) {
  nn::TrainConfig tc = cfg.target_train;
  tc.seed = derive_seed(s.seed, kTargetTrain);
  return nn::sgd_train(nn::mlp_init(shadow::architecture(train, cfg.target_hidden), target_init(cfg, s)),
                       train.features(), train.labels(), tc)
      .params;
}

std::vector<CaseRecord> run_case(const ExperimentConfig& cfg, const std::vector<Method>& methods, int case_id,
                                 Session& session) {
  std::vector<CaseRecord> out(methods.size());
  for (auto& r : out) r.case_id = case_id;
  CaseSetup s;
  std::shared_ptr<const AdversaryArtifacts> adv;
  try {
    s = setup_case(cfg, session.data(), case_id);
    adv = adversary_for(cfg, s, session);
  } catch (const Error& e) {
    for (auto& r : out) {
      r.failed = true;
      r.error = e.what();
    }
    return out;
  }

  attack::InfoMode defender_mode;
  if (cfg.mode == attack::InfoKind::black_box)
    defender_mode = attack::InfoMode::black_box(
        data::sample_subset(s.provider_sim, cfg.queries, derive_seed(s.seed, kDefenderQueries)).features());
  std::unique_ptr<DefenderPool> shared_pool;
  const defense::ProviderData provider{s.train.features(), s.train.labels(), s.truth.cls};
  defense::ArmsRaceConfig arms = cfg.arms_race;
  arms.kernel = cfg.kernel;
  arms.attack = attack_config(cfg, s.seed, kDefenseAttackInit, kDefenseAttackTrain);

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    CaseRecord& rec = out[mi];
    rec.true_class = s.truth.cls;
    rec.true_value = s.truth.value;
    rec.split_seconds = s.split_seconds;
    rec.target_seconds = s.target_seconds;
    try {
      const Method m = methods[mi];
      const Stopwatch defense_watch;
      double pool_seconds = 0;
      nn::Mlp secure = s.target0;
      auto run_race = [&](const DefenderPool& pool, bool responsive) {
        defense::ArmsRaceConfig a = arms;
        a.responsive = responsive;
        auto res = defense::arms_race(s.target0, pool.shadows, provider, defender_mode, a);
        rec.iterations = int(res.trace.records.size());
        rec.terminated_by = res.trace.terminated_by;
        for (const auto& t : res.trace.records) rec.theta_changes.push_back(t.theta_change);
        return res.secure;
      };
      auto pooled = [&]() -> const DefenderPool& {
        if (!shared_pool) {
          shared_pool = std::make_unique<DefenderPool>(defender_pool(cfg, s, defender_mode, cfg.defender_pool));
          // Charged to every method that uses it.
        }
        pool_seconds = shared_pool->seconds;
        return *shared_pool;
      };
      double reused = 0;
      switch (m) {
        case Method::none:
          break;
        case Method::dshare:
        case Method::ours_r: {
          const bool fresh = !shared_pool;
          const auto& p = pooled();
          if (!fresh) reused = p.seconds;
          secure = run_race(p, m == Method::dshare);
          break;
        }
        case Method::ours_a: {
          shadow::PoolConfig pc = cfg.defender_pool;
          pc.k_reference = pc.n_total;
          const auto p = defender_pool(cfg, s, defender_mode, pc);
          pool_seconds = p.seconds;
          secure = run_race(p, true);
          break;
        }
        case Method::noisy_label:
          secure = retrain(cfg, s, defense::baseline_noisy_label(s.train, cfg.baselines.flip_frac,
                                                                 derive_seed(s.seed, kNoisyLabel)));
          break;
        case Method::dp_sgd: {
          nn::TrainConfig tc = cfg.target_train;
          tc.seed = derive_seed(s.seed, kTargetTrain);
          secure = defense::baseline_dp_sgd(
              nn::mlp_init(shadow::architecture(s.train, cfg.target_hidden), target_init(cfg, s)),
              s.train.features(), s.train.labels(), cfg.baselines.dp, tc);
          break;
        }
        case Method::resample:
          secure = retrain(cfg, s, defense::baseline_resample(s.train, cfg.baselines.drop_frac, cfg.property,
                                                              derive_seed(s.seed, kResample)));
          break;
        case Method::adversarial_defense: {
          const bool fresh = !shared_pool;
          const auto& p = pooled();
          if (!fresh) reused = p.seconds;
          secure = defense::baseline_adversarial_defense(s.target0, p.shadows, provider, defender_mode,
                                                         cfg.baselines.gamma, arms)
                       .secure;
          break;
        }
      }
      // A pool built for an earlier method still counts toward this one.
      rec.pool_seconds = pool_seconds;
      rec.defense_seconds = defense_watch.seconds() + reused;

      const Stopwatch attack_watch;
      const attack::ModelInfo info = attack::extract_info(secure, adv->mode);
      attack::Inference inf;
      if (cfg.responsive_evaluation) {
        const auto weighted = attack::estimate_weights(adv->shadows, info, cfg.kernel);
        inf = attack::infer_property(
            attack::train_attack(weighted, attack_config(cfg, s.seed, kAdversaryAttackInit, kAdversaryAttackTrain)),
            info);
      } else {
        inf = attack::infer_property(*adv->static_attack, info);
      }
      rec.attack_seconds = attack_watch.seconds();
      rec.predicted_class = inf.cls;
      rec.probabilities.assign(inf.probabilities.begin(), inf.probabilities.end());
      rec.accuracy = nn::accuracy(secure, s.test.features(), s.test.labels());
      rec.undefended_accuracy = nn::accuracy(s.target0, s.test.features(), s.test.labels());
      rec.total_seconds = rec.split_seconds + rec.target_seconds + rec.defense_seconds + rec.attack_seconds;
    } catch (const Error& e) {
      rec.failed = true;
      rec.error = e.what();
    }
  }
  return out;
}

}  // namespace

std::vector<Report> run_methods(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                                Session& session) {
  cfg.validate();
  cfg.split.check(session.data().rows());
  if (methods.empty()) throw ConfigError("no methods to run");
  std::vector<std::vector<CaseRecord>> per_case(cfg.n_cases);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < cfg.n_cases; c = next++) per_case[c] = run_case(cfg, methods, c, session);
  };
  const int workers = std::min(cfg.workers, cfg.n_cases);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<Report> reports(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    ExperimentConfig snap = cfg;
    snap.method = methods[m];
    reports[m].method = to_string(methods[m]);
    reports[m].config = snap.to_json();
    for (int c = 0; c < cfg.n_cases; ++c) reports[m].cases.push_back(per_case[c][m]);
    reports[m].aggregates = aggregate(reports[m].cases);
  }
  return reports;
}

Report run_experiment(const ExperimentConfig& cfg, Session& session) {
  return run_methods(cfg, {cfg.method}, session).front();
}

Report run_experiment(const ExperimentConfig& cfg) {
  Session session(load_dataset(cfg.dataset));
  return run_experiment(cfg, session);
}

ExperimentConfig with_parameter(ExperimentConfig cfg, const std::string& parameter, double value) {
  if (parameter == "lambda") cfg.arms_race.lambda = value;
  else if (parameter == "K") cfg.defender_pool.k_reference = int(std::lround(value));
  else if (parameter == "delta") cfg.defender_pool.budget = Index(std::llround(value));
  else if (parameter == "flip_frac") cfg.baselines.flip_frac = value;
  else if (parameter == "epsilon_privacy") cfg.baselines.dp.epsilon = value;
  else if (parameter == "drop_frac") cfg.baselines.drop_frac = value;
  else if (parameter == "gamma") cfg.baselines.gamma = value;
  else
    throw ConfigError("unknown sweep parameter '" + parameter +
                      "' (expected lambda, K, delta, flip_frac, epsilon_privacy, drop_frac or gamma)");
  cfg.validate();
  return cfg;
}

std::vector<Report> sweep(const ExperimentConfig& cfg, const std::string& parameter,
                          const std::vector<double>& values, Session& session) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> points;
  for (double v : values) points.push_back(with_parameter(cfg, parameter, v));
  std::vector<Report> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Report r = run_experiment(points[i], session);
    std::ostringstream label;
    label << parameter << '=' << values[i];
    r.label = label.str();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cpi::harness
