#include "cpi/harness/config.hpp"

#include <cstdlib>
#include <fstream>

#include "cpi/errors.hpp"

namespace cpi::harness {

namespace {

const std::pair<Method, const char*> kMethods[] = {
    {Method::none, "none"},
    {Method::dshare, "dshare"},
    {Method::ours_r, "ours-r"},
    {Method::ours_a, "ours-a"},
    {Method::noisy_label, "noisy-label"},
    {Method::dp_sgd, "dp-sgd"},
    {Method::resample, "resample"},
    {Method::adversarial_defense, "adversarial-defense"},
};

nlohmann::json train_json(const nn::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"l2_coeff", c.l2_coeff}};
}

nn::TrainConfig train_from(const nlohmann::json& j, nn::TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.l2_coeff = j.value("l2_coeff", c.l2_coeff);
  return c;
}

nlohmann::json ihvp_json(const nn::IhvpConfig& c) {
  return {{"method", c.method == nn::IhvpMethod::conjugate_gradient ? "conjugate-gradient"
                                                                    : "stochastic-recursive"},
          {"damping", c.damping},
          {"max_iters", c.max_iters},
          {"tolerance", c.tolerance},
          {"sample_count", c.sample_count},
          {"hvp", c.hvp == nn::HvpMethod::exact ? "exact" : "finite-difference"},
          {"recursion_scale", c.recursion_scale},
          {"recursion_batch", c.recursion_batch}};
}

nn::IhvpConfig ihvp_from(const nlohmann::json& j, nn::IhvpConfig c) {
  if (j.contains("method")) {
    const auto m = j.at("method").get<std::string>();
    if (m == "conjugate-gradient") c.method = nn::IhvpMethod::conjugate_gradient;
    else if (m == "stochastic-recursive") c.method = nn::IhvpMethod::stochastic_recursive;
    else throw ConfigError("unknown ihvp method '" + m + "'");
  }
  if (j.contains("hvp")) {
    const auto m = j.at("hvp").get<std::string>();
    if (m == "exact") c.hvp = nn::HvpMethod::exact;
    else if (m == "finite-difference") c.hvp = nn::HvpMethod::finite_difference;
    else throw ConfigError("unknown hvp method '" + m + "'");
  }
  c.damping = j.value("damping", c.damping);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.sample_count = j.value("sample_count", c.sample_count);
  c.recursion_scale = j.value("recursion_scale", c.recursion_scale);
  c.recursion_batch = j.value("recursion_batch", c.recursion_batch);
  return c;
}

nlohmann::json pool_json(const shadow::PoolConfig& c) {
  return {{"n_total", c.n_total},
          {"k_reference", c.k_reference},
          {"budget", c.budget},
          {"extra_columns", c.extra_columns},
          {"balanced", c.balanced},
          {"ihvp", ihvp_json(c.ihvp)},
          {"subset_size", c.shadow.subset_size},
          {"controlled_rate", c.shadow.controlled_rate}};
}

shadow::PoolConfig pool_from(const nlohmann::json& j, shadow::PoolConfig c) {
  c.n_total = j.value("n_total", c.n_total);
  c.k_reference = j.value("k_reference", c.k_reference);
  c.budget = j.value("budget", c.budget);
  c.extra_columns = j.value("extra_columns", c.extra_columns);
  c.balanced = j.value("balanced", c.balanced);
  if (j.contains("ihvp")) c.ihvp = ihvp_from(j.at("ihvp"), c.ihvp);
  c.shadow.subset_size = j.value("subset_size", c.shadow.subset_size);
  c.shadow.controlled_rate = j.value("controlled_rate", c.shadow.controlled_rate);
  return c;
}

std::string delimiter_string(char d) { return std::string(1, d); }

}  // namespace

std::string to_string(Method m) {
  for (const auto& [k, name] : kMethods)
    if (k == m) return name;
  return "?";
}

Method parse_method(const std::string& name) {
  for (const auto& [k, n] : kMethods)
    if (name == n) return k;
  throw ConfigError("unknown method '" + name + "'");
}

bool uses_defender_pool(Method m) {
  return m == Method::dshare || m == Method::ours_r || m == Method::ours_a ||
         m == Method::adversarial_defense;
}

ExperimentConfig::ExperimentConfig() {
  target_train.learning_rate = 0.05;
  target_train.batch_size = 32;
  target_train.epochs = 10;
  for (auto* p : {&defender_pool, &adversary_pool}) {
    p->n_total = 500;
    p->k_reference = 100;
    p->budget = 1000;
    p->retain_data = false;
    p->ihvp.max_iters = 10;
    p->ihvp.sample_count = 256;
    p->ihvp.tolerance = 1e-3;
    p->shadow.subset_size = 2000;
  }
  // The adversary trains every shadow.
  adversary_pool.k_reference = adversary_pool.n_total;
  attack.train.learning_rate = 0.01;
  attack.train.batch_size = 32;
  attack.train.epochs = 30;
}

void ExperimentConfig::validate() const {
  property.validate();
  dataset.schema.validate();
  if (n_cases < 1) throw ConfigError("n_cases must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(split.test_fraction > 0 && split.test_fraction < 1))
    throw ConfigError("test_fraction must be in (0, 1)");
  if (mode == attack::InfoKind::black_box && queries < 1)
    throw ConfigError("black-box mode needs queries >= 1");
  target_train.validate();
  defender_pool.validate();
  adversary_pool.validate();
  attack.validate();
  kernel.validate();
  arms_race.validate();
  baselines.dp.validate();
  if (!(baselines.flip_frac > 0 && baselines.flip_frac < 1)) throw ConfigError("flip_frac must be in (0, 1)");
  if (!(baselines.drop_frac > 0 && baselines.drop_frac < 1)) throw ConfigError("drop_frac must be in (0, 1)");
  if (!(baselines.gamma >= 0)) throw ConfigError("gamma must be >= 0");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json ds = {{"path", dataset.path},
                       {"delimiter", delimiter_string(dataset.delimiter)},
                       {"schema", dataset.schema.to_json()},
                       {"synthetic",
                        {{"rows", dataset.synthetic.rows},
                         {"default_rate", dataset.synthetic.default_rate},
                         {"default_effect", dataset.synthetic.default_effect},
                         {"base_logit", dataset.synthetic.base_logit},
                         {"seed", dataset.synthetic.seed}}}};
  return {{"dataset", ds},
          {"property", property.to_json()},
          {"mode", attack::to_string(mode)},
          {"queries", queries},
          {"n_cases", n_cases},
          {"split",
           {{"provider", split.provider},
            {"target_allotment", split.target_allotment},
            {"target_rows", split.target_rows},
            {"test_fraction", split.test_fraction}}},
          {"target",
           {{"hidden", target_hidden},
            {"train", train_json(target_train)},
            {"init_seed", init_seed ? nlohmann::json(*init_seed) : nlohmann::json(nullptr)}}},
          {"defender_pool", pool_json(defender_pool)},
          {"adversary_pool", pool_json(adversary_pool)},
          {"attack", {{"hidden", attack.hidden}, {"train", train_json(attack.train)}}},
          {"kernel",
           {{"sigma2", kernel.sigma2},
            {"distance_scale", kernel.scale == attack::DistanceScale::raw ? "raw" : "standardized"}}},
          {"arms_race", arms_race.to_json()},
          {"baselines",
           {{"flip_frac", baselines.flip_frac},
            {"dp_epsilon", baselines.dp.epsilon},
            {"clip_norm", baselines.dp.clip_norm},
            {"drop_frac", baselines.drop_frac},
            {"gamma", baselines.gamma}}},
          {"method", to_string(method)},
          {"evaluation_attack", responsive_evaluation ? "responsive" : "static"},
          {"seed", seed},
          {"workers", workers}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.workers = default_workers();
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.path = d.value("path", c.dataset.path);
      if (d.contains("delimiter")) {
        const auto s = d.at("delimiter").get<std::string>();
        if (s.size() != 1) throw ConfigError("delimiter must be a single character");
        c.dataset.delimiter = s[0];
      }
      if (d.contains("schema")) c.dataset.schema = data::Schema::from_json(d.at("schema"));
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        auto& y = c.dataset.synthetic;
        y.rows = s.value("rows", y.rows);
        y.default_rate = s.value("default_rate", y.default_rate);
        y.default_effect = s.value("default_effect", y.default_effect);
        y.base_logit = s.value("base_logit", y.base_logit);
        y.seed = s.value("seed", y.seed);
      }
    }
    if (j.contains("property")) c.property = data::PropertySpec::from_json(j.at("property"));
    if (j.contains("mode")) c.mode = attack::parse_info_kind(j.at("mode").get<std::string>());
    c.queries = j.value("queries", c.queries);
    c.n_cases = j.value("n_cases", c.n_cases);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.provider = s.value("provider", c.split.provider);
      c.split.target_allotment = s.value("target_allotment", c.split.target_allotment);
      c.split.target_rows = s.value("target_rows", c.split.target_rows);
      c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
    }
    if (j.contains("target")) {
      const auto& t = j.at("target");
      c.target_hidden = t.value("hidden", c.target_hidden);
      if (t.contains("train")) c.target_train = train_from(t.at("train"), c.target_train);
      if (t.contains("init_seed")) {
        if (t.at("init_seed").is_null()) c.init_seed.reset();
        else c.init_seed = t.at("init_seed").get<std::uint64_t>();
      }
    }
    if (j.contains("defender_pool")) c.defender_pool = pool_from(j.at("defender_pool"), c.defender_pool);
    if (j.contains("adversary_pool")) c.adversary_pool = pool_from(j.at("adversary_pool"), c.adversary_pool);
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      c.attack.hidden = a.value("hidden", c.attack.hidden);
      if (a.contains("train")) c.attack.train = train_from(a.at("train"), c.attack.train);
    }
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      c.kernel.sigma2 = k.value("sigma2", c.kernel.sigma2);
      if (k.contains("distance_scale")) {
        const auto s = k.at("distance_scale").get<std::string>();
        if (s == "raw") c.kernel.scale = attack::DistanceScale::raw;
        else if (s == "standardized") c.kernel.scale = attack::DistanceScale::standardized;
        else throw ConfigError("unknown distance_scale '" + s + "'");
      }
    }
    if (j.contains("arms_race")) c.arms_race = defense::ArmsRaceConfig::from_json(j.at("arms_race"), c.arms_race);
    if (j.contains("baselines")) {
      const auto& b = j.at("baselines");
      c.baselines.flip_frac = b.value("flip_frac", c.baselines.flip_frac);
      c.baselines.dp.epsilon = b.value("dp_epsilon", c.baselines.dp.epsilon);
      c.baselines.dp.clip_norm = b.value("clip_norm", c.baselines.dp.clip_norm);
      c.baselines.drop_frac = b.value("drop_frac", c.baselines.drop_frac);
      c.baselines.gamma = b.value("gamma", c.baselines.gamma);
    }
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("evaluation_attack")) {
      const auto e = j.at("evaluation_attack").get<std::string>();
      if (e != "responsive" && e != "static") throw ConfigError("evaluation_attack must be responsive or static");
      c.responsive_evaluation = e == "responsive";
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

void SplitConfig::check(Index dataset_rows) const {
  if (provider >= dataset_rows)
    throw ConfigError("provider share (" + std::to_string(provider) + ") must be smaller than the dataset (" +
                      std::to_string(dataset_rows) + " rows)");
  if (target_allotment >= provider)
    throw ConfigError("target allotment must be smaller than the provider share");
  if (target_rows > target_allotment) throw ConfigError("target_rows exceeds the target allotment");
}

int default_workers() {
  if (const char* env = std::getenv("CPI_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return ExperimentConfig::from_json(nlohmann::json::parse(in, nullptr, true, true));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace cpi::harness
