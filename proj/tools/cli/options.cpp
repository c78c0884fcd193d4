#include "options.hpp"

#include <charconv>
#include <fstream>

#include "cpi/errors.hpp"

namespace cpi::cli {

const std::vector<FlagSpec>& flag_table() {
  static const std::vector<FlagSpec> table = {
      {"input", "/dataset/path", FlagKind::text, "CSV file to ingest (synthetic data when empty)"},
      {"delimiter", "/dataset/delimiter", FlagKind::text, "CSV field delimiter"},
      {"synthetic-rows", "/dataset/synthetic/rows", FlagKind::integer, "rows of synthetic data"},
      {"seed", "/seed", FlagKind::integer, "master seed"},
      {"workers", "/workers", FlagKind::integer, "worker threads"},
      {"cases", "/n_cases", FlagKind::integer, "number of target models"},
      {"method", "/method", FlagKind::text, "defense method"},
      {"mode", "/mode", FlagKind::text, "white-box or black-box"},
      {"queries", "/queries", FlagKind::integer, "black-box query set size"},
      {"provider", "/split/provider", FlagKind::integer, "rows kept by the provider"},
      {"target-rows", "/split/target_rows", FlagKind::integer, "rows sampled per target (train + test)"},
      {"hidden", "/target/hidden", FlagKind::list, "hidden layer widths, comma separated"},
      {"epochs", "/target/train/epochs", FlagKind::integer, "target training epochs"},
      {"lr", "/target/train/learning_rate", FlagKind::real, "target learning rate"},
      {"n-total", "/{pool}/n_total", FlagKind::integer, "shadow models in the pool (N)"},
      {"k", "/{pool}/k_reference", FlagKind::integer, "reference shadow models (K)"},
      {"budget", "/{pool}/budget", FlagKind::integer, "perturbation budget in cells"},
      {"subset", "/{pool}/subset_size", FlagKind::integer, "rows per shadow training set"},
      {"sigma2", "/kernel/sigma2", FlagKind::real, "kernel width"},
      {"lambda", "/arms_race/lambda", FlagKind::real, "task-loss trade-off"},
      {"max-iters", "/arms_race/max_iters", FlagKind::integer, "arms-race rounds (T)"},
      {"epsilon", "/arms_race/epsilon", FlagKind::real, "theta-change threshold (0: 1e-3*sqrt(p))"},
      {"defense-lr", "/arms_race/defense_lr", FlagKind::real, "defense step size"},
      {"defense-steps", "/arms_race/defense_steps", FlagKind::integer, "defense steps per round"},
      {"property-loss", "/arms_race/property_loss", FlagKind::text, "complement or cross-entropy"},
      {"flip-frac", "/baselines/flip_frac", FlagKind::real, "noisy-label flip fraction"},
      {"dp-epsilon", "/baselines/dp_epsilon", FlagKind::real, "DP-SGD privacy budget"},
      {"clip-norm", "/baselines/clip_norm", FlagKind::real, "DP-SGD clip norm"},
      {"drop-frac", "/baselines/drop_frac", FlagKind::real, "resampling drop fraction"},
      {"gamma", "/baselines/gamma", FlagKind::real, "adversarial-defense trade-off"},
      {"static", "/evaluation_attack", FlagKind::toggle, "use the static (unweighted) attack"},
  };
  return table;
}

namespace {

const FlagSpec& find_flag(const std::string& name) {
  for (const auto& f : flag_table())
    if (f.name == name) return f;
  throw std::logic_error("no flag named " + name);
}

template <typename T>
T parse_number(const std::string& flag, const std::string& text) {
  T v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw ConfigError("--" + flag + " expects a number, got '" + text + "'");
  return v;
}

}  // namespace

nlohmann::json flag_value(const FlagSpec& spec, const std::string& text) {
  switch (spec.kind) {
    case FlagKind::integer:
      if (!text.empty() && text[0] == '-') return parse_number<long long>(spec.name, text);
      return parse_number<unsigned long long>(spec.name, text);
    case FlagKind::real:
      return parse_number<double>(spec.name, text);
    case FlagKind::list: {
      nlohmann::json out = nlohmann::json::array();
      std::size_t at = 0;
      while (at <= text.size()) {
        const auto comma = std::min(text.find(',', at), text.size());
        out.push_back(parse_number<int>(spec.name, text.substr(at, comma - at)));
        at = comma + 1;
      }
      return out;
    }
    case FlagKind::toggle:
      return "static";
    case FlagKind::text:
      break;
  }
  return text;
}

void Overrides::attach(CLI::App* app, const std::vector<std::string>& names) {
  app->add_option("--config", config_path_, "experiment config file (JSON)")->check(CLI::ExistingFile);
  for (const auto& n : names) {
    const auto& spec = find_flag(n);
    if (spec.kind == FlagKind::toggle)
      options_[n] = app->add_flag("--" + n, toggles_[n], spec.help);
    else
      options_[n] = app->add_option("--" + n, values_[n], spec.help);
  }
}

harness::ExperimentConfig Overrides::resolve() const {
  nlohmann::json file = nlohmann::json::object();
  if (!config_path_.empty()) file = harness::load_config(config_path_).to_json();
  nlohmann::json j = harness::ExperimentConfig::from_json(file).to_json();
  for (const auto& [name, opt] : options_) {
    if (opt->count() == 0) continue;
    const auto& spec = find_flag(name);
    std::string pointer = spec.pointer;
    if (const auto at = pointer.find("{pool}"); at != std::string::npos)
      pointer.replace(at, 6, pool_section_);
    const std::string text = spec.kind == FlagKind::toggle ? "" : values_.at(name);
    j[nlohmann::json::json_pointer(pointer)] = flag_value(spec, text);
  }
  return harness::ExperimentConfig::from_json(j);
}

}  // namespace cpi::cli
