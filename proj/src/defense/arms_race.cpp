#include "cpi/defense/arms_race.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "cpi/errors.hpp"
#include "cpi/util/seed.hpp"

namespace cpi::defense {

std::string to_string(PropertyLoss loss) {
  return loss == PropertyLoss::complement ? "complement" : "cross-entropy";
}

PropertyLoss parse_property_loss(const std::string& name) {
  if (name == "complement") return PropertyLoss::complement;
  if (name == "cross-entropy") return PropertyLoss::cross_entropy;
  throw ConfigError("unknown property_loss '" + name + "' (expected complement or cross-entropy)");
}

void ArmsRaceConfig::validate() const {
  if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be > 0 (or 0 for the default)");
  if (defense_steps < 1) throw ConfigError("defense_steps must be >= 1");
  if (!(defense_lr > 0)) throw ConfigError("defense_lr must be > 0");
  if (attack_epochs < 1) throw ConfigError("attack_epochs must be >= 1");
  kernel.validate();
  attack.validate();
}

double ArmsRaceConfig::epsilon_for(Eigen::Index p) const {
  return epsilon > 0 ? epsilon : 1e-3 * std::sqrt(double(p));
}

nlohmann::json ArmsRaceConfig::to_json() const {
  return {{"lambda", lambda},
          {"max_iters", max_iters},
          {"epsilon", epsilon},
          {"defense_steps", defense_steps},
          {"defense_lr", defense_lr},
          {"decay", decay},
          {"attack_epochs", attack_epochs},
          {"responsive", responsive},
          {"property_loss", to_string(property_loss)},
          {"sigma2", kernel.sigma2},
          {"distance_scale", kernel.scale == attack::DistanceScale::raw ? "raw" : "standardized"}};
}

ArmsRaceConfig ArmsRaceConfig::from_json(const nlohmann::json& j) { return from_json(j, ArmsRaceConfig{}); }

ArmsRaceConfig ArmsRaceConfig::from_json(const nlohmann::json& j, const ArmsRaceConfig& base) {
  ArmsRaceConfig c = base;
  c.lambda = j.value("lambda", c.lambda);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.defense_steps = j.value("defense_steps", c.defense_steps);
  c.defense_lr = j.value("defense_lr", c.defense_lr);
  c.decay = j.value("decay", c.decay);
  c.attack_epochs = j.value("attack_epochs", c.attack_epochs);
  c.responsive = j.value("responsive", c.responsive);
  if (j.contains("property_loss")) c.property_loss = parse_property_loss(j.at("property_loss").get<std::string>());
  c.kernel.sigma2 = j.value("sigma2", c.kernel.sigma2);
  if (j.contains("distance_scale")) {
    const auto s = j.at("distance_scale").get<std::string>();
    if (s == "raw") c.kernel.scale = attack::DistanceScale::raw;
    else if (s == "standardized") c.kernel.scale = attack::DistanceScale::standardized;
    else throw ConfigError("unknown distance_scale '" + s + "'");
  }
  c.validate();
  return c;
}

namespace {

attack::ModelInfo info_with_order(const nn::Mlp& target, const attack::InfoMode& mode,
                                  const std::vector<Eigen::Index>* map) {
  if (mode.kind == attack::InfoKind::black_box)
    return attack::extract_info_blackbox(target, mode.query_set);
  const nn::Vector<double> theta = target.flatten();
  attack::ModelInfo info(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) info[i] = theta[(*map)[i]];
  return info;
}

}  // namespace

nn::Vector<double> defense_gradient(const nn::Mlp& target, const attack::AttackModel& attack,
                                    const ProviderData& data, const attack::InfoMode& mode,
                                    double lambda, const std::vector<std::vector<int>>* order,
                                    double* property_loss, double* task_loss,
                                    PropertyLoss objective) {
  std::vector<Eigen::Index> map;
  if (mode.kind == attack::InfoKind::white_box)
    map = attack::flat_permutation(target.layer_sizes, order ? *order : attack::canonical_order(target));
  const attack::ModelInfo info = info_with_order(target, mode, &map);
  double lp = 0;
  attack::ModelInfo g_info = attack::attack_loss_gradient(attack, info, data.true_class, &lp);
  if (objective == PropertyLoss::complement) {
    // d log(1 - p) = p / (1 - p) * d(-log p)
    const double p = std::exp(-lp);
    g_info *= p / std::max(1 - p, 1e-12);
  }

  nn::Vector<double> g_p;
  if (mode.kind == attack::InfoKind::white_box) {
    g_p = nn::Vector<double>::Zero(g_info.size());
    for (Eigen::Index i = 0; i < g_info.size(); ++i) g_p[map[i]] += g_info[i];
  } else {
    const Eigen::Index q = mode.query_set.rows(), c = target.output_width();
    const nn::Matrix<double> upstream = Eigen::Map<const nn::RowMatrix<double>>(g_info.data(), q, c);
    g_p = nn::output_vjp(target, mode.query_set, upstream);
  }
  const auto task = nn::loss_and_gradient(target, data.x, data.y, 0.0);
  if (property_loss) *property_loss = lp;
  if (task_loss) *task_loss = task.loss;
  return g_p - lambda * task.grad;
}

StepResult defense_step(const nn::Mlp& target, const attack::AttackModel& attack,
                        const ProviderData& data, const attack::InfoMode& mode, double lambda,
                        int steps, double lr, PropertyLoss objective) {
  if (steps < 1) throw ConfigError("defense steps must be >= 1");
  if (!(lr > 0)) throw ConfigError("defense learning rate must be > 0");
  mode.validate();
  StepResult out;
  out.params = target;
  // The neuron order is frozen for the whole step.
  std::vector<std::vector<int>> order;
  if (mode.kind == attack::InfoKind::white_box) order = attack::canonical_order(target);
  nn::Vector<double> theta = target.flatten();
  for (int s = 0; s < steps; ++s) {
    double lp = 0, lt = 0;
    const nn::Vector<double> g =
        defense_gradient(out.params, attack, data, mode, lambda, &order, &lp, &lt, objective);
    if (s == 0) {
      out.property_loss_before = lp;
      out.task_loss_before = lt;
    }
    if (!g.allFinite() || !std::isfinite(lp) || !std::isfinite(lt)) {
      out.aborted = true;
      break;
    }
    const nn::Vector<double> next = theta + lr * g;
    if (!next.allFinite()) {
      out.aborted = true;
      break;
    }
    theta = next;
    out.params.assign(theta);
    ++out.steps_taken;
  }
  defense_gradient(out.params, attack, data, mode, lambda, &order, &out.property_loss_after,
                   &out.task_loss_after, objective);
  return out;
}

namespace {

double weighted_attack_loss(const attack::AttackModel& a, const attack::AttackDataset& ds) {
  const nn::Matrix<double> p = nn::forward(a.net, a.scaler.apply(ds.features));
  return nn::loss_xent<double>(p, ds.classes, ds.weights);
}

}  // namespace

attack::AttackModel attack_refine(attack::AttackModel a, const attack::AttackDataset& ds,
                                  const attack::ModelInfo& target_info, bool responsive,
                                  const attack::KernelConfig& kernel, const nn::TrainConfig& cfg,
                                  double* attack_loss) {
  attack::AttackDataset weighted = ds;
  if (responsive) weighted = attack::estimate_weights(ds, target_info, kernel);
  a = attack::continue_training(std::move(a), weighted, cfg);
  if (attack_loss) *attack_loss = weighted_attack_loss(a, weighted);
  return a;
}

nlohmann::json ArmsRaceTrace::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records)
    rows.push_back({{"iter", r.iter},
                    {"theta_change", r.theta_change},
                    {"property_loss", r.property_loss},
                    {"task_loss", r.task_loss},
                    {"attack_loss", r.attack_loss},
                    {"seconds", r.seconds}});
  return {{"terminated_by", terminated_by}, {"epsilon", epsilon}, {"records", rows}};
}

std::string ArmsRaceTrace::to_csv() const {
  std::ostringstream s;
  s << std::setprecision(17) << "iter,theta_change,property_loss,task_loss,attack_loss,seconds\n";
  for (const auto& r : records)
    s << r.iter << ',' << r.theta_change << ',' << r.property_loss << ',' << r.task_loss << ','
      << r.attack_loss << ',' << r.seconds << '\n';
  return s.str();
}

ArmsRaceResult arms_race(const nn::Mlp& target0, const attack::AttackDataset& shadows,
                         const ProviderData& data, const attack::InfoMode& mode,
                         const ArmsRaceConfig& cfg) {
  cfg.validate();
  mode.validate();
  if (shadows.info_length() != mode.info_length(target0.layer_sizes))
    throw ShapeError("shadow info length does not match the target architecture");
  const Stopwatch total;
  ArmsRaceResult res;
  res.trace.epsilon = cfg.epsilon_for(target0.parameter_count());

  attack::AttackTrainConfig init = cfg.attack;
  attack::AttackDataset first = shadows;
  if (cfg.responsive) first = attack::estimate_weights(shadows, attack::extract_info(target0, mode), cfg.kernel);
  res.attack = attack::train_attack(first, init);

  nn::TrainConfig refine = cfg.attack.train;
  refine.epochs = cfg.attack_epochs;
  nn::Mlp theta = target0;
  res.trace.terminated_by = "max_iters";
  for (int t = 1; t <= cfg.max_iters; ++t) {
    const Stopwatch round;
    const double lr = cfg.decay ? cfg.defense_lr / std::sqrt(double(t)) : cfg.defense_lr;
    StepResult step = defense_step(theta, res.attack, data, mode, cfg.lambda,
                                   cfg.defense_steps, lr, cfg.property_loss);
    TraceRecord rec;
    rec.iter = t;
    rec.theta_change = (step.params.flatten() - theta.flatten()).norm();
    rec.property_loss = step.property_loss_after;
    rec.task_loss = step.task_loss_after;
    theta = std::move(step.params);
    refine.seed = derive_seed(cfg.attack.train.seed, 0xa77, t);
    res.attack = attack_refine(std::move(res.attack), shadows, attack::extract_info(theta, mode),
                               cfg.responsive, cfg.kernel, refine, &rec.attack_loss);
    rec.seconds = round.seconds();
    res.trace.records.push_back(rec);
    if (rec.theta_change < res.trace.epsilon) {
      res.trace.terminated_by = "epsilon";
      break;
    }
  }
  res.secure = std::move(theta);
  res.seconds = total.seconds();
  return res;
}

ArmsRaceResult arms_race(const nn::Mlp& target0, const shadow::ShadowPool& pool,
                         const ProviderData& data, const data::PropertySpec& spec,
                         const attack::InfoMode& mode, const ArmsRaceConfig& cfg) {
  return arms_race(target0, attack::build_attack_dataset(pool, mode, spec.class_count()), data,
                   mode, cfg);
}

}  // namespace cpi::defense
