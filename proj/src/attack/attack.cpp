#include "cpi/attack/attack.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>

#include "cpi/errors.hpp"
#include "cpi/nn/io.hpp"

namespace cpi::attack {

namespace fs = std::filesystem;

AttackDataset build_attack_dataset(const shadow::ShadowPool& pool, const InfoMode& mode,
                                   int class_count) {
  mode.validate();
  if (pool.entries.empty()) throw ConfigError("empty shadow pool");
  AttackDataset ds;
  ds.class_count = class_count;
  const auto& sizes = pool.entries.front().params.layer_sizes;
  ds.features.resize(pool.size(), mode.info_length(sizes));
  ds.classes.resize(pool.size());
  for (int i = 0; i < pool.size(); ++i) {
    const auto& e = pool.entries[i];
    if (e.params.layer_sizes != sizes)
      throw ShapeError("pool entry " + std::to_string(i) + " has a different architecture");
    if (e.property_class < 0 || e.property_class >= class_count)
      throw ConfigError("pool entry " + std::to_string(i) + " has class outside [0, C)");
    try {
      ds.features.row(i) = extract_info(e.params, mode).transpose();
    } catch (const Error& err) {
      throw ShapeError("pool entry " + std::to_string(i) + ": " + err.what());
    }
    ds.classes[i] = e.property_class;
  }
  return ds;
}

void KernelConfig::validate() const {
  if (!(sigma2 > 0) || !std::isfinite(sigma2)) throw ConfigError("sigma2 must be > 0");
}

nn::Vector<double> kernel_weights(const nn::Vector<double>& d, double sigma2) {
  if (!(sigma2 > 0)) throw ConfigError("sigma2 must be > 0");
  if (d.size() == 0) throw ConfigError("no samples to weight");
  const nn::Vector<double> logk = -d / (2 * sigma2);
  if (!logk.allFinite())
    throw NumericError("kernel log-values are not finite; increase sigma2 or check the info vectors");
  const double mx = logk.maxCoeff();
  const nn::Vector<double> k = (logk.array() - mx).exp();
  return double(d.size()) * k / k.sum();
}

nn::Vector<double> squared_distances(const AttackDataset& ds, const ModelInfo& target,
                                     DistanceScale scale) {
  if (target.size() != ds.info_length())
    throw ShapeError("target info length " + std::to_string(target.size()) +
                     " does not match attack dataset length " + std::to_string(ds.info_length()));
  if (scale == DistanceScale::raw)
    return (ds.features.rowwise() - target.transpose()).rowwise().squaredNorm();
  const Standardizer s = Standardizer::fit(ds.features);
  const nn::Matrix<double> z = s.apply(ds.features);
  const nn::RowVector<double> t = (target.transpose() - s.mean).cwiseQuotient(s.scale);
  return (z.rowwise() - t).rowwise().squaredNorm() / double(ds.info_length());
}

AttackDataset estimate_weights(const AttackDataset& ds, const ModelInfo& target,
                               const KernelConfig& kernel) {
  kernel.validate();
  AttackDataset out = ds;
  out.weights = kernel_weights(squared_distances(ds, target, kernel.scale), kernel.sigma2);
  return out;
}

double effective_sample_size(const nn::Vector<double>& w) {
  return w.sum() * w.sum() / w.squaredNorm();
}

Standardizer Standardizer::fit(const nn::Matrix<double>& x) {
  if (x.rows() == 0) throw ConfigError("cannot standardise an empty matrix");
  Standardizer s;
  s.mean = x.colwise().mean();
  s.scale = ((x.rowwise() - s.mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 1e-12)) s.scale[j] = 1;
  return s;
}

nn::Matrix<double> Standardizer::apply(const nn::Matrix<double>& x) const {
  if (x.cols() != mean.size()) throw ShapeError("standardiser width mismatch");
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

nlohmann::json Standardizer::to_json() const {
  return {{"mean", std::vector<double>(mean.begin(), mean.end())},
          {"scale", std::vector<double>(scale.begin(), scale.end())}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("scale").get<std::vector<double>>();
  if (m.size() != s.size()) throw IoError("standardiser mean/scale length mismatch");
  Standardizer out;
  out.mean = Eigen::Map<const nn::RowVector<double>>(m.data(), Eigen::Index(m.size()));
  out.scale = Eigen::Map<const nn::RowVector<double>>(s.data(), Eigen::Index(s.size()));
  return out;
}

void AttackTrainConfig::validate() const {
  train.validate();
  for (int h : hidden)
    if (h < 1) throw ConfigError("attack hidden widths must be >= 1");
}

namespace {

void check_trainable(const AttackDataset& ds) {
  if (ds.size() == 0) throw ConfigError("empty attack dataset");
  std::set<int> classes(ds.classes.begin(), ds.classes.end());
  if (classes.size() < 2)
    throw ConfigError("attack dataset has a single property class; attack training degenerates");
  if (ds.weighted() && ds.weights.size() != ds.size())
    throw ShapeError("attack weights do not match sample count");
}

}  // namespace

AttackModel train_attack(const AttackDataset& ds, const AttackTrainConfig& cfg) {
  cfg.validate();
  check_trainable(ds);
  AttackModel a;
  a.scaler = Standardizer::fit(ds.features);
  std::vector<int> sizes{int(ds.info_length())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(ds.class_count);
  a.net = nn::mlp_init(sizes, cfg.init_seed);
  return continue_training(std::move(a), ds, cfg.train);
}

AttackModel continue_training(AttackModel attack, const AttackDataset& ds, const nn::TrainConfig& cfg) {
  check_trainable(ds);
  const nn::Matrix<double> x = attack.scaler.apply(ds.features);
  attack.net = nn::sgd_train(std::move(attack.net), x, ds.classes, cfg, ds.weights).params;
  return attack;
}

Inference infer_property(const AttackModel& attack, const ModelInfo& target) {
  if (target.size() != attack.net.input_width())
    throw ShapeError("target info length " + std::to_string(target.size()) +
                     " does not match attack input width " + std::to_string(attack.net.input_width()));
  const nn::Matrix<double> x = attack.scaler.apply(target.transpose());
  const nn::Matrix<double> p = nn::forward(attack.net, x);
  Inference out;
  out.probabilities = p.row(0).transpose();
  out.cls = nn::argmax_rows(p)[0];
  return out;
}

ModelInfo attack_loss_gradient(const AttackModel& attack, const ModelInfo& target, int cls,
                               double* loss) {
  const nn::Matrix<double> x = attack.scaler.apply(target.transpose());
  const nn::Labels y = nn::Labels::Constant(1, cls);
  if (loss) *loss = nn::loss_xent<double>(nn::forward(attack.net, x), y);
  const nn::Matrix<double> gz = nn::input_gradient(attack.net, x, y);
  return gz.row(0).cwiseQuotient(attack.scaler.scale).transpose();
}

void save_attack_dataset(const std::string& dir, const AttackDataset& ds, const InfoMode& mode,
                         const KernelConfig* kernel) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  {
    std::ofstream out(fs::path(dir) / "features.bin", std::ios::binary);
    if (!out) throw IoError("cannot write attack features in '" + dir + "'");
    const std::uint64_t dims[2] = {std::uint64_t(ds.size()), std::uint64_t(ds.info_length())};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    const nn::RowMatrix<double> rm = ds.features;
    out.write(reinterpret_cast<const char*>(rm.data()), std::streamsize(rm.size() * sizeof(double)));
    if (!out) throw IoError("failed writing attack features");
  }
  nlohmann::json j = {{"format", "cpi-attack-dataset-1"},
                      {"mode", to_string(mode.kind)},
                      {"query_hash", mode.query_hash()},
                      {"class_count", ds.class_count},
                      {"classes", std::vector<int>(ds.classes.begin(), ds.classes.end())}};
  if (ds.weighted()) j["weights"] = std::vector<double>(ds.weights.begin(), ds.weights.end());
  if (kernel) {
    j["sigma2"] = kernel->sigma2;
    j["distance_scale"] = kernel->scale == DistanceScale::raw ? "raw" : "standardized";
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << std::setprecision(17) << j.dump(1) << '\n';
  if (!out) throw IoError("cannot write attack manifest in '" + dir + "'");
}

AttackDataset load_attack_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("no attack manifest in '" + dir + "'");
  AttackDataset ds;
  try {
    const auto j = nlohmann::json::parse(mf);
    ds.class_count = j.at("class_count").get<int>();
    const auto cls = j.at("classes").get<std::vector<int>>();
    ds.classes = Eigen::Map<const nn::Labels>(cls.data(), Eigen::Index(cls.size()));
    if (j.contains("weights")) {
      const auto w = j.at("weights").get<std::vector<double>>();
      ds.weights = Eigen::Map<const nn::Vector<double>>(w.data(), Eigen::Index(w.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed attack manifest: ") + e.what());
  }
  std::ifstream in(fs::path(dir) / "features.bin", std::ios::binary);
  std::uint64_t dims[2];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims))) throw IoError("truncated attack features");
  if (dims[0] != std::uint64_t(ds.classes.size())) throw IoError("attack feature rows do not match classes");
  nn::RowMatrix<double> rm(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  if (!in.read(reinterpret_cast<char*>(rm.data()), std::streamsize(rm.size() * sizeof(double))))
    throw IoError("truncated attack features");
  ds.features = rm;
  return ds;
}

void save_attack_model(const std::string& path, const AttackModel& attack) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const nlohmann::json j = {{"format", "cpi-attack-1"},
                            {"scaler", attack.scaler.to_json()},
                            {"net", nn::model_to_json(attack.net)}};
  out << std::setprecision(17) << j.dump() << '\n';
}

AttackModel load_attack_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    AttackModel a;
    a.scaler = Standardizer::from_json(j.at("scaler"));
    a.net = nn::model_from_json(j.at("net"));
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed attack model: ") + e.what());
  }
}

}  // namespace cpi::attack
