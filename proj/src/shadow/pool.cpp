#include "cpi/shadow/pool.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cpi/data/sampling.hpp"
#include "cpi/errors.hpp"
#include "cpi/nn/io.hpp"
#include "cpi/util/seed.hpp"

namespace cpi::shadow {

namespace fs = std::filesystem;

void ShadowTrainConfig::validate() const {
  train.validate();
  if (subset_size < 1) throw ConfigError("shadow subset_size must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
}

void PoolConfig::validate() const {
  if (k_reference < 1) throw ConfigError("K must be >= 1");
  if (n_total < k_reference) throw ConfigError("N must be >= K");
  if (n_total > k_reference && budget < 1) throw ConfigError("perturbation budget must be >= 1");
  ihvp.validate();
  shadow.validate();
}

std::vector<int> architecture(const data::TabularDataset& encoded, const std::vector<int>& hidden) {
  std::vector<int> sizes{int(encoded.features().cols())};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(int(encoded.schema().columns[encoded.schema().label_index()].vocabulary.size()));
  return sizes;
}

namespace {

ShadowEntry train_one(const data::TabularDataset& aux, const ShadowTrainConfig& cfg,
                      const data::PropertySpec& spec, std::uint64_t seed) {
  data::TabularDataset subset;
  if (cfg.controlled_rate) {
    std::mt19937_64 rng(derive_seed(seed, 1));
    std::uniform_real_distribution<double> rate(spec.sampling_range.first, spec.sampling_range.second);
    subset = data::sample_with_rate(aux, cfg.subset_size, rate(rng), spec, derive_seed(seed, 2));
  } else {
    subset = data::sample_subset(aux, cfg.subset_size, derive_seed(seed, 2));
  }
  nn::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, 4);
  ShadowEntry e;
  e.params = nn::sgd_train(nn::mlp_init(architecture(subset, cfg.hidden), cfg.init_seed ? *cfg.init_seed : derive_seed(seed, 3)),
                           subset.features(), subset.labels(), tc)
                 .params;
  const auto pv = data::compute_property(subset, spec);
  e.property_value = pv.value;
  e.property_class = pv.cls;
  e.provenance.seed = seed;
  e.train_row_ids = subset.row_ids();
  e.train_data = std::move(subset);
  return e;
}

}  // namespace

std::vector<ShadowEntry> train_reference_shadows(const data::TabularDataset& aux, int k,
                                                 const ShadowTrainConfig& cfg,
                                                 const data::PropertySpec& spec,
                                                 std::uint64_t seed) {
  cfg.validate();
  if (k < 1) throw ConfigError("K must be >= 1");
  if (cfg.subset_size > aux.rows())
    throw ConfigError("shadow subset_size exceeds the auxiliary data size");
  std::vector<ShadowEntry> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    try {
      out.push_back(train_one(aux, cfg, spec, derive_seed(seed, 0x5ad0, i)));
    } catch (const Error& e) {
      throw ConfigError("reference shadow " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

InfluenceDelta influence_delta(const nn::Mlp& params, const nn::Matrix<double>& x,
                               const nn::Labels& y, const nn::Matrix<double>& z_x,
                               const nn::Labels& z_y, const nn::Matrix<double>& zp_x,
                               const nn::Labels& zp_y, double l2_coeff,
                               const nn::IhvpConfig& ihvp) {
  if (x.rows() == 0) throw ConfigError("influence delta needs training data");
  using nn::Reduction;
  const nn::Vector<double> empty;
  nn::Vector<double> g = nn::loss_and_gradient(params, zp_x, zp_y, 0.0, empty, Reduction::sum).grad -
                         nn::loss_and_gradient(params, z_x, z_y, 0.0, empty, Reduction::sum).grad;
  InfluenceDelta out;
  if (g.isZero(0)) {
    out.delta = nn::Vector<double>::Zero(g.size());
    out.solve.x = out.delta;
    out.solve.converged = true;
    return out;
  }
  out.solve = nn::inverse_hvp(params, x, y, g, l2_coeff, ihvp);
  out.delta = -out.solve.x / double(x.rows());
  return out;
}

ShadowEntry approximate_shadow(const ShadowEntry& ref, int ref_index,
                               const data::PerturbationKind& kind, Index budget,
                               const nn::IhvpConfig& ihvp, double l2_coeff,
                               const data::PropertySpec& spec, std::uint64_t seed) {
  if (ref.provenance.kind != Provenance::Kind::reference)
    throw ConfigError("approximate_shadow needs a reference entry");
  if (ref.train_data.rows() == 0 || !ref.train_data.is_encoded())
    throw ConfigError("reference entry has no encoded training data");
  auto res = data::perturb(ref.train_data, kind, budget, derive_seed(seed, 1));
  nn::IhvpConfig cfg = ihvp;
  cfg.seed = derive_seed(seed, 2);
  const auto& d = ref.train_data;
  const auto inf = influence_delta(ref.params, d.features(), d.labels(),
                                   res.original_rows.features(), res.original_rows.labels(),
                                   res.perturbed_rows.features(), res.perturbed_rows.labels(),
                                   l2_coeff, cfg);
  ShadowEntry e;
  e.params = ref.params;
  e.params.assign(ref.params.flatten() + inf.delta);
  const auto pv = data::compute_property(res.perturbed, spec);
  e.property_value = pv.value;
  e.property_class = pv.cls;
  e.provenance.kind = Provenance::Kind::approximated;
  e.provenance.source = ref_index;
  e.provenance.perturbation = kind;
  e.provenance.budget = budget;
  e.provenance.seed = seed;
  e.provenance.changed_rows = Index(res.changed_rows.size());
  e.provenance.ihvp_iterations = inf.solve.iterations;
  e.provenance.ihvp_residual = inf.solve.residual_norm;
  e.provenance.ihvp_converged = inf.solve.converged;
  e.train_data = std::move(res.perturbed);
  return e;
}

ShadowPool build_shadow_pool(const data::TabularDataset& aux, const PoolConfig& cfg,
                             const data::PropertySpec& spec, std::uint64_t seed) {
  cfg.validate();
  const Stopwatch total;
  ShadowPool pool;
  pool.k_reference = cfg.k_reference;
  pool.entries = train_reference_shadows(aux, cfg.k_reference, cfg.shadow, spec, derive_seed(seed, 1));
  pool.reference_seconds = total.seconds();

  const int extra = cfg.n_total - cfg.k_reference;
  std::vector<int> sources;
  std::mt19937_64 rng(derive_seed(seed, 2));
  if (cfg.balanced) {
    for (int r = 0; r < cfg.k_reference; ++r) {
      const int count = extra / cfg.k_reference + (r < extra % cfg.k_reference ? 1 : 0);
      sources.insert(sources.end(), count, r);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, cfg.k_reference - 1);
    for (int j = 0; j < extra; ++j) sources.push_back(pick(rng));
  }

  const Stopwatch approx;
  for (int j = 0; j < extra; ++j) {
    const int src = sources[j];
    const auto kind = data::random_kind(rng, cfg.extra_columns);
    ShadowEntry e;
    try {
      e = approximate_shadow(pool.entries[src], src, kind, cfg.budget, cfg.ihvp,
                             cfg.shadow.train.l2_coeff, spec, derive_seed(seed, 3, j));
    } catch (const Error& err) {
      throw NumericError("approximated shadow " + std::to_string(j) + ": " + err.what());
    }
    if (!cfg.retain_data) e.train_data = {};
    pool.entries.push_back(std::move(e));
  }
  pool.approximation_seconds = approx.seconds();
  if (!cfg.retain_data)
    for (int r = 0; r < cfg.k_reference; ++r) pool.entries[r].train_data = {};
  pool.build_seconds = total.seconds();
  return pool;
}

namespace {

std::string model_name(int i) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << i << ".model";
  return s.str();
}

}  // namespace

void save_pool(const std::string& dir, const ShadowPool& pool, const nlohmann::json& extra) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "models", ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  nlohmann::json entries = nlohmann::json::array();
  for (int i = 0; i < pool.size(); ++i) {
    const auto& e = pool.entries[i];
    nn::save_model((fs::path(dir) / "models" / model_name(i)).string(), e.params);
    nlohmann::json j = {{"model", "models/" + model_name(i)},
                        {"property_value", e.property_value},
                        {"property_class", e.property_class},
                        {"seed", e.provenance.seed}};
    if (e.provenance.kind == Provenance::Kind::reference) {
      j["provenance"] = "reference";
      j["row_ids"] = e.train_row_ids;
    } else {
      j["provenance"] = "approximated";
      j["source"] = e.provenance.source;
      j["perturbation"] = e.provenance.perturbation.name();
      j["m"] = e.provenance.perturbation.m;
      j["budget"] = e.provenance.budget;
      j["changed_rows"] = e.provenance.changed_rows;
      j["ihvp_iterations"] = e.provenance.ihvp_iterations;
      j["ihvp_residual"] = e.provenance.ihvp_residual;
      j["ihvp_converged"] = e.provenance.ihvp_converged;
    }
    entries.push_back(std::move(j));
  }
  nlohmann::json manifest = {{"format", "cpi-pool-1"},
                             {"k_reference", pool.k_reference},
                             {"n_total", pool.size()},
                             {"build_seconds", pool.build_seconds},
                             {"reference_seconds", pool.reference_seconds},
                             {"approximation_seconds", pool.approximation_seconds},
                             {"entries", entries}};
  if (!extra.is_null()) manifest["extra"] = extra;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in '" + dir + "'");
  out << std::setprecision(17) << manifest.dump(1) << '\n';
}

nlohmann::json read_pool_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError("no pool manifest in '" + dir + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed pool manifest: ") + e.what());
  }
}

ShadowPool load_pool(const std::string& dir, const data::TabularDataset* source,
                     const data::PropertySpec* spec) {
  const auto manifest = read_pool_manifest(dir);
  if (manifest.value("format", "") != "cpi-pool-1") throw IoError("unsupported pool format");
  if (source && !spec) throw ConfigError("rebuilding pool data needs the property spec");
  std::unordered_map<Index, Index> position;
  if (source)
    for (Index r = 0; r < source->rows(); ++r) position[source->row_ids()[r]] = r;

  ShadowPool pool;
  try {
    pool.k_reference = manifest.at("k_reference").get<int>();
    pool.build_seconds = manifest.value("build_seconds", 0.0);
    pool.reference_seconds = manifest.value("reference_seconds", 0.0);
    pool.approximation_seconds = manifest.value("approximation_seconds", 0.0);
    for (const auto& j : manifest.at("entries")) {
      ShadowEntry e;
      e.params = nn::load_model((fs::path(dir) / j.at("model").get<std::string>()).string());
      e.property_value = j.at("property_value").get<double>();
      e.property_class = j.at("property_class").get<int>();
      e.provenance.seed = j.at("seed").get<std::uint64_t>();
      if (j.at("provenance") == "reference") {
        e.train_row_ids = j.at("row_ids").get<std::vector<Index>>();
        if (source) {
          std::vector<Index> rows;
          for (Index id : e.train_row_ids) {
            const auto it = position.find(id);
            if (it == position.end())
              throw ConfigError("pool row id " + std::to_string(id) + " not in source data");
            rows.push_back(it->second);
          }
          e.train_data = source->select_rows(rows);
        }
      } else {
        auto& p = e.provenance;
        p.kind = Provenance::Kind::approximated;
        p.source = j.at("source").get<int>();
        p.perturbation = data::PerturbationKind::parse(j.at("perturbation"), j.at("m").get<int>());
        p.budget = j.at("budget").get<Index>();
        p.changed_rows = j.value("changed_rows", Index(0));
        p.ihvp_iterations = j.value("ihvp_iterations", 0);
        p.ihvp_residual = j.value("ihvp_residual", 0.0);
        p.ihvp_converged = j.value("ihvp_converged", true);
        if (p.source < 0 || p.source >= pool.k_reference)
          throw IoError("approximated entry points at an invalid reference");
        if (source) {
          const auto& ref = pool.entries.at(p.source).train_data;
          e.train_data = data::perturb(ref, p.perturbation, p.budget, derive_seed(p.seed, 1)).perturbed;
        }
      }
      pool.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed pool manifest: ") + e.what());
  }
  return pool;
}

}  // namespace cpi::shadow
