#include "cpi/nn/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace cpi::nn {

namespace {

constexpr char kMagic[8] = {'C', 'P', 'I', 'M', 'L', 'P', '0', '1'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated model file");
  return v;
}

}  // namespace

void write_model(std::ostream& out, const Mlp& model) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, std::uint32_t(model.layer_sizes.size()));
  for (int w : model.layer_sizes) put<std::uint32_t>(out, std::uint32_t(w));
  const Vector<double> flat = model.flatten();
  out.write(reinterpret_cast<const char*>(flat.data()), std::streamsize(flat.size() * sizeof(double)));
  if (!out) throw IoError("failed to write model");
}

Mlp read_model(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a model file (bad magic)");
  const auto layers = get<std::uint32_t>(in);
  if (layers < 2 || layers > 64) throw IoError("model file has implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto w = get<std::uint32_t>(in);
    if (w < 1 || w > (1u << 24)) throw IoError("model file has implausible layer width");
    sizes.push_back(int(w));
  }
  Vector<double> flat(parameter_count(sizes));
  if (!in.read(reinterpret_cast<char*>(flat.data()), std::streamsize(flat.size() * sizeof(double))))
    throw IoError("truncated model file");
  return Mlp::unflatten(sizes, flat);
}

void save_model(const std::string& path, const Mlp& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_model(out, model);
}

Mlp load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_model(in);
}

nlohmann::json model_to_json(const Mlp& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const auto& W = model.weights[l];
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      rows.push_back(std::vector<double>(W.row(r).begin(), W.row(r).end()));
    const auto& b = model.biases[l];
    layers.push_back({{"weights", rows}, {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"layer_sizes", model.layer_sizes}, {"layers", layers}};
}

Mlp model_from_json(const nlohmann::json& j) {
  try {
    Mlp m = Mlp::zeros(j.at("layer_sizes").get<std::vector<int>>());
    const auto& layers = j.at("layers");
    if (layers.size() != m.layer_count()) throw ShapeError("layer count mismatch in model json");
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      const auto rows = layers[l].at("weights").get<std::vector<std::vector<double>>>();
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      auto& W = m.weights[l];
      if (Eigen::Index(rows.size()) != W.rows() || Eigen::Index(bias.size()) != W.rows())
        throw ShapeError("layer " + std::to_string(l) + " shape mismatch in model json");
      for (Eigen::Index r = 0; r < W.rows(); ++r) {
        if (Eigen::Index(rows[r].size()) != W.cols())
          throw ShapeError("layer " + std::to_string(l) + " row width mismatch in model json");
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rows[r][c];
        m.biases[l][r] = bias[r];
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model json: ") + e.what());
  }
}

}  // namespace cpi::nn
