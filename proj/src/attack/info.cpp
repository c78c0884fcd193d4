#include "cpi/attack/info.hpp"

#include <algorithm>
#include <numeric>

#include "cpi/errors.hpp"

namespace cpi::attack {

std::string to_string(InfoKind kind) {
  return kind == InfoKind::white_box ? "white-box" : "black-box";
}

InfoKind parse_info_kind(const std::string& name) {
  if (name == "white-box") return InfoKind::white_box;
  if (name == "black-box") return InfoKind::black_box;
  throw ConfigError("unknown info mode '" + name + "' (expected white-box or black-box)");
}

InfoMode InfoMode::black_box(nn::Matrix<double> queries) {
  InfoMode m;
  m.kind = InfoKind::black_box;
  m.query_set = std::move(queries);
  m.validate();
  return m;
}

void InfoMode::validate() const {
  if (kind == InfoKind::black_box && query_set.rows() == 0)
    throw ConfigError("black-box mode needs a non-empty query set");
}

Eigen::Index InfoMode::info_length(const std::vector<int>& layer_sizes) const {
  return kind == InfoKind::white_box ? nn::parameter_count(layer_sizes)
                                     : query_set.rows() * layer_sizes.back();
}

std::uint64_t InfoMode::query_hash() const {
  if (kind == InfoKind::white_box) return 0;
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  const Eigen::Index dims[2] = {query_set.rows(), query_set.cols()};
  mix(dims, sizeof(dims));
  mix(query_set.data(), std::size_t(query_set.size()) * sizeof(double));
  return h;
}

std::vector<std::vector<int>> canonical_order(const nn::Mlp& model) {
  std::vector<std::vector<int>> order;
  for (std::size_t l = 0; l + 1 < model.layer_count(); ++l) {
    const Eigen::VectorXd sums = model.weights[l].rowwise().sum();
    std::vector<int> idx(sums.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return sums[a] > sums[b]; });
    order.push_back(std::move(idx));
  }
  return order;
}

nn::Mlp permute_hidden(const nn::Mlp& model, const std::vector<std::vector<int>>& order) {
  if (order.size() + 1 != model.layer_count())
    throw ShapeError("permutation does not match the hidden layer count");
  nn::Mlp out = model;
  for (std::size_t l = 0; l < order.size(); ++l) {
    const auto& p = order[l];
    if (Eigen::Index(p.size()) != model.weights[l].rows())
      throw ShapeError("permutation length does not match hidden layer " + std::to_string(l));
    for (std::size_t i = 0; i < p.size(); ++i) {
      out.weights[l].row(Eigen::Index(i)) = model.weights[l].row(p[i]);
      out.biases[l][Eigen::Index(i)] = model.biases[l][p[i]];
    }
  }
  // Outgoing weights follow the permutation of the layer feeding them.
  for (std::size_t l = 0; l < order.size(); ++l) {
    const auto& p = order[l];
    const nn::Matrix<double> next = out.weights[l + 1];
    for (std::size_t i = 0; i < p.size(); ++i) out.weights[l + 1].col(Eigen::Index(i)) = next.col(p[i]);
  }
  return out;
}

std::vector<Eigen::Index> flat_permutation(const std::vector<int>& sizes,
                                           const std::vector<std::vector<int>>& order) {
  const auto off = nn::layer_offsets(sizes);
  std::vector<Eigen::Index> map(nn::parameter_count(sizes));
  std::iota(map.begin(), map.end(), Eigen::Index(0));
  const std::size_t layers = sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = sizes[l + 1], cols = sizes[l];
    const std::vector<int>* row_perm = l < order.size() ? &order[l] : nullptr;
    const std::vector<int>* col_perm = l > 0 ? &order[l - 1] : nullptr;
    for (int r = 0; r < rows; ++r) {
      const int src_r = row_perm ? (*row_perm)[r] : r;
      for (int c = 0; c < cols; ++c) {
        const int src_c = col_perm ? (*col_perm)[c] : c;
        map[off.weight[l] + Eigen::Index(r) * cols + c] = off.weight[l] + Eigen::Index(src_r) * cols + src_c;
      }
      map[off.bias[l] + r] = off.bias[l] + src_r;
    }
  }
  return map;
}

ModelInfo extract_info_whitebox(const nn::Mlp& model) {
  return permute_hidden(model, canonical_order(model)).flatten();
}

ModelInfo extract_info_blackbox(const nn::Mlp& model, const nn::Matrix<double>& query_set) {
  if (query_set.rows() == 0) throw ConfigError("empty query set");
  const nn::RowMatrix<double> probs = nn::forward(model, query_set);
  return Eigen::Map<const ModelInfo>(probs.data(), probs.size());
}

ModelInfo extract_info(const nn::Mlp& model, const InfoMode& mode) {
  return mode.kind == InfoKind::white_box ? extract_info_whitebox(model)
                                          : extract_info_blackbox(model, mode.query_set);
}

}  // namespace cpi::attack
