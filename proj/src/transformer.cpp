#include "mast/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mast {

PositionIndexMatrix build_position_indices(int radius) {
  if (radius < 1) throw ContractError("build_position_indices: radius must be >= 1");
  PositionIndexMatrix pim;
  pim.radius = radius;
  const int side = pim.side();
  pim.index.resize(static_cast<std::size_t>(side) * side);
  // Distinct squared distances in ascending order; the Gaussian kernel
  // exp(-d^2 / (2 (r/2)^2)) is strictly decreasing in d^2, so descending
  // kernel value is exactly ascending d^2.
  std::map<int, int> order;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j)
      order[(i - radius) * (i - radius) + (j - radius) * (j - radius)] = 0;
  int next = 0;
  for (auto& [d2, idx] : order) idx = next++;
  pim.n_indices = next;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const int d2 = (i - radius) * (i - radius) + (j - radius) * (j - radius);
      pim.index[static_cast<std::size_t>(i) * side + j] = order[d2];
    }
  return pim;
}

namespace {
std::string layer_prefix(const std::string& prefix, int layer) {
  return prefix + ".l" + std::to_string(layer);
}
}  // namespace

MapTransformer::MapTransformer(const MapTransformerConfig& cfg, ParamSet& params,
                               const std::string& prefix, Rng& rng)
    : cfg_(cfg), pos_index_(build_position_indices(cfg.radius)) {
  if (cfg.dim % cfg.n_heads != 0)
    throw ContractError("MapTransformer: dim must be divisible by n_heads");
  auto mk = [&](const std::string& name, std::vector<int> dims, Init scheme) -> Tensor& {
    return params.add(name, init_parameters(std::move(dims), scheme, rng).set_requires_grad(true));
  };
  class_emb_ = mk(prefix + ".cls_emb", {cfg.n_channels, cfg.dim}, Init::fan_in_uniform);
  pos_emb_ = mk(prefix + ".pos_emb", {pos_index_.n_indices, cfg.dim}, Init::fan_in_uniform);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = layer_prefix(prefix, l);
    Layer layer;
    layer.wq = mk(lp + ".wq", {cfg.dim, cfg.dim}, Init::fan_in_uniform);
    layer.bq = mk(lp + ".bq", {cfg.dim}, Init::zeros);
    layer.wk = mk(lp + ".wk", {cfg.dim, cfg.dim}, Init::fan_in_uniform);
    layer.bk = mk(lp + ".bk", {cfg.dim}, Init::zeros);
    layer.wv = mk(lp + ".wv", {cfg.dim, cfg.dim}, Init::fan_in_uniform);
    layer.bv = mk(lp + ".bv", {cfg.dim}, Init::zeros);
    layer.wo = mk(lp + ".wo", {cfg.dim, cfg.dim}, Init::fan_in_uniform);
    layer.ff1 = mk(lp + ".ff1", {cfg.dim, cfg.ff_dim}, Init::fan_in_uniform);
    layer.ff2 = mk(lp + ".ff2", {cfg.ff_dim, cfg.dim}, Init::fan_in_uniform);
    layer.ln1_g = params.add(lp + ".ln1.g", Tensor::full({cfg.dim}, 1.0).set_requires_grad(true));
    layer.ln1_b = mk(lp + ".ln1.b", {cfg.dim}, Init::zeros);
    layer.ln2_g = params.add(lp + ".ln2.g", Tensor::full({cfg.dim}, 1.0).set_requires_grad(true));
    layer.ln2_b = mk(lp + ".ln2.b", {cfg.dim}, Init::zeros);
    layers_.push_back(layer);
  }
  pool_w_ = mk(prefix + ".pool.w", {cfg.dim, cfg.out_dim}, Init::fan_in_uniform);
}

MapTransformer::MapTransformer(const MapTransformerConfig& cfg, ParamSet& params,
                               const std::string& prefix)
    : cfg_(cfg), pos_index_(build_position_indices(cfg.radius)) {
  class_emb_ = params.get(prefix + ".cls_emb");
  pos_emb_ = params.get(prefix + ".pos_emb");
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = layer_prefix(prefix, l);
    Layer layer;
    layer.wq = params.get(lp + ".wq");
    layer.bq = params.get(lp + ".bq");
    layer.wk = params.get(lp + ".wk");
    layer.bk = params.get(lp + ".bk");
    layer.wv = params.get(lp + ".wv");
    layer.bv = params.get(lp + ".bv");
    layer.wo = params.get(lp + ".wo");
    layer.ff1 = params.get(lp + ".ff1");
    layer.ff2 = params.get(lp + ".ff2");
    layer.ln1_g = params.get(lp + ".ln1.g");
    layer.ln1_b = params.get(lp + ".ln1.b");
    layer.ln2_g = params.get(lp + ".ln2.g");
    layer.ln2_b = params.get(lp + ".ln2.b");
    layers_.push_back(layer);
  }
  pool_w_ = params.get(prefix + ".pool.w");
}

Tensor MapTransformer::cell_embeddings(const std::vector<std::vector<int>>& cell_channels) const {
  const int side = pos_index_.side();
  const std::size_t cells = static_cast<std::size_t>(side) * side;
  if (cell_channels.size() != cells)
    throw ShapeError("cell_embeddings: expected " + std::to_string(cells) + " cells, got " +
                     std::to_string(cell_channels.size()));
  Tensor bags = embedding_bag(class_emb_, cell_channels);
  Tensor pos = embedding(pos_emb_, pos_index_.index);
  return add(bags, pos);
}

Tensor MapTransformer::attention_layer(const Tensor& x, int layer,
                                       std::vector<std::vector<double>>* capture) const {
  const Layer& L = layers_[static_cast<std::size_t>(layer)];
  const int S = x.dim(0);
  const int dh = cfg_.dim / cfg_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int center = (S - 1) / 2;

  Tensor q = add(matmul(x, L.wq), L.bq);
  Tensor k = add(matmul(x, L.wk), L.bk);
  Tensor v = add(matmul(x, L.wv), L.bv);

  std::vector<Tensor> heads;
  for (int h = 0; h < cfg_.n_heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor scores = affine(matmul(qh, transpose(kh)), scale);
    Tensor probs = softmax(scores, 1);
    if (capture) {
      auto pv = probs.values();
      capture->emplace_back(pv.begin() + static_cast<std::ptrdiff_t>(center) * S,
                            pv.begin() + static_cast<std::ptrdiff_t>(center + 1) * S);
    }
    // order-invariant accumulation over cells keeps the forward bitwise
    // stable under grid rotations
    heads.push_back(matmul_stable(probs, vh));
  }
  Tensor ctx = concat(heads, 1);
  Tensor attended = matmul(ctx, L.wo);
  Tensor x1 = layer_norm(add(x, attended), L.ln1_g, L.ln1_b, cfg_.ln_eps);
  Tensor ff = matmul(relu(matmul(x1, L.ff1)), L.ff2);
  return layer_norm(add(x1, ff), L.ln2_g, L.ln2_b, cfg_.ln_eps);
}

Tensor MapTransformer::forward(const std::vector<std::vector<int>>& cell_channels,
                               std::vector<std::vector<double>>* capture) const {
  Tensor x = cell_embeddings(cell_channels);
  for (int l = 0; l < cfg_.n_layers; ++l) x = attention_layer(x, l, capture);
  Tensor pooled = mean_axis0_stable(x);               // [D]
  Tensor row = reshape(pooled, {1, cfg_.dim});
  return matmul(row, pool_w_);                        // [1, out_dim]
}

std::vector<std::vector<int>> MapTransformer::channels_from_egomap(const EgoMap& ego) {
  std::vector<std::vector<int>> out(ego.cells.size());
  for (std::size_t i = 0; i < ego.cells.size(); ++i) {
    const CellBits b = ego.cells[i];
    for (int ch = 0; ch <= ego.n_classes; ++ch)
      if (b & (1u << ch)) out[i].push_back(ch);
  }
  return out;
}

std::vector<std::vector<int>> MapTransformer::channels_from_occupancy(const OccupancyView& view) {
  std::vector<std::vector<int>> out(view.cells.size());
  for (std::size_t i = 0; i < view.cells.size(); ++i) {
    switch (view.cells[i]) {
      case OccCell::Unexplored: break;
      case OccCell::Traversable: out[i].push_back(0); break;
      case OccCell::Obstacle: out[i].push_back(1); break;
    }
  }
  return out;
}

}  // namespace mast
