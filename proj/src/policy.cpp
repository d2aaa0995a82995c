#include "mast/policy.hpp"

#include <cmath>

namespace mast {

const VariantSpec* find_variant(const std::string& name) {
  for (const auto& v : kVariants)
    if (name == v.name) return &v;
  return nullptr;
}

std::string variant_list() {
  std::string out;
  for (const auto& v : kVariants) {
    if (!out.empty()) out += ", ";
    out += v.name;
  }
  return out;
}

const VariantSpec& variant_spec(MapVariant map, bool exploration) {
  for (const auto& v : kVariants)
    if (v.map == map && v.exploration == exploration) return v;
  throw ContractError("variant_spec: no named variant for this configuration");
}

int sample_categorical(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

namespace {

// 64x64 input through the three-layer stack: 15x15x32, 6x6x64, 4x4x32.
int conv_out(int in, int k, int s) { return (in - k) / s + 1; }

int visual_flat_dim(const SensorConfig& s) {
  int h = conv_out(s.image_h, 8, 4), w = conv_out(s.n_rays, 8, 4);
  h = conv_out(h, 4, 2);
  w = conv_out(w, 4, 2);
  h = conv_out(h, 3, 1);
  w = conv_out(w, 3, 1);
  if (h < 1 || w < 1)
    throw ContractError("visual encoder needs at least a 64x64 image for its conv stack");
  return h * w * 32;
}

int map_cnn_flat_dim(int side) {
  const int out = side - 6;  // three valid 3x3 convolutions
  if (out < 1)
    throw ContractError("semantic map CNN needs map radius >= 3 (side >= 7)");
  return out * out * 32;
}

}  // namespace

PolicyNetwork::PolicyNetwork(const PolicyConfig& cfg, Rng& rng) : cfg_(cfg) {
  auto mk = [&](const std::string& name, std::vector<int> dims, Init scheme) {
    params_.add(name, init_parameters(std::move(dims), scheme, rng).set_requires_grad(true));
  };
  mk("cnn.c1.w", {8, 8, 4, 32}, Init::fan_in_uniform);
  mk("cnn.c1.b", {32}, Init::zeros);
  mk("cnn.c2.w", {4, 4, 32, 64}, Init::fan_in_uniform);
  mk("cnn.c2.b", {64}, Init::zeros);
  mk("cnn.c3.w", {3, 3, 64, 32}, Init::fan_in_uniform);
  mk("cnn.c3.b", {32}, Init::zeros);
  mk("cnn.fc.w", {visual_flat_dim(cfg.sensor), cfg.hidden}, Init::fan_in_uniform);
  mk("cnn.fc.b", {cfg.hidden}, Init::zeros);

  if (cfg.uses_attention()) {
    MapTransformerConfig xc;
    xc.radius = cfg.map_radius;
    xc.n_channels = cfg.map_variant == MapVariant::occupancy_attention ? 2 : cfg.n_classes + 1;
    xc.dim = cfg.xform_dim;
    xc.n_heads = cfg.xform_heads;
    xc.n_layers = cfg.xform_layers;
    xc.ff_dim = cfg.xform_ff;
    xc.out_dim = cfg.hidden;
    xform_.emplace(xc, params_, "map", rng);
  } else if (cfg.map_variant == MapVariant::semantic_cnn) {
    const int ch = cfg.n_classes + 1;
    mk("mapcnn.c1.w", {3, 3, ch, 32}, Init::fan_in_uniform);
    mk("mapcnn.c1.b", {32}, Init::zeros);
    mk("mapcnn.c2.w", {3, 3, 32, 64}, Init::fan_in_uniform);
    mk("mapcnn.c2.b", {64}, Init::zeros);
    mk("mapcnn.c3.w", {3, 3, 64, 32}, Init::fan_in_uniform);
    mk("mapcnn.c3.b", {32}, Init::zeros);
    mk("mapcnn.fc.w", {map_cnn_flat_dim(2 * cfg.map_radius + 1), cfg.hidden},
       Init::fan_in_uniform);
    mk("mapcnn.fc.b", {cfg.hidden}, Init::zeros);
  }

  const int fuse_in = cfg.uses_map() ? 2 * cfg.hidden : cfg.hidden;
  mk("fuse.w", {fuse_in, cfg.hidden}, Init::fan_in_uniform);
  mk("fuse.b", {cfg.hidden}, Init::zeros);

  mk("act_emb", {kNumActions + 1, cfg.action_emb}, Init::fan_in_uniform);

  const int gin = cfg.hidden + cfg.action_emb + PolicyConfig::kGoalDims;
  mk("gru.wz", {gin, cfg.hidden}, Init::fan_in_uniform);
  mk("gru.uz", {cfg.hidden, cfg.hidden}, Init::orthogonal);
  mk("gru.bz", {cfg.hidden}, Init::zeros);
  mk("gru.wr", {gin, cfg.hidden}, Init::fan_in_uniform);
  mk("gru.ur", {cfg.hidden, cfg.hidden}, Init::orthogonal);
  mk("gru.br", {cfg.hidden}, Init::zeros);
  mk("gru.wh", {gin, cfg.hidden}, Init::fan_in_uniform);
  mk("gru.uh", {cfg.hidden, cfg.hidden}, Init::orthogonal);
  mk("gru.bh", {cfg.hidden}, Init::zeros);

  mk("actor.w", {cfg.hidden, kNumActions}, Init::fan_in_uniform);
  mk("actor.b", {kNumActions}, Init::zeros);
  mk("critic.w", {cfg.hidden, 1}, Init::fan_in_uniform);
  mk("critic.b", {1}, Init::zeros);
  bind();
}

PolicyNetwork::PolicyNetwork(const PolicyConfig& cfg, ParamSet params)
    : cfg_(cfg), params_(std::move(params)) {
  bind();
}

void PolicyNetwork::bind() {
  c1w_ = params_.get("cnn.c1.w");
  c1b_ = params_.get("cnn.c1.b");
  c2w_ = params_.get("cnn.c2.w");
  c2b_ = params_.get("cnn.c2.b");
  c3w_ = params_.get("cnn.c3.w");
  c3b_ = params_.get("cnn.c3.b");
  fcw_ = params_.get("cnn.fc.w");
  fcb_ = params_.get("cnn.fc.b");
  if (cfg_.uses_attention()) {
    MapTransformerConfig xc;
    xc.radius = cfg_.map_radius;
    xc.n_channels = cfg_.map_variant == MapVariant::occupancy_attention ? 2 : cfg_.n_classes + 1;
    xc.dim = cfg_.xform_dim;
    xc.n_heads = cfg_.xform_heads;
    xc.n_layers = cfg_.xform_layers;
    xc.ff_dim = cfg_.xform_ff;
    xc.out_dim = cfg_.hidden;
    xform_.emplace(xc, params_, "map");
  } else if (cfg_.map_variant == MapVariant::semantic_cnn) {
    mc1w_ = params_.get("mapcnn.c1.w");
    mc1b_ = params_.get("mapcnn.c1.b");
    mc2w_ = params_.get("mapcnn.c2.w");
    mc2b_ = params_.get("mapcnn.c2.b");
    mc3w_ = params_.get("mapcnn.c3.w");
    mc3b_ = params_.get("mapcnn.c3.b");
    mfcw_ = params_.get("mapcnn.fc.w");
    mfcb_ = params_.get("mapcnn.fc.b");
  }
  fuse_w_ = params_.get("fuse.w");
  fuse_b_ = params_.get("fuse.b");
  act_emb_ = params_.get("act_emb");
  gwz_ = params_.get("gru.wz");
  guz_ = params_.get("gru.uz");
  gbz_ = params_.get("gru.bz");
  gwr_ = params_.get("gru.wr");
  gur_ = params_.get("gru.ur");
  gbr_ = params_.get("gru.br");
  gwh_ = params_.get("gru.wh");
  guh_ = params_.get("gru.uh");
  gbh_ = params_.get("gru.bh");
  actor_w_ = params_.get("actor.w");
  actor_b_ = params_.get("actor.b");
  critic_w_ = params_.get("critic.w");
  critic_b_ = params_.get("critic.b");
}

PolicyState PolicyNetwork::initial_state() const {
  return PolicyState{Tensor::zeros({1, cfg_.hidden}), PolicyConfig::kStartToken};
}

Tensor PolicyNetwork::visual_encoder(const Tensor& image) const {
  Tensor h1 = relu(conv2d(image, c1w_, c1b_, 4));
  Tensor h2 = relu(conv2d(h1, c2w_, c2b_, 2));
  Tensor h3 = relu(conv2d(h2, c3w_, c3b_, 1));
  Tensor flat = reshape(h3, {1, static_cast<int>(h3.size())});
  return relu(add(matmul(flat, fcw_), fcb_));
}

Tensor PolicyNetwork::map_feature(const EgoMap& ego,
                                  std::vector<std::vector<double>>* attn) const {
  switch (cfg_.map_variant) {
    case MapVariant::none:
      return Tensor();
    case MapVariant::semantic_attention:
      return xform_->forward(MapTransformer::channels_from_egomap(ego), attn);
    case MapVariant::occupancy_attention:
      return xform_->forward(MapTransformer::channels_from_occupancy(occupancy_view(ego)), attn);
    case MapVariant::semantic_cnn: {
      const int side = ego.side();
      const int ch = cfg_.n_classes + 1;
      Tensor grid = Tensor::zeros({side, side, ch});
      auto gv = grid.values();
      for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
          const CellBits b = ego.at(i, j);
          for (int c = 0; c < ch; ++c)
            if (b & (1u << c)) gv[(static_cast<std::size_t>(i) * side + j) * ch + c] = 1.0;
        }
      Tensor h1 = relu(conv2d(grid, mc1w_, mc1b_, 1));
      Tensor h2 = relu(conv2d(h1, mc2w_, mc2b_, 1));
      Tensor h3 = relu(conv2d(h2, mc3w_, mc3b_, 1));
      Tensor flat = reshape(h3, {1, static_cast<int>(h3.size())});
      return relu(add(matmul(flat, mfcw_), mfcb_));
    }
  }
  return Tensor();
}

Tensor PolicyNetwork::fuse(const Tensor& r_emb, const Tensor& m_emb) const {
  Tensor in;
  if (cfg_.uses_map()) {
    std::vector<Tensor> parts{r_emb, m_emb};
    in = concat(parts, 1);
  } else {
    in = r_emb;
  }
  return relu(add(matmul(in, fuse_w_), fuse_b_));
}

Tensor PolicyNetwork::gru_step(const Tensor& fused, int prev_action,
                               std::pair<double, double> goal, const Tensor& hidden) const {
  const std::vector<int> prev{prev_action};
  Tensor aemb = embedding(act_emb_, prev);
  Tensor goal_feat = Tensor::from(
      {1, PolicyConfig::kGoalDims},
      {0.1 * goal.first, std::sin(goal.second), std::cos(goal.second)});
  std::vector<Tensor> parts{fused, aemb, goal_feat};
  Tensor x = concat(parts, 1);
  Tensor z = sigmoid(add(add(matmul(x, gwz_), matmul(hidden, guz_)), gbz_));
  Tensor r = sigmoid(add(add(matmul(x, gwr_), matmul(hidden, gur_)), gbr_));
  Tensor c = mast::tanh(add(add(matmul(x, gwh_), matmul(mul(r, hidden), guh_)), gbh_));
  Tensor ones = Tensor::full({1, cfg_.hidden}, 1.0);
  return add(mul(sub(ones, z), c), mul(z, hidden));
}

std::pair<Tensor, Tensor> PolicyNetwork::heads(const Tensor& hidden) const {
  Tensor logits = add(matmul(hidden, actor_w_), actor_b_);
  Tensor value = add(matmul(hidden, critic_w_), critic_b_);
  return {logits, value};
}

PolicyNetwork::StepOut PolicyNetwork::forward_step(const Tensor& image, const EgoMap& ego,
                                                   std::pair<double, double> goal,
                                                   int prev_action, const Tensor& hidden,
                                                   std::vector<std::vector<double>>* attn) const {
  Tensor r_emb = visual_encoder(image);
  Tensor m_emb = map_feature(ego, attn);
  Tensor fused = fuse(r_emb, m_emb);
  Tensor h = gru_step(fused, prev_action, goal, hidden);
  auto [logits, value] = heads(h);
  return {logits, value, h};
}

PolicyNetwork::ActOut PolicyNetwork::act(const Observation& obs, const EgoMap& ego,
                                         std::pair<double, double> goal, PolicyState& state,
                                         bool greedy, Rng& rng) const {
  StepOut out = forward_step(obs.image, ego, goal, state.prev_action, state.hidden);
  Tensor probs = softmax(reshape(out.logits, {kNumActions}), 0);
  int action;
  if (greedy) {
    auto pv = probs.values();
    action = 0;
    for (int i = 1; i < kNumActions; ++i)
      if (pv[static_cast<std::size_t>(i)] > pv[static_cast<std::size_t>(action)]) action = i;
  } else {
    action = sample_categorical(probs.values(), rng.uniform());
  }
  // log-prob through the same arithmetic the trainer uses when it recomputes
  const std::vector<int> target{action};
  const double log_prob = -cross_entropy_with_logits(out.logits, target).value();
  state.hidden = out.hidden;
  state.prev_action = action;
  return {static_cast<Action>(action), log_prob, out.value.value()};
}

namespace {

int variant_code(const PolicyConfig& cfg) {
  for (int i = 0; i < static_cast<int>(std::size(kVariants)); ++i)
    if (kVariants[i].map == cfg.map_variant &&
        kVariants[i].exploration == cfg.exploration_reward)
      return i;
  throw ContractError("checkpoint: configuration matches no named variant");
}

}  // namespace

void PolicyNetwork::save_checkpoint(std::uint64_t seed, const std::string& path) const {
  ParamSet out;
  auto put = [&](const std::string& name, double v) { out.add(name, Tensor::scalar(v)); };
  put("config.variant", variant_code(cfg_));
  put("config.hidden", cfg_.hidden);
  put("config.action_emb", cfg_.action_emb);
  put("config.map_radius", cfg_.map_radius);
  put("config.n_classes", cfg_.n_classes);
  put("config.xform_dim", cfg_.xform_dim);
  put("config.xform_heads", cfg_.xform_heads);
  put("config.xform_layers", cfg_.xform_layers);
  put("config.xform_ff", cfg_.xform_ff);
  put("config.sensor_rays", cfg_.sensor.n_rays);
  put("config.sensor_fov", cfg_.sensor.fov_deg);
  put("config.sensor_range", cfg_.sensor.max_range);
  put("config.image_h", cfg_.sensor.image_h);
  put("config.seed", static_cast<double>(seed));
  for (std::size_t i = 0; i < params_.count(); ++i) {
    const Tensor& t = params_.tensor(i);
    out.add(params_.name(i),
            Tensor::from(t.dims(), std::vector<double>(t.values().begin(), t.values().end())));
  }
  save_params(out, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  ParamSet all;
  load_params(all, path);
  LoadedCheckpoint ckpt;
  ParamSet net_params;
  auto geti = [&](const std::string& name) {
    return static_cast<int>(all.get(name).value());
  };
  ckpt.config.map_variant = kVariants[static_cast<std::size_t>(geti("config.variant"))].map;
  ckpt.config.exploration_reward =
      kVariants[static_cast<std::size_t>(geti("config.variant"))].exploration;
  ckpt.config.hidden = geti("config.hidden");
  ckpt.config.action_emb = geti("config.action_emb");
  ckpt.config.map_radius = geti("config.map_radius");
  ckpt.config.n_classes = geti("config.n_classes");
  ckpt.config.xform_dim = geti("config.xform_dim");
  ckpt.config.xform_heads = geti("config.xform_heads");
  ckpt.config.xform_layers = geti("config.xform_layers");
  ckpt.config.xform_ff = geti("config.xform_ff");
  ckpt.config.sensor.n_rays = geti("config.sensor_rays");
  ckpt.config.sensor.fov_deg = all.get("config.sensor_fov").value();
  ckpt.config.sensor.max_range = all.get("config.sensor_range").value();
  ckpt.config.sensor.image_h = geti("config.image_h");
  ckpt.seed = static_cast<std::uint64_t>(all.get("config.seed").value());
  for (std::size_t i = 0; i < all.count(); ++i) {
    if (all.name(i).rfind("config.", 0) == 0) continue;
    Tensor t = all.tensor(i);
    t.set_requires_grad(true);
    net_params.add(all.name(i), std::move(t));
  }
  ckpt.net.emplace(ckpt.config, std::move(net_params));
  return ckpt;
}

}  // namespace mast
