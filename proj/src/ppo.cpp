#include "mast/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mast {

double step_reward(double prev_geo, double new_geo, bool reached_goal, bool collided,
                   double cov_delta, const RewardConfig& cfg) {
  if (!std::isfinite(prev_geo) || !std::isfinite(new_geo))
    throw ContractError("step_reward: geodesic distances must be finite");
  double r = (prev_geo - new_geo) + cfg.time_penalty;
  if (reached_goal) r += cfg.success_bonus;
  if (collided) r += cfg.collision_penalty;
  if (cfg.exploration_enabled) r += cfg.explore_beta * cov_delta;
  return r;
}

void TrainConfig::validate() const {
  if (rollout_len < 1 || n_envs < 1) throw ContractError("TrainConfig: rollout/envs must be >= 1");
  if (seg_len < 1 || rollout_len % seg_len != 0)
    throw ContractError("TrainConfig: rollout_len must be a multiple of seg_len");
  const int n_segs = n_envs * (rollout_len / seg_len);
  if (minibatches < 1 || n_segs % minibatches != 0)
    throw ContractError("TrainConfig: segment count (" + std::to_string(n_segs) +
                        ") must divide evenly into minibatches");
  if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
}

void RolloutBuffer::allocate(int T_, int n_envs_, int n_rays_, int ego_cells_, int hidden_,
                             int seg_len_) {
  T = T_;
  n_envs = n_envs_;
  n_rays = n_rays_;
  ego_cells = ego_cells_;
  hidden = hidden_;
  seg_len = seg_len_;
  const std::size_t nt = static_cast<std::size_t>(n_envs) * T;
  ray_depth.assign(nt * n_rays, 0.0);
  ray_class.assign(nt * n_rays, 0);
  ego_bits.assign(nt * ego_cells, 0);
  goal_dist.assign(nt, 0.0);
  goal_bearing.assign(nt, 0.0);
  prev_action.assign(nt, 0);
  action.assign(nt, 0);
  done.assign(nt, 0);
  collided.assign(nt, 0);
  log_prob.assign(nt, 0.0);
  value.assign(nt, 0.0);
  reward.assign(nt, 0.0);
  seg_hidden.assign(static_cast<std::size_t>(n_envs) * (T / seg_len) * hidden, 0.0);
  bootstrap_value.assign(static_cast<std::size_t>(n_envs), 0.0);
}

void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                 double gae_lambda, std::span<double> advantages, std::span<double> returns) {
  const int T = static_cast<int>(rewards.size());
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const double not_done = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double delta =
        rewards[static_cast<std::size_t>(t)] + gamma * next_value * not_done -
        values[static_cast<std::size_t>(t)];
    next_adv = delta + gamma * gae_lambda * not_done * next_adv;
    advantages[static_cast<std::size_t>(t)] = next_adv;
    returns[static_cast<std::size_t>(t)] = next_adv + values[static_cast<std::size_t>(t)];
    next_value = values[static_cast<std::size_t>(t)];
  }
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(ParamSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params_.count(); ++i) {
    m_.emplace_back(static_cast<std::size_t>(params_.tensor(i).size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(params_.tensor(i).size()), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const Precision p = precision();
  for (std::size_t i = 0; i < params_.count(); ++i) {
    Tensor& t = params_.tensor(i);
    auto g = t.grad();
    auto x = t.values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (!std::isfinite(g[j])) throw ContractError("Adam: non-finite gradient");
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      x[j] = round_to_mode(x[j] - lr_ * mhat / (std::sqrt(vhat) + eps_), p);
    }
  }
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.count(); ++i)
    for (double g : params.tensor(i).grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (std::size_t i = 0; i < params.count(); ++i)
      for (double& g : params.tensor(i).grad_mut()) g *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const PolicyConfig& policy_cfg, const TrainConfig& train_cfg,
                 const RewardConfig& reward_cfg,
                 std::vector<std::shared_ptr<const World>> train_worlds,
                 std::vector<std::shared_ptr<const World>> val_worlds, std::uint64_t seed)
    : policy_cfg_(policy_cfg),
      train_cfg_(train_cfg),
      reward_cfg_(reward_cfg),
      train_worlds_(std::move(train_worlds)),
      val_worlds_(std::move(val_worlds)),
      seed_(seed),
      shuffle_rng_(derive_seed(seed, 9000)) {
  train_cfg_.validate();
  if (train_worlds_.empty()) throw ContractError("Trainer: no training worlds");
  Rng init_rng(derive_seed(seed, 1));
  policy_.emplace(policy_cfg_, init_rng);
  optimizer_.emplace(policy_->params(), train_cfg_.lr);
  for (int e = 0; e < train_cfg_.n_envs; ++e) {
    runners_.push_back(std::make_unique<EnvRunner>(
        policy_cfg_.sensor, train_cfg_.max_steps,
        Rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(e))),
        Rng(derive_seed(seed, 2000 + static_cast<std::uint64_t>(e)))));
  }
}

void Trainer::reset_runner(EnvRunner& runner) {
  const auto& world = train_worlds_[static_cast<std::size_t>(
      runner.episode_rng.uniform_int(0, static_cast<int>(train_worlds_.size()) - 1))];
  Episode episode = sample_episode(world, runner.episode_rng, train_cfg_.min_geo,
                                   train_cfg_.max_geo);
  runner.env.reset(std::move(episode));
  runner.map = std::make_unique<WorldSemanticMap>(world->width, world->height,
                                                  policy_cfg_.n_classes);
  runner.map->integrate(runner.env.pose(),
                        render_rays(runner.env.world(), runner.env.pose(), policy_cfg_.sensor));
  runner.state = policy_->initial_state();
  runner.prev_cov = 0.0;
  runner.ep_return = 0.0;
}

void Trainer::collect_env(int e, RolloutBuffer& buffer) {
  EnvRunner& runner = *runners_[static_cast<std::size_t>(e)];
  const int T = train_cfg_.rollout_len;
  const int W = policy_cfg_.sensor.n_rays;
  const int cells = (2 * policy_cfg_.map_radius + 1) * (2 * policy_cfg_.map_radius + 1);
  long local_episodes = 0;
  double local_return_sum = 0.0;

  for (int t = 0; t < T; ++t) {
    if (!runner.env.active()) reset_runner(runner);
    const std::size_t i = buffer.idx(e, t);
    if (t % buffer.seg_len == 0) {
      const std::size_t h0 =
          (static_cast<std::size_t>(e) * (T / buffer.seg_len) + t / buffer.seg_len) *
          buffer.hidden;
      auto hv = runner.state.hidden.values();
      std::copy(hv.begin(), hv.end(), buffer.seg_hidden.begin() + static_cast<std::ptrdiff_t>(h0));
    }

    Observation obs = runner.env.observe();
    EgoMap ego = egocentric_crop(*runner.map, runner.env.pose(), policy_cfg_.map_radius);
    const auto goal = runner.env.goal_vector();

    std::copy(obs.rays.depth.begin(), obs.rays.depth.end(),
              buffer.ray_depth.begin() + static_cast<std::ptrdiff_t>(i * W));
    for (int k = 0; k < W; ++k)
      buffer.ray_class[i * W + k] = static_cast<std::uint8_t>(obs.rays.cls[static_cast<std::size_t>(k)]);
    std::copy(ego.cells.begin(), ego.cells.end(),
              buffer.ego_bits.begin() + static_cast<std::ptrdiff_t>(i * cells));
    buffer.goal_dist[i] = goal.first;
    buffer.goal_bearing[i] = goal.second;
    buffer.prev_action[i] = static_cast<std::uint8_t>(runner.state.prev_action);

    auto out = policy_->act(obs, ego, goal, runner.state, /*greedy=*/false, runner.action_rng);

    const double prev_geo = runner.env.geodesic_to_goal();
    StepInfo info = runner.env.step(out.action);
    const double new_geo = runner.env.geodesic_to_goal();
    runner.map->integrate(runner.env.pose(),
                          render_rays(runner.env.world(), runner.env.pose(), policy_cfg_.sensor));
    const double cov = runner.map->coverage();
    const double cov_delta = cov - runner.prev_cov;
    runner.prev_cov = cov;

    const bool reached = info.done && runner.env.stopped() && runner.env.on_goal() &&
                         runner.env.steps() < train_cfg_.max_steps;
    const double r =
        step_reward(prev_geo, new_geo, reached, info.collided, cov_delta, reward_cfg_);

    buffer.action[i] = static_cast<std::uint8_t>(out.action);
    buffer.log_prob[i] = out.log_prob;
    buffer.value[i] = out.value;
    buffer.reward[i] = r;
    buffer.done[i] = info.done ? 1 : 0;
    buffer.collided[i] = info.collided ? 1 : 0;
    runner.ep_return += r;
    if (info.done) {
      ++local_episodes;
      local_return_sum += runner.ep_return;
      runner.ep_return = 0.0;
    }
  }
  // bootstrap value from the state after the last transition
  if (!runner.env.active()) {
    buffer.bootstrap_value[static_cast<std::size_t>(e)] = 0.0;  // masked by done anyway
  } else {
    Observation obs = runner.env.observe();
    EgoMap ego = egocentric_crop(*runner.map, runner.env.pose(), policy_cfg_.map_radius);
    PolicyState probe = runner.state;
    Rng dummy(0);
    auto out = policy_->act(obs, ego, runner.env.goal_vector(), probe, /*greedy=*/true, dummy);
    buffer.bootstrap_value[static_cast<std::size_t>(e)] = out.value;
  }
  runner.ep_return_episodes = local_episodes;
  runner.ep_return_sum = local_return_sum;
}

RolloutBuffer Trainer::collect_rollouts() {
  RolloutBuffer buffer;
  const int cells = (2 * policy_cfg_.map_radius + 1) * (2 * policy_cfg_.map_radius + 1);
  buffer.allocate(train_cfg_.rollout_len, train_cfg_.n_envs, policy_cfg_.sensor.n_rays, cells,
                  policy_cfg_.hidden, train_cfg_.seg_len);
  parallel_tasks(train_cfg_.n_envs, [&](int e) { collect_env(e, buffer); });
  for (auto& runner : runners_) {
    episodes_done_ += runner->ep_return_episodes;
    recent_return_sum_ += runner->ep_return_sum;
    recent_return_count_ += runner->ep_return_episodes;
  }
  steps_done_ += static_cast<long>(train_cfg_.rollout_len) * train_cfg_.n_envs;
  return buffer;
}

Tensor Trainer::segment_loss(const PolicyNetwork& net, const RolloutBuffer& buffer,
                             std::span<const double> advantages, std::span<const double> returns,
                             int env, int seg, double inv_batch, UpdateStats& stats) const {
  const int W = buffer.n_rays;
  const int cells = buffer.ego_cells;
  const int t0 = seg * buffer.seg_len;
  const std::size_t h0 =
      (static_cast<std::size_t>(env) * (buffer.T / buffer.seg_len) + seg) * buffer.hidden;
  Tensor hidden = Tensor::from(
      {1, buffer.hidden},
      std::vector<double>(buffer.seg_hidden.begin() + static_cast<std::ptrdiff_t>(h0),
                          buffer.seg_hidden.begin() + static_cast<std::ptrdiff_t>(h0) +
                              buffer.hidden));
  Tensor loss;
  const double eps = train_cfg_.clip;
  for (int t = t0; t < t0 + buffer.seg_len; ++t) {
    const std::size_t i = buffer.idx(env, t);
    if (t > t0 && buffer.done[buffer.idx(env, t - 1)]) hidden = Tensor::zeros({1, buffer.hidden});

    Rays rays;
    rays.depth.assign(buffer.ray_depth.begin() + static_cast<std::ptrdiff_t>(i * W),
                      buffer.ray_depth.begin() + static_cast<std::ptrdiff_t>((i + 1) * W));
    rays.cls.resize(static_cast<std::size_t>(W));
    for (int k = 0; k < W; ++k) rays.cls[static_cast<std::size_t>(k)] = buffer.ray_class[i * W + k];
    Tensor image = render_image(rays, policy_cfg_.sensor);

    EgoMap ego;
    ego.radius = policy_cfg_.map_radius;
    ego.n_classes = policy_cfg_.n_classes;
    ego.cells.assign(buffer.ego_bits.begin() + static_cast<std::ptrdiff_t>(i * cells),
                     buffer.ego_bits.begin() + static_cast<std::ptrdiff_t>((i + 1) * cells));

    auto so = net.forward_step(image, ego, {buffer.goal_dist[i], buffer.goal_bearing[i]},
                               buffer.prev_action[i], hidden);
    hidden = so.hidden;

    Tensor flat_logits = reshape(so.logits, {kNumActions});
    const std::vector<int> act{buffer.action[i]};
    Tensor lp_new = affine(cross_entropy_with_logits(flat_logits, act), -1.0);
    Tensor ratio = mast::exp(affine(lp_new, 1.0, -buffer.log_prob[i]));
    const double adv = advantages[i];
    Tensor surr1 = affine(ratio, adv);
    Tensor surr2 = affine(clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
    Tensor pol = minimum(surr1, surr2);

    Tensor vdiff = affine(reshape(so.value, {1}), 1.0, -returns[i]);
    Tensor vloss = mul(vdiff, vdiff);

    // entropy from logits: lse - sum(p * logits)
    double lmax = flat_logits.values()[0];
    for (double v : flat_logits.values()) lmax = std::max(lmax, v);
    Tensor z = sum_all(mast::exp(affine(flat_logits, 1.0, -lmax)));
    Tensor lse = affine(mast::log(z), 1.0, lmax);
    Tensor probs = softmax(flat_logits, 0);
    Tensor ent = sub(lse, sum_all(mul(probs, flat_logits)));

    Tensor term = add(affine(pol, -inv_batch), affine(vloss, train_cfg_.value_coef * inv_batch));
    term = add(term, affine(ent, -train_cfg_.entropy_coef * inv_batch));
    loss = loss.defined() ? add(loss, term) : term;

    stats.policy_loss += -pol.value();
    stats.value_loss += vloss.value();
    stats.entropy += ent.value();
    if (std::fabs(ratio.value() - 1.0) > eps) stats.clip_frac += 1.0;
  }
  return loss;
}

UpdateStats Trainer::ppo_update(const RolloutBuffer& buffer) {
  const int T = buffer.T;
  const int n = buffer.n_envs;
  const std::size_t nt = static_cast<std::size_t>(n) * T;
  std::vector<double> advantages(nt), returns(nt);
  for (int e = 0; e < n; ++e) {
    const std::size_t base = static_cast<std::size_t>(e) * T;
    compute_gae(std::span(buffer.reward).subspan(base, T),
                std::span(buffer.value).subspan(base, T),
                std::span(buffer.done).subspan(base, T),
                buffer.bootstrap_value[static_cast<std::size_t>(e)], train_cfg_.gamma,
                train_cfg_.gae_lambda, std::span(advantages).subspan(base, T),
                std::span(returns).subspan(base, T));
  }
  // batch-wide normalization
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(nt);
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(nt);
  const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& a : advantages) a = (a - mean) * inv_std;

  const int segs_per_env = T / buffer.seg_len;
  const int n_segs = n * segs_per_env;
  std::vector<int> order(static_cast<std::size_t>(n_segs));
  for (int s = 0; s < n_segs; ++s) order[static_cast<std::size_t>(s)] = s;
  const int segs_per_mb = n_segs / train_cfg_.minibatches;
  const double inv_batch = 1.0 / static_cast<double>(segs_per_mb * buffer.seg_len);

  UpdateStats totals;
  long minibatch_count = 0;
  for (int epoch = 0; epoch < train_cfg_.epochs; ++epoch) {
    for (std::size_t s = order.size(); s > 1; --s)
      std::swap(order[s - 1],
                order[static_cast<std::size_t>(shuffle_rng_.uniform_int(0, static_cast<int>(s) - 1))]);
    for (int mb = 0; mb < train_cfg_.minibatches; ++mb) {
      std::vector<int> chosen(order.begin() + static_cast<std::ptrdiff_t>(mb) * segs_per_mb,
                              order.begin() + static_cast<std::ptrdiff_t>(mb + 1) * segs_per_mb);
      // Per-segment gradients are computed on parameter clones and reduced in
      // segment order, so results do not depend on the worker count.
      std::vector<ParamSet> clones(chosen.size());
      std::vector<UpdateStats> seg_stats(chosen.size());
      std::vector<double> losses(chosen.size());
      parallel_tasks(static_cast<int>(chosen.size()), [&](int k) {
        clones[static_cast<std::size_t>(k)] = policy_->params().clone();
        PolicyNetwork net(policy_cfg_, std::move(clones[static_cast<std::size_t>(k)]));
        const int seg_id = chosen[static_cast<std::size_t>(k)];
        Tape tape;
        Tensor loss = segment_loss(net, buffer, advantages, returns, seg_id / segs_per_env,
                                   seg_id % segs_per_env, inv_batch,
                                   seg_stats[static_cast<std::size_t>(k)]);
        losses[static_cast<std::size_t>(k)] = loss.value();
        tape.backward(loss);
        clones[static_cast<std::size_t>(k)] = std::move(net.params());
      });
      double mb_loss = 0.0;
      for (double l : losses) mb_loss += l;
      if (!std::isfinite(mb_loss)) {
        char diag[256];
        std::snprintf(diag, sizeof(diag),
                      "ppo_update: non-finite loss (policy %.4g value %.4g entropy %.4g "
                      "clip %.4g at step %ld)",
                      totals.policy_loss, totals.value_loss, totals.entropy, totals.clip_frac,
                      steps_done_);
        throw TrainAbort(diag);
      }
      ParamSet& master = policy_->params();
      master.zero_all_grads();
      for (std::size_t k = 0; k < chosen.size(); ++k) {
        for (std::size_t pIdx = 0; pIdx < master.count(); ++pIdx) {
          auto dst = master.tensor(pIdx).grad_mut();
          auto src = clones[k].tensor(pIdx).grad();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      const double norm = clip_grad_norm(master, train_cfg_.max_grad_norm);
      optimizer_->step();

      UpdateStats mb_stats;
      for (const auto& s : seg_stats) {
        mb_stats.policy_loss += s.policy_loss;
        mb_stats.value_loss += s.value_loss;
        mb_stats.entropy += s.entropy;
        mb_stats.clip_frac += s.clip_frac;
      }
      const double trans = static_cast<double>(segs_per_mb * buffer.seg_len);
      totals.policy_loss += mb_stats.policy_loss / trans;
      totals.value_loss += mb_stats.value_loss / trans;
      totals.entropy += mb_stats.entropy / trans;
      totals.clip_frac += mb_stats.clip_frac / trans;
      totals.grad_norm += norm;
      ++minibatch_count;
    }
  }
  totals.policy_loss /= static_cast<double>(minibatch_count);
  totals.value_loss /= static_cast<double>(minibatch_count);
  totals.entropy /= static_cast<double>(minibatch_count);
  totals.clip_frac /= static_cast<double>(minibatch_count);
  totals.grad_norm /= static_cast<double>(minibatch_count);
  return totals;
}

IterationStats Trainer::iterate() {
  recent_return_sum_ = 0.0;
  recent_return_count_ = 0;
  RolloutBuffer buffer = collect_rollouts();
  IterationStats stats;
  stats.update = ppo_update(buffer);
  stats.steps = steps_done_;
  stats.episodes = episodes_done_;
  stats.mean_return =
      recent_return_count_ > 0 ? recent_return_sum_ / static_cast<double>(recent_return_count_)
                               : 0.0;
  return stats;
}

void Trainer::train(const std::string& out_dir, std::uint64_t config_seed) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto ckpt_path = [&](long steps) {
    return out_dir + "/ckpt_" + std::to_string(steps) + ".mast";
  };
  policy_->save_checkpoint(config_seed, ckpt_path(0));

  std::ofstream metrics(out_dir + "/metrics.csv", std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot open metrics log in " + out_dir);
  metrics << "steps,episodes,mean_return,success,spl,policy_loss,value_loss,entropy,clip_frac\n";

  double last_success = 0.0, last_spl = 0.0;
  long next_ckpt = train_cfg_.ckpt_interval;
  long iter = 0;
  double last_mean_return = 0.0;
  while (steps_done_ < train_cfg_.total_steps) {
    IterationStats stats = iterate();
    ++iter;
    if (stats.mean_return != 0.0 || recent_return_count_ > 0)
      last_mean_return = stats.mean_return;
    if (!val_worlds_.empty() &&
        (iter == 1 || iter % train_cfg_.eval_interval_iters == 0)) {
      EvalSettings es;
      es.episodes = train_cfg_.eval_episodes;
      es.seed = derive_seed(seed_, 7000 + static_cast<std::uint64_t>(iter));
      es.min_geo = train_cfg_.min_geo;
      es.max_geo = train_cfg_.max_geo;
      es.max_steps = train_cfg_.max_steps;
      Report rep = run_eval(*policy_, val_worlds_, es, "mini-eval");
      last_success = rep.success_pct;
      last_spl = rep.spl_pct;
    }
    char row[256];
    std::snprintf(row, sizeof(row), "%ld,%ld,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", stats.steps,
                  stats.episodes, last_mean_return, last_success, last_spl,
                  stats.update.policy_loss, stats.update.value_loss, stats.update.entropy,
                  stats.update.clip_frac);
    metrics << row;
    metrics.flush();
    if (steps_done_ >= next_ckpt && steps_done_ < train_cfg_.total_steps) {
      policy_->save_checkpoint(config_seed, ckpt_path(steps_done_));
      next_ckpt += train_cfg_.ckpt_interval;
    }
  }
  if (train_cfg_.total_steps > 0) policy_->save_checkpoint(config_seed, ckpt_path(steps_done_));
}

}  // namespace mast
