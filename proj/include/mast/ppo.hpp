#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mast/eval.hpp"
#include "mast/policy.hpp"

namespace mast {

struct RewardConfig {
  double success_bonus = 10.0;     // s
  double time_penalty = -0.01;     // lambda, added every step
  double collision_penalty = -0.01;
  double explore_beta = 0.25;
  bool exploration_enabled = true;
};

/// R = (prev_geo - new_geo) + lambda + s*reached + collision_penalty*collided
///     + beta * cov_delta (when exploration is enabled).
double step_reward(double prev_geo, double new_geo, bool reached_goal, bool collided,
                   double cov_delta, const RewardConfig& cfg);

struct TrainConfig {
  int rollout_len = 256;  // T
  int n_envs = 8;
  double lr = 1e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  long total_steps = 0;
  int seg_len = 64;            // truncated-BPTT segment inside the rollout
  long ckpt_interval = 100000;
  int eval_interval_iters = 10;
  int eval_episodes = 16;
  double min_geo = 2.0;
  double max_geo = 30.0;
  int max_steps = 500;

  void validate() const;
};

/// One rollout's transitions, flattened [env][t]. Raw sensor rays are stored
/// at full precision so that update-time forward passes reproduce rollout
/// arithmetic bit for bit.
struct RolloutBuffer {
  int T = 0, n_envs = 0, n_rays = 0, ego_cells = 0, hidden = 0, seg_len = 0;
  std::vector<double> ray_depth;        // [n*T*W]
  std::vector<std::uint8_t> ray_class;  // [n*T*W]
  std::vector<CellBits> ego_bits;       // [n*T*cells]
  std::vector<double> goal_dist, goal_bearing;            // [n*T]
  std::vector<std::uint8_t> prev_action, action, done, collided;  // [n*T]
  std::vector<double> log_prob, value, reward;            // [n*T]
  std::vector<double> seg_hidden;       // [n * (T/seg_len) * hidden]
  std::vector<double> bootstrap_value;  // [n]

  std::size_t idx(int env, int t) const {
    return static_cast<std::size_t>(env) * T + static_cast<std::size_t>(t);
  }
  void allocate(int T_, int n_envs_, int n_rays_, int ego_cells_, int hidden_, int seg_len_);
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t;
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; returns = A + V.
/// Arrays cover one environment's T steps; `bootstrap` is V_T.
void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                 double gae_lambda, std::span<double> advantages, std::span<double> returns);

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-5). Reads each
/// parameter's accumulated gradient.
class Adam {
 public:
  Adam(ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-5);
  void step();
  long steps_taken() const { return t_; }

 private:
  ParamSet& params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scale all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(ParamSet& params, double max_norm);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double grad_norm = 0.0;
};

struct IterationStats {
  long steps = 0;
  long episodes = 0;
  double mean_return = 0.0;
  double success = 0.0;  // last mini-eval
  double spl = 0.0;      // last mini-eval
  UpdateStats update;
};

/// Raised when the optimizer encounters a non-finite loss; carries the last
/// good stats in the message.
struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Trainer {
 public:
  Trainer(const PolicyConfig& policy_cfg, const TrainConfig& train_cfg,
          const RewardConfig& reward_cfg, std::vector<std::shared_ptr<const World>> train_worlds,
          std::vector<std::shared_ptr<const World>> val_worlds, std::uint64_t seed);

  PolicyNetwork& policy() { return *policy_; }
  const PolicyNetwork& policy() const { return *policy_; }
  long steps_done() const { return steps_done_; }
  long episodes_done() const { return episodes_done_; }

  /// Collect T steps per environment with sampled actions (auto-reset).
  RolloutBuffer collect_rollouts();
  /// Clipped-surrogate update over the buffer; advantages normalized batch-wide.
  UpdateStats ppo_update(const RolloutBuffer& buffer);

  /// Full loop: alternate collect/update until total_steps, writing
  /// checkpoints and a metrics CSV under out_dir.
  void train(const std::string& out_dir, std::uint64_t config_seed);

  /// One collect+update iteration; returns stats (exposed for tests).
  IterationStats iterate();

 private:
  struct EnvRunner {
    Environment env;
    std::unique_ptr<WorldSemanticMap> map;
    PolicyState state;
    Rng action_rng;
    Rng episode_rng;
    double prev_cov = 0.0;
    double ep_return = 0.0;

    EnvRunner(const SensorConfig& sensor, int max_steps, Rng a, Rng e)
        : env(sensor, max_steps), action_rng(a), episode_rng(e) {}
  };

  void reset_runner(EnvRunner& runner);
  void collect_env(int e, RolloutBuffer& buffer);
  /// Loss over one segment, scaled by inv_batch; accumulates stats.
  Tensor segment_loss(const PolicyNetwork& net, const RolloutBuffer& buffer,
                      std::span<const double> advantages, std::span<const double> returns,
                      int env, int seg, double inv_batch, UpdateStats& stats) const;

  PolicyConfig policy_cfg_;
  TrainConfig train_cfg_;
  RewardConfig reward_cfg_;
  std::vector<std::shared_ptr<const World>> train_worlds_, val_worlds_;
  std::uint64_t seed_;
  std::optional<PolicyNetwork> policy_;
  std::optional<Adam> optimizer_;
  std::vector<std::unique_ptr<EnvRunner>> runners_;
  Rng shuffle_rng_;
  long steps_done_ = 0;
  long episodes_done_ = 0;
  double recent_return_sum_ = 0.0;
  long recent_return_count_ = 0;
};

}  // namespace mast
