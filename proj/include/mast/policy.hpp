#pragma once

#include <optional>
#include <string>

#include "mast/env.hpp"
#include "mast/mapper.hpp"
#include "mast/params.hpp"
#include "mast/transformer.hpp"

namespace mast {

enum class MapVariant { none, semantic_attention, occupancy_attention, semantic_cnn };

/// Named model variants exposed by the CLI; each fixes the map input path and
/// whether the exploration reward is paid.
struct VariantSpec {
  const char* name;
  MapVariant map;
  bool exploration;
};

inline constexpr VariantSpec kVariants[] = {
    {"RGBD", MapVariant::none, false},
    {"RGBD+EXP", MapVariant::none, true},
    {"RGBD+SEM", MapVariant::semantic_cnn, true},
    {"RGBD+OCC+ATT", MapVariant::occupancy_attention, true},
    {"MaAST", MapVariant::semantic_attention, true},
};

const VariantSpec* find_variant(const std::string& name);
std::string variant_list();
const VariantSpec& variant_spec(MapVariant map, bool exploration);

struct PolicyConfig {
  MapVariant map_variant = MapVariant::semantic_attention;
  bool exploration_reward = true;
  int hidden = 512;      // N_h
  int action_emb = 32;
  int map_radius = 8;    // r
  int n_classes = 8;     // N_c
  int xform_dim = 128;   // D
  int xform_heads = 4;
  int xform_layers = 2;
  int xform_ff = 512;    // 4 * D
  SensorConfig sensor;

  bool uses_map() const { return map_variant != MapVariant::none; }
  bool uses_attention() const {
    return map_variant == MapVariant::semantic_attention ||
           map_variant == MapVariant::occupancy_attention;
  }
  /// Width of the goal features fed to the GRU: distance and bearing as
  /// (0.1 * dist, sin, cos).
  static constexpr int kGoalDims = 3;
  /// Previous-action token for the first step of an episode.
  static constexpr int kStartToken = kNumActions;
};

/// Recurrent state carried across steps of one episode.
struct PolicyState {
  Tensor hidden;  // [1, N_h]
  int prev_action = PolicyConfig::kStartToken;
};

/// Pick an index from a probability row given a uniform draw in [0,1).
int sample_categorical(std::span<const double> probs, double u);

class PolicyNetwork {
 public:
  /// Fresh parameters.
  PolicyNetwork(const PolicyConfig& cfg, Rng& rng);
  /// Bind to already-registered parameters (checkpoint load, worker clone).
  PolicyNetwork(const PolicyConfig& cfg, ParamSet params);

  const PolicyConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  PolicyState initial_state() const;

  Tensor visual_encoder(const Tensor& image) const;
  /// Map feature for the configured variant; undefined Tensor for none.
  Tensor map_feature(const EgoMap& ego, std::vector<std::vector<double>>* attn = nullptr) const;
  Tensor fuse(const Tensor& r_emb, const Tensor& m_emb) const;
  Tensor gru_step(const Tensor& fused, int prev_action, std::pair<double, double> goal,
                  const Tensor& hidden) const;
  /// (logits [1,4], value [1,1]).
  std::pair<Tensor, Tensor> heads(const Tensor& hidden) const;

  struct StepOut {
    Tensor logits;  // [1, 4]
    Tensor value;   // [1, 1]
    Tensor hidden;  // [1, N_h]
  };
  StepOut forward_step(const Tensor& image, const EgoMap& ego, std::pair<double, double> goal,
                       int prev_action, const Tensor& hidden,
                       std::vector<std::vector<double>>* attn = nullptr) const;

  struct ActOut {
    Action action;
    double log_prob;
    double value;
  };
  /// Full forward pass + action selection; advances `state`.
  ActOut act(const Observation& obs, const EgoMap& ego, std::pair<double, double> goal,
             PolicyState& state, bool greedy, Rng& rng) const;

  const MapTransformer* transformer() const { return xform_ ? &*xform_ : nullptr; }

  /// Serialize into a parameter container whose leading entries carry the
  /// config header (variant, sizes, sensor, seed).
  void save_checkpoint(std::uint64_t seed, const std::string& path) const;

 private:
  void bind();

  PolicyConfig cfg_;
  ParamSet params_;
  std::optional<MapTransformer> xform_;
  // bound handles
  Tensor c1w_, c1b_, c2w_, c2b_, c3w_, c3b_, fcw_, fcb_;
  Tensor mc1w_, mc1b_, mc2w_, mc2b_, mc3w_, mc3b_, mfcw_, mfcb_;
  Tensor fuse_w_, fuse_b_;
  Tensor act_emb_;
  Tensor gwz_, guz_, gbz_, gwr_, gur_, gbr_, gwh_, guh_, gbh_;
  Tensor actor_w_, actor_b_, critic_w_, critic_b_;
};

struct LoadedCheckpoint {
  PolicyConfig config;
  std::uint64_t seed = 0;
  std::optional<PolicyNetwork> net;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace mast
