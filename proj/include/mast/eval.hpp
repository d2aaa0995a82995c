#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mast/policy.hpp"

namespace mast {

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  double shortest_path = 0.0;   // s_i, cells
  double path_length = 0.0;     // d_i, forward moves that covered ground
  double final_geodesic = 0.0;  // agent-to-goal distance when the episode ended
  bool stopped = false;
  int collisions = 0;
  double total_reward = 0.0;    // filled by callers that track rewards
  double final_coverage = 0.0;
};

struct SuccessConfig {
  int max_steps = 500;
  double goal_radius = 1.0;  // success needs geodesic distance < this
};

/// The three-condition test: stopped, under the step cap, within the goal
/// radius. Stumbling onto the goal without Stop does not count.
bool episode_success(const EpisodeResult& result, const SuccessConfig& cfg);

/// Success weighted by path length: mean over episodes of
/// 1{success} * s_i / max(d_i, s_i). Failures contribute zero.
double spl(std::span<const EpisodeResult> results);

struct Report {
  std::string label;
  int n_episodes = 0;
  double success_pct = 0.0;
  double spl_pct = 0.0;
  double mean_steps = 0.0;
};

Report make_report(const std::string& label, std::span<const EpisodeResult> results);

/// Optional per-episode capture for replay/export.
struct EpisodeTrace {
  std::vector<Pose> poses;      // start plus one pose per step
  std::vector<Action> actions;
  EgoMap final_egomap;
  /// Center-cell attention rows (layers x heads), each (2r+1)^2 values.
  std::vector<std::vector<double>> final_attention;
};

/// Run one episode under the policy. `rng` is consumed only in sampling mode.
EpisodeResult run_episode(const PolicyNetwork& net, const Episode& episode, bool greedy,
                          Rng& rng, int max_steps, EpisodeTrace* trace = nullptr);

struct EvalSettings {
  int episodes = 100;
  std::uint64_t seed = 0;
  bool greedy = true;
  double min_geo = 2.0;
  double max_geo = 30.0;
  int max_steps = 500;
};

/// Evaluate across a world set: episode i runs on worlds[i % n] with an
/// episode sampled from a per-index stream of `seed`.
Report run_eval(const PolicyNetwork& net, const std::vector<std::shared_ptr<const World>>& worlds,
                const EvalSettings& settings, const std::string& label,
                std::vector<EpisodeResult>* per_episode = nullptr);

// ---------------------------------------------------------------------------
// Train/val split manifest (manifest.csv: "file,split" rows).

struct SplitManifest {
  std::vector<std::string> train;  // file names, not paths
  std::vector<std::string> val;
};

void write_manifest(const SplitManifest& manifest, const std::string& path);
SplitManifest read_manifest(const std::string& path);

/// Report as CSV (label,n,spl_pct,success_pct,mean_steps rows).
std::string reports_to_csv(std::span<const Report> reports);
/// Aligned text table with Method / Map / SPL(%) / Succ(%) columns.
std::string reports_to_table(std::span<const Report> reports,
                             std::span<const std::string> map_labels);

}  // namespace mast
