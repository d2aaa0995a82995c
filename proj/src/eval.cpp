#include "mast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mast/env.hpp"

namespace mast {

bool episode_success(const EpisodeResult& result, const SuccessConfig& cfg) {
  return result.stopped && result.steps < cfg.max_steps &&
         result.final_geodesic < cfg.goal_radius;
}

double spl(std::span<const EpisodeResult> results) {
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) {
    if (r.shortest_path <= 0.0)
      throw ContractError("spl: shortest path must be positive");
    if (r.success) total += r.shortest_path / std::max(r.path_length, r.shortest_path);
  }
  return total / static_cast<double>(results.size());
}

Report make_report(const std::string& label, std::span<const EpisodeResult> results) {
  Report rep;
  rep.label = label;
  rep.n_episodes = static_cast<int>(results.size());
  if (results.empty()) return rep;
  int succ = 0;
  double steps = 0.0;
  for (const auto& r : results) {
    succ += r.success ? 1 : 0;
    steps += r.steps;
  }
  rep.success_pct = 100.0 * succ / static_cast<double>(results.size());
  rep.spl_pct = 100.0 * spl(results);
  rep.mean_steps = steps / static_cast<double>(results.size());
  return rep;
}

EpisodeResult run_episode(const PolicyNetwork& net, const Episode& episode, bool greedy,
                          Rng& rng, int max_steps, EpisodeTrace* trace) {
  const PolicyConfig& cfg = net.config();
  Environment env(cfg.sensor, max_steps);
  env.reset(episode);
  WorldSemanticMap map(env.world().width, env.world().height, cfg.n_classes);
  map.integrate(env.pose(), render_rays(env.world(), env.pose(), cfg.sensor));
  PolicyState state = net.initial_state();
  if (trace) {
    trace->poses.clear();
    trace->actions.clear();
    trace->poses.push_back(env.pose());
  }
  while (!env.done()) {
    Observation obs = env.observe();
    EgoMap ego = egocentric_crop(map, env.pose(), cfg.map_radius);
    auto out = net.act(obs, ego, env.goal_vector(), state, greedy, rng);
    env.step(out.action);
    map.integrate(env.pose(), render_rays(env.world(), env.pose(), cfg.sensor));
    if (trace) {
      trace->poses.push_back(env.pose());
      trace->actions.push_back(out.action);
    }
  }
  EpisodeResult result;
  result.steps = env.steps();
  result.shortest_path = episode.shortest_path;
  result.path_length = env.path_length();
  result.final_geodesic = env.geodesic_to_goal();
  result.stopped = env.stopped();
  result.collisions = env.collisions();
  result.final_coverage = map.coverage();
  result.success = episode_success(result, SuccessConfig{max_steps, 1.0});
  if (trace) {
    trace->final_egomap = egocentric_crop(map, env.pose(), cfg.map_radius);
    if (net.config().uses_attention()) {
      trace->final_attention.clear();
      (void)net.map_feature(trace->final_egomap, &trace->final_attention);
    }
  }
  return result;
}

Report run_eval(const PolicyNetwork& net, const std::vector<std::shared_ptr<const World>>& worlds,
                const EvalSettings& settings, const std::string& label,
                std::vector<EpisodeResult>* per_episode) {
  if (worlds.empty()) throw ContractError("run_eval: no worlds");
  std::vector<EpisodeResult> results;
  results.reserve(static_cast<std::size_t>(settings.episodes));
  for (int i = 0; i < settings.episodes; ++i) {
    Rng ep_rng(derive_seed(settings.seed, static_cast<std::uint64_t>(i)));
    const auto& world = worlds[static_cast<std::size_t>(i) % worlds.size()];
    Episode episode = sample_episode(world, ep_rng, settings.min_geo, settings.max_geo);
    results.push_back(run_episode(net, episode, settings.greedy, ep_rng, settings.max_steps));
  }
  Report rep = make_report(label, results);
  if (per_episode) *per_episode = std::move(results);
  return rep;
}

// ---------------------------------------------------------------------------

void write_manifest(const SplitManifest& manifest, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "file,split\n";
  for (const auto& f : manifest.train) os << f << ",train\n";
  for (const auto& f : manifest.val) os << f << ",val\n";
  if (!os) throw IoError("write failed: " + path);
}

SplitManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  SplitManifest manifest;
  std::string line;
  if (!std::getline(is, line) || line != "file,split")
    throw ParseError(path + " line 1: expected header 'file,split'");
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(path + " line " + std::to_string(line_no) + ": expected 'file,split'");
    const std::string file = line.substr(0, comma);
    const std::string split = line.substr(comma + 1);
    if (split == "train")
      manifest.train.push_back(file);
    else if (split == "val")
      manifest.val.push_back(file);
    else
      throw ParseError(path + " line " + std::to_string(line_no) + ": unknown split '" + split +
                       "'");
  }
  return manifest;
}

std::string reports_to_csv(std::span<const Report> reports) {
  std::ostringstream os;
  os << "method,episodes,spl_pct,success_pct,mean_steps\n";
  for (const auto& r : reports) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.2f,%.2f,%.2f\n", r.label.c_str(), r.n_episodes,
                  r.spl_pct, r.success_pct, r.mean_steps);
    os << buf;
  }
  return os.str();
}

std::string reports_to_table(std::span<const Report> reports,
                             std::span<const std::string> map_labels) {
  std::ostringstream os;
  os << "Method          Map                   SPL(%)  Succ(%)\n";
  os << "------------------------------------------------------\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-15s %-21s %6.1f  %7.1f\n", reports[i].label.c_str(),
                  i < map_labels.size() ? map_labels[i].c_str() : "", reports[i].spl_pct,
                  reports[i].success_pct);
    os << buf;
  }
  return os.str();
}

}  // namespace mast
