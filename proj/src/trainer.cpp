#include "llmpoet/trainer.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "llmpoet/io.hpp"

namespace llmpoet::ppo {

PolicyParams fresh_policy(const sim::RobotMorphology& morph, const PpoConfig& cfg, Rng& rng) {
  const int obs = static_cast<int>(sim::observation_size(morph.node_count()));
  return PolicyParams::init(obs, morph.actuator_count(), rng, cfg.hidden, cfg.init_log_std);
}

TrainResult train_pair(const grid::VoxelGrid& terrain, const sim::RobotMorphology& morph,
                       const PolicyParams& params, const PpoConfig& cfg, Rng& rng,
                       const sim::SimConfig& sim_cfg) {
  cfg.validate();
  const sim::SimState start = sim::build_world(terrain, morph, sim_cfg);
  TrainResult res;
  res.params = params;
  res.best_score = -std::numeric_limits<double>::infinity();
  res.best_eval_score = -std::numeric_limits<double>::infinity();

  auto evaluate = [&] {
    auto ep = sim::rollout_from(start, res.params, sim_cfg.horizon, rng, true, sim_cfg);
    res.env_steps += static_cast<long>(ep.trajectory.size());
    res.final_eval_score = ep.score;
    res.best_eval_score = std::max(res.best_eval_score, ep.score);
    res.best_score = std::max(res.best_score, ep.score);
    return ep.score;
  };

  if (cfg.updates_per_poet_iter == 0) {
    evaluate();
    return res;
  }

  AdamState adam;
  for (int u = 0; u < cfg.updates_per_poet_iter; ++u) {
    UpdateRecord rec;
    rec.update = u;
    rec.rollout_best = -std::numeric_limits<double>::infinity();
    std::vector<Trajectory> batch;
    std::size_t collected = 0;
    while (collected < static_cast<std::size_t>(cfg.rollout_steps)) {
      auto ep = sim::rollout_from(start, res.params, sim_cfg.horizon, rng, false, sim_cfg);
      collected += ep.trajectory.size();
      rec.rollout_best = std::max(rec.rollout_best, ep.score);
      batch.push_back(std::move(ep.trajectory));
    }
    res.env_steps += static_cast<long>(collected);
    res.best_score = std::max(res.best_score, rec.rollout_best);

    auto up = ppo_update(res.params, batch, cfg, rng, &adam);
    rec.stats = up.stats;
    if (up.stats.non_finite)
      ++res.non_finite_updates;
    else
      res.params = std::move(up.params);
    rec.eval_score = evaluate();
    res.updates.push_back(rec);
  }
  return res;
}

void append_training_stats(const std::filesystem::path& path, int iteration, const TrainResult& r) {
  std::string out;
  if (!std::filesystem::exists(path))
    out = "iteration,update,policy_loss,value_loss,approx_kl,clip_frac,rollout_best,eval_score,best_score,non_finite\n";
  using io::format_double;
  for (const auto& u : r.updates)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", iteration, u.update, format_double(u.stats.policy_loss),
                       format_double(u.stats.value_loss), format_double(u.stats.approx_kl),
                       format_double(u.stats.clip_frac), format_double(u.rollout_best),
                       format_double(u.eval_score), format_double(r.best_score), u.stats.non_finite ? 1 : 0);
  io::append_file(path, out);
}

}  // namespace llmpoet::ppo
