#pragma once

#include <filesystem>
#include <vector>

#include "llmpoet/ppo.hpp"
#include "llmpoet/rollout.hpp"

namespace llmpoet::ppo {

struct UpdateRecord {
  int update = 0;
  UpdateStats stats;
  double rollout_best = 0.0;  // best training episode collected before this update
  double eval_score = 0.0;    // deterministic episode after this update
};

struct TrainResult {
  PolicyParams params;
  /// Best score of any complete episode seen, stochastic training episodes
  /// and deterministic evaluation episodes alike.
  double best_score = 0.0;
  /// Best deterministic (mean action) episode score; the comparable number
  /// across agents.
  double best_eval_score = 0.0;
  double final_eval_score = 0.0;
  std::vector<UpdateRecord> updates;
  int non_finite_updates = 0;
  long env_steps = 0;
};

/// A freshly initialized agent sized for `morph`.
PolicyParams fresh_policy(const sim::RobotMorphology& morph, const PpoConfig& cfg, Rng& rng);

/// Repeats cfg.updates_per_poet_iter times: collect whole episodes until at
/// least cfg.rollout_steps transitions are gathered, run ppo_update, then one
/// deterministic evaluation episode. With zero updates the result is a
/// single evaluation episode of the unchanged agent. An update with a
/// non-finite loss is skipped and counted, never fatal.
TrainResult train_pair(const grid::VoxelGrid& terrain, const sim::RobotMorphology& morph,
                       const PolicyParams& params, const PpoConfig& cfg, Rng& rng,
                       const sim::SimConfig& sim_cfg = {});

/// Appends one row per update: iteration, update, policy_loss, value_loss,
/// approx_kl, clip_frac, rollout_best, eval_score, best_score, non_finite.
void append_training_stats(const std::filesystem::path& path, int iteration, const TrainResult& result);

}  // namespace llmpoet::ppo
