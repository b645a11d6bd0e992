#pragma once

#include "llmpoet/ppo.hpp"
#include "llmpoet/simulator.hpp"

namespace llmpoet::sim {

struct RolloutResult {
  ppo::Trajectory trajectory;
  double score = 0.0;
  bool aborted = false;   // NumericalBlowup ended the episode
  bool fell = false;      // COM dropped below the terrain
};

/// observe -> policy -> cfg.substeps physics steps, for up to `horizon`
/// control steps. Reward per control step is the change in COM x, so the
/// rewards always sum to the returned score. Deterministic rollouts use the
/// policy mean and draw nothing from `rng`.
RolloutResult rollout(const grid::VoxelGrid& terrain, const RobotMorphology& morph,
                      const ppo::PolicyParams& policy, int horizon, Rng& rng,
                      bool deterministic = false, const SimConfig& cfg = {});

/// Same loop starting from an already built world. The last recorded step
/// is always terminal: time is part of the observation, so the horizon is.
RolloutResult rollout_from(SimState state, const ppo::PolicyParams& policy, int horizon, Rng& rng,
                           bool deterministic, const SimConfig& cfg);

}  // namespace llmpoet::sim
