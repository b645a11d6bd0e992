#include "llmpoet/rollout.hpp"

namespace llmpoet::sim {

RolloutResult rollout(const grid::VoxelGrid& terrain, const RobotMorphology& morph,
                      const ppo::PolicyParams& policy, int horizon, Rng& rng, bool deterministic,
                      const SimConfig& cfg) {
  return rollout_from(build_world(terrain, morph, cfg), policy, horizon, rng, deterministic, cfg);
}

RolloutResult rollout_from(SimState state, const ppo::PolicyParams& policy, int horizon, Rng& rng,
                           bool deterministic, const SimConfig& cfg) {
  if (horizon < 1) throw ConfigError("rollout horizon must be >= 1");
  if (policy.act_dim != state.actuator_count)
    throw ppo::PolicyError(ppo::PolicyErrc::ShapeMismatch, "policy action size does not match the robot");
  RolloutResult res;
  auto& tr = res.trajectory;
  const double h = cfg.physics_dt();
  double com_x = center_of_mass(state).x;
  for (int t = 0; t < horizon; ++t) {
    auto obs = observe(state, cfg);
    const auto out = ppo::policy_forward(policy, obs);
    std::vector<double> action = deterministic
                                     ? std::vector<double>(out.mean.data(), out.mean.data() + out.mean.size())
                                     : ppo::sample_action(out, rng);
    const double log_prob = ppo::gaussian_log_prob(out.mean, out.log_std, action);
    bool done = t + 1 == horizon;
    double reward = 0.0;
    try {
      for (int k = 0; k < cfg.substeps; ++k) step_inplace(state, action, h, cfg);
      const double x = center_of_mass(state).x;
      reward = x - com_x;
      com_x = x;
      if (fell_off(state, cfg)) {
        res.fell = true;
        done = true;
      }
    } catch (const SimError& e) {
      if (e.code() != SimErrc::NumericalBlowup) throw;
      // Score-so-far: the diverged step contributes nothing.
      res.aborted = true;
      done = true;
    }
    tr.push(std::move(obs), std::move(action), log_prob, reward, out.value, done);
    if (done) break;
  }
  // Read back from the state rather than accumulated, so callers can check
  // the telescoping sum against an independent value.
  res.score = res.aborted ? com_x - state.initial_com_x : score(state);
  return res;
}

}  // namespace llmpoet::sim
