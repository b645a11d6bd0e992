#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/policy.hpp"

namespace llmpoet::ppo {

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  int epochs_per_update = 4;
  int minibatch = 64;
  int rollout_steps = 600;
  int updates_per_poet_iter = 30;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int hidden = 64;
  double init_log_std = -0.5;

  void validate() const;
};

nlohmann::json to_json(const PpoConfig& cfg);
/// Overlays keys from `j`; unknown keys raise ConfigError.
PpoConfig ppo_config_from_json(const nlohmann::json& j, PpoConfig base = {});

/// One contiguous stretch of experience. `last_value` bootstraps the step
/// after the final one when that step is not terminal.
struct Trajectory {
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<char> dones;
  double last_value = 0.0;

  std::size_t size() const { return rewards.size(); }
  void push(std::vector<double> obs, std::vector<double> action, double log_prob, double reward,
            double value, bool done);
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// advantage_t = sum_k (gamma lambda)^k delta_{t+k},
/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, returns_t = advantage_t + V_t.
Advantages gae(const Trajectory& traj, double gamma, double lambda);

/// In place: subtract the mean and divide by (population std + 1e-8).
/// Batches of one are only centered.
void normalize_advantages(std::span<double> adv);

/// Flattened minibatch, one column per sample.
struct Batch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd log_probs_old;
  Eigen::VectorXd advantages;  // already normalized
  Eigen::VectorXd returns;

  Eigen::Index size() const { return obs.cols(); }
};

struct LossTerms {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;  // mean squared error, before value_coef
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
};

/// Clipped-surrogate loss: -mean(min(r A, clip(r) A)) + value_coef MSE
/// - entropy_coef H, and its gradient with respect to theta.
LossTerms ppo_loss(const PolicyParams& params, const Batch& batch, const PpoConfig& cfg,
                   Eigen::VectorXd* grad = nullptr);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// One Adam step (beta 0.9 / 0.999, eps 1e-8) on `theta`.
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  int minibatches = 0;
  bool non_finite = false;  // update aborted, parameters left unchanged
};

struct UpdateResult {
  PolicyParams params;
  UpdateStats stats;
};

/// cfg.epochs_per_update shuffled passes of minibatch gradient steps over
/// all samples of `trajectories`. `adam` carries optimizer moments across
/// calls; a fresh state is used when null.
UpdateResult ppo_update(const PolicyParams& params, const std::vector<Trajectory>& trajectories,
                        const PpoConfig& cfg, Rng& rng, AdamState* adam = nullptr);

}  // namespace llmpoet::ppo
