#include "llmpoet/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace llmpoet::ppo {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void PpoConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(fmt::format("ppo.{} must be > 0", name));
  };
  positive(clip_eps, "clip_eps");
  positive(max_grad_norm, "max_grad_norm");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("ppo.gamma must be in (0, 1]");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw ConfigError("ppo.gae_lambda must be in [0, 1]");
  if (!(learning_rate >= 0)) throw ConfigError("ppo.learning_rate must be >= 0");
  if (epochs_per_update < 1) throw ConfigError("ppo.epochs_per_update must be >= 1");
  if (minibatch < 1) throw ConfigError("ppo.minibatch must be >= 1");
  if (rollout_steps < 1) throw ConfigError("ppo.rollout_steps must be >= 1");
  if (updates_per_poet_iter < 0) throw ConfigError("ppo.updates_per_poet_iter must be >= 0");
  if (entropy_coef < 0 || value_coef < 0) throw ConfigError("ppo loss coefficients must be >= 0");
  if (hidden < 1) throw ConfigError("ppo.hidden must be >= 1");
}

#define LLMPOET_PPO_FIELDS(X)                                                                 \
  X(clip_eps) X(gamma) X(gae_lambda) X(learning_rate) X(epochs_per_update) X(minibatch)      \
  X(rollout_steps) X(updates_per_poet_iter) X(entropy_coef) X(value_coef) X(max_grad_norm)   \
  X(hidden) X(init_log_std)

nlohmann::json to_json(const PpoConfig& cfg) {
  nlohmann::json j;
#define X(name) j[#name] = cfg.name;
  LLMPOET_PPO_FIELDS(X)
#undef X
  return j;
}

PpoConfig ppo_config_from_json(const nlohmann::json& j, PpoConfig cfg) {
  if (!j.is_object()) throw ConfigError("[ppo] must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    bool known = false;
    try {
#define X(name)                                      \
  if (key == #name) {                                \
    cfg.name = it.value().get<decltype(cfg.name)>(); \
    known = true;                                    \
  }
      LLMPOET_PPO_FIELDS(X)
#undef X
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("ppo.{}: {}", key, e.what()));
    }
    if (!known) throw ConfigError("unknown key ppo." + key);
  }
  cfg.validate();
  return cfg;
}

void Trajectory::push(std::vector<double> obs, std::vector<double> action, double log_prob,
                      double reward, double value, bool done) {
  observations.push_back(std::move(obs));
  actions.push_back(std::move(action));
  log_probs.push_back(log_prob);
  rewards.push_back(reward);
  values.push_back(value);
  dones.push_back(done ? 1 : 0);
}

Advantages gae(const Trajectory& traj, double gamma, double lambda) {
  const std::size_t n = traj.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = traj.last_value;
  for (std::size_t k = n; k-- > 0;) {
    const double live = traj.dones[k] ? 0.0 : 1.0;
    const double delta = traj.rewards[k] + gamma * next_value * live - traj.values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + traj.values[k];
    next_value = traj.values[k];
  }
  return out;
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  for (double& a : adv) a -= mean;
  if (adv.size() == 1) return;
  double ss = 0.0;
  for (double a : adv) ss += a * a;
  const double scale = 1.0 / (std::sqrt(ss / n) + 1e-8);
  for (double& a : adv) a *= scale;
}

LossTerms ppo_loss(const PolicyParams& params, const Batch& b, const PpoConfig& cfg, VectorXd* grad) {
  const Index B = b.size();
  const double inv_b = 1.0 / static_cast<double>(B);
  const ParamLayout L(params);
  const VectorXd log_std = params.theta.segment(static_cast<Index>(L.log_std), params.act_dim);
  const VectorXd inv_var = (-2.0 * log_std).array().exp();
  const ForwardCache cache = forward_batch(params, b.obs);

  // log pi(a|s) = sum_i -0.5 z_i^2 - log_std_i - 0.5 log(2 pi)
  const MatrixXd diff = b.actions - cache.mean;
  constexpr double half_log_2pi = 0.91893853320467274178;
  const VectorXd logp = (-0.5 * (diff.array().square().colwise() * inv_var.array()).colwise().sum().transpose())
                            .array() - log_std.sum() - half_log_2pi * params.act_dim;

  LossTerms t;
  VectorXd d_logp(B);  // dL / d log pi per sample
  for (Index i = 0; i < B; ++i) {
    const double log_ratio = logp(i) - b.log_probs_old(i);
    const double r = std::exp(log_ratio);
    const double adv = b.advantages(i);
    const double clipped = std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double unclipped_obj = r * adv;
    const double clipped_obj = clipped * adv;
    // The gradient flows through r only when the unclipped term is the min.
    if (unclipped_obj <= clipped_obj) {
      t.policy_loss -= unclipped_obj;
      d_logp(i) = -unclipped_obj * inv_b;
    } else {
      t.policy_loss -= clipped_obj;
      d_logp(i) = 0.0;
    }
    t.approx_kl -= log_ratio;
    if (std::abs(r - 1.0) > cfg.clip_eps) t.clip_frac += 1.0;
  }
  t.policy_loss *= inv_b;
  t.approx_kl *= inv_b;
  t.clip_frac *= inv_b;

  const Eigen::RowVectorXd verr = cache.value - b.returns.transpose();
  t.value_loss = verr.squaredNorm() * inv_b;
  // Differential entropy of a diagonal Gaussian.
  t.entropy = log_std.sum() + params.act_dim * (half_log_2pi + 0.5);
  t.total = t.policy_loss + cfg.value_coef * t.value_loss - cfg.entropy_coef * t.entropy;

  if (grad) {
    // d log pi / d mean = (a - mean) / var ; d log pi / d log_std = z^2 - 1
    const MatrixXd d_mean = (diff.array().colwise() * inv_var.array()).rowwise() * d_logp.transpose().array();
    const MatrixXd z2 = diff.array().square().colwise() * inv_var.array();
    const VectorXd d_log_std =
        (z2.array() - 1.0).matrix() * d_logp - cfg.entropy_coef * VectorXd::Ones(params.act_dim);
    const Eigen::RowVectorXd d_value = (2.0 * cfg.value_coef * inv_b) * verr;
    *grad = backward_batch(params, cache, d_mean, d_log_std, d_value);
  }
  return t;
}

void adam_step(VectorXd& theta, const VectorXd& grad, AdamState& s, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (s.m.size() != theta.size()) {
    s.m = VectorXd::Zero(theta.size());
    s.v = VectorXd::Zero(theta.size());
    s.step = 0;
  }
  ++s.step;
  s.m = beta1 * s.m + (1.0 - beta1) * grad;
  s.v = beta2 * s.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
  theta.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
}

UpdateResult ppo_update(const PolicyParams& params, const std::vector<Trajectory>& trajectories,
                        const PpoConfig& cfg, Rng& rng, AdamState* adam) {
  std::size_t total = 0;
  for (const auto& tr : trajectories) total += tr.size();
  if (total == 0) throw Error("ppo_update needs at least one transition");

  // Flatten experience and compute advantages per trajectory.
  MatrixXd obs(params.obs_dim, static_cast<Index>(total));
  MatrixXd act(params.act_dim, static_cast<Index>(total));
  VectorXd logp(static_cast<Index>(total)), adv(static_cast<Index>(total)), ret(static_cast<Index>(total));
  Index col = 0;
  for (const auto& tr : trajectories) {
    const Advantages a = gae(tr, cfg.gamma, cfg.gae_lambda);
    for (std::size_t k = 0; k < tr.size(); ++k, ++col) {
      if (static_cast<int>(tr.observations[k].size()) != params.obs_dim ||
          static_cast<int>(tr.actions[k].size()) != params.act_dim)
        throw PolicyError(PolicyErrc::ShapeMismatch, "trajectory shape does not match the policy");
      obs.col(col) = Eigen::Map<const VectorXd>(tr.observations[k].data(), params.obs_dim);
      act.col(col) = Eigen::Map<const VectorXd>(tr.actions[k].data(), params.act_dim);
      logp(col) = tr.log_probs[k];
      adv(col) = a.advantages[k];
      ret(col) = a.returns[k];
    }
  }

  UpdateResult res{params, {}};
  AdamState local;
  AdamState& opt = adam ? *adam : local;
  const AdamState opt_before = opt;
  std::vector<Index> order(total);
  std::iota(order.begin(), order.end(), Index{0});
  const Index mb = std::min<Index>(cfg.minibatch, static_cast<Index>(total));
  VectorXd grad;

  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < static_cast<Index>(total); start += mb) {
      const Index n = std::min<Index>(mb, static_cast<Index>(total) - start);
      Batch b;
      b.obs.resize(params.obs_dim, n);
      b.actions.resize(params.act_dim, n);
      b.log_probs_old.resize(n);
      b.advantages.resize(n);
      b.returns.resize(n);
      for (Index i = 0; i < n; ++i) {
        const Index s = order[static_cast<std::size_t>(start + i)];
        b.obs.col(i) = obs.col(s);
        b.actions.col(i) = act.col(s);
        b.log_probs_old(i) = logp(s);
        b.advantages(i) = adv(s);
        b.returns(i) = ret(s);
      }
      normalize_advantages(std::span<double>(b.advantages.data(), static_cast<std::size_t>(n)));

      const LossTerms t = ppo_loss(res.params, b, cfg, &grad);
      if (!std::isfinite(t.total) || !grad.allFinite()) {
        if (adam) *adam = opt_before;
        return {params, UpdateStats{.non_finite = true}};
      }
      const double norm = grad.norm();
      if (norm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / norm;
      if (cfg.learning_rate > 0) adam_step(res.params.theta, grad, opt, cfg.learning_rate);

      res.stats.policy_loss += t.policy_loss;
      res.stats.value_loss += t.value_loss;
      res.stats.approx_kl += t.approx_kl;
      res.stats.clip_frac += t.clip_frac;
      ++res.stats.minibatches;
    }
  }
  const double k = 1.0 / res.stats.minibatches;
  res.stats.policy_loss *= k;
  res.stats.value_loss *= k;
  res.stats.approx_kl *= k;
  res.stats.clip_frac *= k;
  if (!res.params.theta.allFinite()) {
    if (adam) *adam = opt_before;
    return {params, UpdateStats{.non_finite = true}};
  }
  return res;
}

}  // namespace llmpoet::ppo
