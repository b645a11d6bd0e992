#include "doctest.h"

#include <cmath>
#include <numeric>

#include "llmpoet/trainer.hpp"
#include "trainer_oracles.hpp"

using namespace llmpoet;
using namespace llmpoet::ppo;
using Eigen::VectorXd;

namespace {

PolicyParams small_random_policy(std::uint64_t seed, int obs = 4, int act = 2, int hidden = 5) {
  Rng rng(seed);
  auto p = PolicyParams::zeros(obs, act, hidden);
  for (auto& w : p.theta) w = gaussian(rng, 0.0, 0.7);
  return p;
}

std::vector<double> random_obs(Rng& rng, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = gaussian(rng);
  return x;
}

grid::VoxelGrid flat_terrain() {
  grid::VoxelGrid t(100, 20);
  for (int x = 0; x < 100; ++x)
    for (int k = 0; k < 3; ++k) t.set(x, 19 - k, grid::Voxel::Rigid);
  return t;
}

}  // namespace

TEST_CASE("zero weights give zero mean and value") {
  auto p = PolicyParams::zeros(7, 3);
  std::vector<double> obs{1, -2, 3, 0.5, 0, 9, -1};
  auto out = policy_forward(p, obs);
  CHECK(out.mean.isZero(0.0));
  CHECK(out.value == 0.0);
  auto again = policy_forward(p, obs);
  CHECK(again.mean == out.mean);
  CHECK(again.value == out.value);

  std::vector<double> short_obs{1, 2};
  CHECK_THROWS_AS(policy_forward(p, short_obs), PolicyError);
}

TEST_CASE("initialization") {
  Rng a(3), b(3);
  auto p = PolicyParams::init(10, 2, a);
  auto q = PolicyParams::init(10, 2, b);
  CHECK(p == q);
  const ParamLayout L(p);
  CHECK(p.theta.segment(static_cast<Eigen::Index>(L.log_std), 2).isConstant(-0.5));
  CHECK(p.theta.segment(static_cast<Eigen::Index>(L.b1), 64).isZero(0.0));
  // W2 is a scaled orthogonal matrix.
  Eigen::Map<const Eigen::MatrixXd> w2(p.theta.data() + L.W2, 64, 64);
  CHECK((w2.transpose() * w2 / 2.0 - Eigen::MatrixXd::Identity(64, 64)).norm() < 1e-9);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(11);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto p = small_random_policy(seed);
    const auto x = random_obs(rng, p.obs_dim);
    const std::vector<double> cm{0.7, -1.3};  // loss = cm . mean + cv * value + cl . log_std
    const double cv = 0.9;
    const std::vector<double> cl{0.4, -0.2};
    auto loss = [&](const PolicyParams& q) {
      auto out = policy_forward(q, x);
      return cm[0] * out.mean(0) + cm[1] * out.mean(1) + cv * out.value + cl[0] * out.log_std(0) +
             cl[1] * out.log_std(1);
    };
    Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), p.obs_dim, 1);
    auto cache = forward_batch(p, X);
    Eigen::MatrixXd dm(2, 1);
    dm << cm[0], cm[1];
    VectorXd dl(2);
    dl << cl[0], cl[1];
    Eigen::RowVectorXd dv(1);
    dv << cv;
    const VectorXd g = backward_batch(p, cache, dm, dl, dv);

    double worst = 0.0;
    const double eps = 1e-5;
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
      auto plus = p, minus = p;
      plus.theta(i) += eps;
      minus.theta(i) -= eps;
      const double numeric = (loss(plus) - loss(minus)) / (2 * eps);
      worst = std::max(worst, testing::grad_rel_error(g(i), numeric));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("ppo loss gradient matches central differences") {
  auto p = small_random_policy(21, 3, 2, 4);
  Rng rng(5);
  Batch b;
  const int n = 6;
  b.obs.resize(3, n);
  b.actions.resize(2, n);
  b.log_probs_old.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) b.obs(k, i) = gaussian(rng);
    for (int k = 0; k < 2; ++k) b.actions(k, i) = gaussian(rng);
    auto out = policy_forward(p, std::vector<double>(b.obs.col(i).data(), b.obs.col(i).data() + 3));
    // Old log-probs near the current ones keep the ratio inside the clip band.
    b.log_probs_old(i) = gaussian_log_prob(out.mean, out.log_std,
                                           std::vector<double>(b.actions.col(i).data(), b.actions.col(i).data() + 2)) +
                         gaussian(rng, 0.0, 0.02);
    b.advantages(i) = gaussian(rng);
    b.returns(i) = gaussian(rng);
  }
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  VectorXd g;
  ppo_loss(p, b, cfg, &g);
  double worst = 0.0;
  const double eps = 1e-5;
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
    auto plus = p, minus = p;
    plus.theta(i) += eps;
    minus.theta(i) -= eps;
    const double numeric = (ppo_loss(plus, b, cfg).total - ppo_loss(minus, b, cfg).total) / (2 * eps);
    worst = std::max(worst, testing::grad_rel_error(g(i), numeric));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gae") {
  Rng rng(2);
  Trajectory tr;
  for (int t = 0; t < 10; ++t)
    tr.push({0.0}, {0.0}, 0.0, gaussian(rng), gaussian(rng), t == 9);
  const double gamma = 0.97;

  SUBCASE("lambda 0 collapses to the TD error") {
    tr.dones.back() = 0;
    tr.last_value = 0.37;
    auto a = gae(tr, gamma, 0.0);
    for (std::size_t t = 0; t < 10; ++t) {
      const double next = t + 1 < 10 ? tr.values[t + 1] : tr.last_value;
      const double delta = tr.rewards[t] + gamma * next - tr.values[t];
      CHECK(a.advantages[t] == delta);
      CHECK(a.returns[t] == a.advantages[t] + tr.values[t]);
    }
  }
  SUBCASE("lambda 1 matches discounted sums") {
    tr.last_value = 123.0;  // ignored: the last step is terminal
    auto a = gae(tr, gamma, 1.0);
    auto ref = testing::brute_force_lambda1(tr.rewards, tr.values, gamma);
    for (std::size_t t = 0; t < 10; ++t) CHECK(std::abs(a.advantages[t] - ref[t]) < 1e-10);
  }
  SUBCASE("episode boundary inside a trajectory") {
    tr.dones[4] = 1;
    auto a = gae(tr, gamma, 1.0);
    std::vector<double> r1(tr.rewards.begin(), tr.rewards.begin() + 5), v1(tr.values.begin(), tr.values.begin() + 5);
    std::vector<double> r2(tr.rewards.begin() + 5, tr.rewards.end()), v2(tr.values.begin() + 5, tr.values.end());
    auto ref1 = testing::brute_force_lambda1(r1, v1, gamma);
    auto ref2 = testing::brute_force_lambda1(r2, v2, gamma);
    for (std::size_t t = 0; t < 5; ++t) CHECK(std::abs(a.advantages[t] - ref1[t]) < 1e-10);
    for (std::size_t t = 0; t < 5; ++t) CHECK(std::abs(a.advantages[t + 5] - ref2[t]) < 1e-10);
  }
  SUBCASE("all zero") {
    for (auto& r : tr.rewards) r = 0;
    for (auto& v : tr.values) v = 0;
    auto a = gae(tr, gamma, 0.95);
    for (double v : a.advantages) CHECK(v == 0.0);
  }
}

TEST_CASE("advantage normalization") {
  Rng rng(8);
  for (int n : {2, 7, 64}) {
    std::vector<double> a(static_cast<std::size_t>(n));
    for (auto& v : a) v = gaussian(rng, 3.0, 5.0);
    normalize_advantages(a);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double var = 0.0;
    for (double v : a) var += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-6);
  }
  std::vector<double> one{4.0};
  normalize_advantages(one);
  CHECK(one[0] == 0.0);
}

namespace {

std::vector<Trajectory> fixture_batch(const PolicyParams& p, std::uint64_t seed, int steps = 3) {
  Rng rng(seed);
  Trajectory tr;
  for (int t = 0; t < steps; ++t) {
    auto obs = random_obs(rng, p.obs_dim);
    auto out = policy_forward(p, obs);
    auto act = sample_action(out, rng);
    const double lp = gaussian_log_prob(out.mean, out.log_std, act);
    tr.push(obs, act, lp, gaussian(rng), out.value, t + 1 == steps);
  }
  return {tr};
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  auto p = small_random_policy(1);
  PpoConfig cfg;
  cfg.learning_rate = 0.0;
  Rng rng(0);
  auto res = ppo_update(p, fixture_batch(p, 3, 20), cfg, rng);
  CHECK(res.params == p);
  CHECK_FALSE(res.stats.non_finite);
  CHECK(res.stats.minibatches == 4);
}

TEST_CASE("zero advantages only train the critic") {
  auto p = small_random_policy(2);
  auto batch = fixture_batch(p, 4, 10);
  for (auto& r : batch[0].rewards) r = 0.0;
  for (auto& v : batch[0].values) v = 0.0;
  PpoConfig cfg;
  Rng rng(0);
  auto res = ppo_update(p, batch, cfg, rng);
  const ParamLayout L(p);
  const auto actor = static_cast<Eigen::Index>(L.V1);
  CHECK(res.params.theta.head(actor) == p.theta.head(actor));
  CHECK(res.params.theta.tail(p.theta.size() - actor) != p.theta.tail(p.theta.size() - actor));
  CHECK(res.stats.policy_loss == 0.0);
}

TEST_CASE("unclipped single epoch equals a vanilla policy gradient step") {
  auto p = small_random_policy(6, 3, 2, 4);
  auto batch = fixture_batch(p, 9, 3);
  PpoConfig cfg;
  cfg.clip_eps = 1e12;
  cfg.max_grad_norm = 1e12;
  cfg.epochs_per_update = 1;
  cfg.minibatch = 64;
  cfg.learning_rate = 1e-2;
  Rng rng(0);
  auto res = ppo_update(p, batch, cfg, rng);

  const auto adv = gae(batch[0], cfg.gamma, cfg.gae_lambda);
  const auto ref = testing::vanilla_pg_step(p, batch[0].observations, batch[0].actions, adv.advantages,
                                            adv.returns, cfg.value_coef, cfg.learning_rate);
  CHECK((res.params.theta - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("non-finite loss aborts the update") {
  auto p = small_random_policy(3);
  auto batch = fixture_batch(p, 1, 5);
  batch[0].observations[2][0] = std::numeric_limits<double>::quiet_NaN();
  PpoConfig cfg;
  Rng rng(0);
  AdamState adam;
  auto res = ppo_update(p, batch, cfg, rng, &adam);
  CHECK(res.stats.non_finite);
  CHECK(res.params == p);
  CHECK(adam.step == 0);
}

TEST_CASE("one-step bandit converges to the optimum") {
  // obs = [1], reward = -(a - 0.5)^2, every episode is a single step.
  // The default step size needs ~10x more updates on this toy problem.
  Rng rng(17);
  auto p = PolicyParams::init(1, 1, rng, 16);
  PpoConfig cfg;
  cfg.learning_rate = 3e-3;
  AdamState adam;
  const std::vector<double> obs{1.0};
  for (int u = 0; u < 200; ++u) {
    std::vector<Trajectory> batch;
    for (int k = 0; k < 64; ++k) {
      auto out = policy_forward(p, obs);
      auto a = sample_action(out, rng);
      Trajectory tr;
      tr.push(obs, a, gaussian_log_prob(out.mean, out.log_std, a), -(a[0] - 0.5) * (a[0] - 0.5), out.value, true);
      batch.push_back(std::move(tr));
    }
    p = ppo_update(p, batch, cfg, rng, &adam).params;
  }
  const double mean = policy_forward(p, obs).mean(0);
  CHECK(std::abs(mean - 0.5) < 0.05);
}

TEST_CASE("checkpoint json round trip") {
  auto p = small_random_policy(12);
  auto q = policy_from_json(nlohmann::json::parse(to_json(p).dump()));
  CHECK(q == p);
  auto j = to_json(p);
  j["theta"].erase(0);
  CHECK_THROWS_AS(policy_from_json(j), PolicyError);
  CHECK_THROWS_AS(policy_from_json(nlohmann::json::object()), PolicyError);
}

TEST_CASE("ppo config json") {
  auto cfg = ppo_config_from_json({{"learning_rate", 1e-3}, {"updates_per_poet_iter", 0}});
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.updates_per_poet_iter == 0);
  CHECK(cfg.epochs_per_update == 4);
  CHECK_THROWS_AS(ppo_config_from_json({{"lr", 1e-3}}), ConfigError);
  CHECK_THROWS_AS(ppo_config_from_json({{"minibatch", 0}}), ConfigError);
  CHECK(to_json(ppo_config_from_json(to_json(PpoConfig{}))) == to_json(PpoConfig{}));
}

TEST_CASE("train_pair with no updates evaluates once") {
  const auto morph = sim::RobotMorphology::default_walker();
  PpoConfig cfg;
  cfg.updates_per_poet_iter = 0;
  Rng init(1);
  auto p = fresh_policy(morph, cfg, init);
  Rng a(5), b(5);
  auto res = train_pair(flat_terrain(), morph, p, cfg, a);
  CHECK(res.params == p);
  auto direct = sim::rollout(flat_terrain(), morph, p, sim::SimConfig{}.horizon, b, true);
  CHECK(res.best_score == direct.score);
  CHECK(res.best_eval_score == direct.score);
  CHECK(res.updates.empty());
}

TEST_CASE("train_pair is deterministic under a seed") {
  const auto morph = sim::RobotMorphology::default_walker();
  PpoConfig cfg;
  cfg.updates_per_poet_iter = 2;
  cfg.rollout_steps = 200;
  sim::SimConfig sc;
  sc.horizon = 100;
  Rng init(1);
  auto p = fresh_policy(morph, cfg, init);
  Rng a(77), b(77);
  auto r1 = train_pair(flat_terrain(), morph, p, cfg, a, sc);
  auto r2 = train_pair(flat_terrain(), morph, p, cfg, b, sc);
  CHECK(r1.best_score == r2.best_score);
  CHECK(r1.params == r2.params);
  CHECK(r1.env_steps == 2 * (200 + 100));
  CHECK(r1.best_score >= r1.best_eval_score);
  CHECK_FALSE(r1.params == p);
}

TEST_CASE("training smoke on flat terrain") {
  // Default budget: 30 updates of 600 steps. Threshold frozen at 0.5 m.
  const auto morph = sim::RobotMorphology::default_walker();
  PpoConfig cfg;
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    auto p = fresh_policy(morph, cfg, rng);
    auto res = train_pair(flat_terrain(), morph, p, cfg, rng);
    MESSAGE("seed " << seed << " best_score " << res.best_score);
    CHECK(res.non_finite_updates == 0);
    passed += res.best_score > 0.5;
  }
  CHECK(passed >= 2);
}

TEST_CASE("binary checkpoint round trip") {
  auto p = small_random_policy(13);
  auto bytes = to_binary(p);
  CHECK(policy_from_binary(bytes) == p);
  CHECK_THROWS_AS(policy_from_binary(bytes.substr(0, bytes.size() - 1)), PolicyError);
  CHECK_THROWS_AS(policy_from_binary("nope"), PolicyError);
}
