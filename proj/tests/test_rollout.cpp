#include "doctest.h"

#include <cmath>

#include "llmpoet/rollout.hpp"
#include "sim_fuzz.hpp"

using namespace llmpoet;
using namespace llmpoet::sim;

namespace {

grid::VoxelGrid flat_terrain() {
  grid::VoxelGrid t(100, 20);
  for (int x = 0; x < 100; ++x)
    for (int k = 0; k < 3; ++k) t.set(x, 19 - k, grid::Voxel::Rigid);
  return t;
}

ppo::PolicyParams random_policy(std::uint64_t seed) {
  const auto morph = RobotMorphology::default_walker();
  Rng rng(seed);
  return ppo::PolicyParams::init(static_cast<int>(observation_size(morph.node_count())),
                                 morph.actuator_count(), rng, 64, 0.0);
}

}  // namespace

TEST_CASE("zero policy stays put") {
  const auto morph = RobotMorphology::default_walker();
  auto zero = ppo::PolicyParams::zeros(static_cast<int>(observation_size(morph.node_count())), 5);
  Rng rng(1);
  auto res = rollout(flat_terrain(), morph, zero, 600, rng, true);
  CHECK(res.trajectory.size() == 600);
  CHECK(std::abs(res.score) < 0.1);
  CHECK(res.trajectory.dones.back() == 1);
  for (const auto& a : res.trajectory.actions)
    for (double v : a) CHECK(v == 0.0);
}

TEST_CASE("rewards telescope to the score") {
  const auto policy = random_policy(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto res = rollout(flat_terrain(), RobotMorphology::default_walker(), policy, 600, rng);
    double sum = 0.0;
    for (double r : res.trajectory.rewards) sum += r;
    CHECK(std::abs(sum - res.score) < 1e-9);
    CHECK(res.score != 0.0);
  }
}

TEST_CASE("rollouts are deterministic under a seed") {
  const auto policy = random_policy(8);
  Rng a(99), b(99);
  auto r1 = rollout(flat_terrain(), RobotMorphology::default_walker(), policy, 200, a);
  auto r2 = rollout(flat_terrain(), RobotMorphology::default_walker(), policy, 200, b);
  CHECK(r1.score == r2.score);
  CHECK(r1.trajectory.actions == r2.trajectory.actions);
  CHECK(r1.trajectory.observations == r2.trajectory.observations);
  CHECK(r1.trajectory.log_probs == r2.trajectory.log_probs);

  // Deterministic mode ignores the generator entirely.
  Rng c(1), d(2);
  auto m1 = rollout(flat_terrain(), RobotMorphology::default_walker(), policy, 100, c, true);
  auto m2 = rollout(flat_terrain(), RobotMorphology::default_walker(), policy, 100, d, true);
  CHECK(m1.score == m2.score);
}

TEST_CASE("falling off the terrain ends the episode") {
  // A floor only under the spawn span: walking or drifting right ends in a fall.
  grid::VoxelGrid t(12, 10);
  for (int x = 0; x < 8; ++x) t.set(x, 9, grid::Voxel::Rigid);
  const auto morph = RobotMorphology::default_walker();
  auto policy = random_policy(3);
  // Launch the body sideways off the ledge.
  auto state = build_world(t, morph);
  for (auto& v : state.vel) v.x = 3.0;
  Rng rng(0);
  auto res = rollout_from(state, policy, 600, rng, true, SimConfig{});
  CHECK(res.fell);
  CHECK(res.trajectory.size() < 600);
  CHECK(res.trajectory.dones.back() == 1);
}

TEST_CASE("fuzzed rollouts stay finite") {
  auto out = testing::fuzz_rollouts(500, 2024);
  CHECK(out.rollouts == 500);
  CHECK(out.non_finite == 0);
  CHECK(out.telescoping_violations == 0);
  MESSAGE("aborted: " << out.aborted << ", spawn blocked: " << out.spawn_blocked);
}

TEST_CASE("policy shape must match the robot") {
  auto wrong = ppo::PolicyParams::zeros(10, 5);
  Rng rng(0);
  CHECK_THROWS_AS(rollout(flat_terrain(), RobotMorphology::default_walker(), wrong, 10, rng), ppo::PolicyError);
}
