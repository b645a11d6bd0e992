#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "llmpoet/poet.hpp"
#include "poet_fixtures.hpp"

using namespace llmpoet;
using namespace llmpoet::poet;
namespace fs = std::filesystem;
using testing::slurp;
using testing::tiny_config;

namespace {

/// Stub terrain whose mutate() always gives up.
class BrokenMutator : public gen::StubGenerator {
 public:
  grid::EnvRecord mutate(const grid::EnvRecord&, Rng&) override { throw GenerationFailed("scripted failure"); }
};

/// generate() fails for the first `failures` calls.
class FlakyGenerator : public gen::StubGenerator {
 public:
  int failures = 0;
  int calls = 0;
  grid::EnvRecord generate(const std::string& p, int w, int h, Rng& rng) override {
    if (calls++ < failures) throw GenerationFailed("scripted failure");
    return gen::StubGenerator::generate(p, w, h, rng);
  }
};

std::vector<std::string> files_in(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

void check_same_tree(const fs::path& a, const fs::path& b, const std::string& sub) {
  const auto fa = files_in(a / sub);
  REQUIRE(fa == files_in(b / sub));
  for (const auto& f : fa) {
    INFO(sub << "/" << f);
    CHECK(slurp(a / sub / f) == slurp(b / sub / f));
  }
}

void check_lineage(const PoetState& s) {
  std::map<std::string, int> created;
  for (const auto& n : s.niches) created[n.env.lineage_id] = n.env.created_at_iteration;
  CHECK(created.size() == s.niches.size());
  for (const auto& n : s.niches) {
    if (n.env.created_at_iteration == 0) {
      CHECK_FALSE(n.env.parent_id.has_value());
      continue;
    }
    REQUIRE(n.env.parent_id.has_value());
    REQUIRE(created.count(*n.env.parent_id) == 1);
    CHECK(created[*n.env.parent_id] < n.env.created_at_iteration);
  }
}

}  // namespace

TEST_CASE("init_population") {
  auto cfg = tiny_config("unused", 10, 0);
  gen::StubGenerator g;
  const auto morph = load_morphology(cfg.poet);
  auto a = init_population(g, cfg, morph);
  auto b = init_population(g, cfg, morph);
  REQUIRE(a.niches.size() == 10);
  CHECK(a.iteration == 0);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < 10; ++i) {
    ids.insert(a.niches[i].env.lineage_id);
    CHECK(a.niches[i].env.grid == b.niches[i].env.grid);
    CHECK(a.niches[i].agent == b.niches[i].agent);
    CHECK(a.niches[i].active);
    CHECK(a.niches[i].env.grid.width() == 40);
  }
  CHECK(ids.size() == 10);
  CHECK(a.niches[0].env.grid != a.niches[1].env.grid);

  SUBCASE("retries then gives up") {
    FlakyGenerator flaky;
    flaky.failures = 3;
    cfg.poet.population = 1;
    CHECK(init_population(flaky, cfg, morph).niches.size() == 1);
    flaky.calls = 0;
    flaky.failures = 100;
    CHECK_THROWS_AS(init_population(flaky, cfg, morph), GenerationFailed);
  }
}

TEST_CASE("single niche") {
  auto cfg = tiny_config("unused", 1, 0);
  gen::StubGenerator g;
  const auto morph = load_morphology(cfg.poet);
  auto s = init_population(g, cfg, morph);
  CHECK(transfer(s, cfg, morph).log.empty());
  auto rep = reproduce(s, g, cfg, morph);
  CHECK(rep.parent == 0u);
  REQUIRE(rep.child.has_value());
  CHECK(s.niches[1].env.parent_id == s.niches[0].env.lineage_id);
  CHECK(s.niches[1].agent == s.niches[0].agent);
}

TEST_CASE("optimize_all") {
  auto cfg = tiny_config("unused", 3, 0);
  gen::StubGenerator g;
  const auto morph = load_morphology(cfg.poet);

  SUBCASE("zero budget appends the evaluation score") {
    cfg.ppo.updates_per_poet_iter = 0;
    cfg.poet.population = 1;
    auto s = init_population(g, cfg, morph);
    const auto agent = s.niches[0].agent;
    optimize_all(s, cfg, morph);
    REQUIRE(s.niches[0].score_history.size() == 1);
    CHECK(s.niches[0].score_history[0] == evaluate_agent(agent, s.niches[0].env.grid, morph, cfg));
    CHECK(s.niches[0].agent == agent);
    CHECK(s.niches[0].updates_trained == 0);
  }
  SUBCASE("best score never decreases") {
    auto s = init_population(g, cfg, morph);
    for (int it = 0; it < 3; ++it) {
      std::vector<double> before;
      for (const auto& n : s.niches) before.push_back(n.best_score);
      optimize_all(s, cfg, morph);
      s.iteration += 1;
      for (std::size_t i = 0; i < s.niches.size(); ++i) {
        const auto& n = s.niches[i];
        CHECK(n.best_score >= before[i]);
        CHECK(n.best_score == *std::max_element(n.score_history.begin(), n.score_history.end()));
      }
    }
  }
  SUBCASE("parallel equals serial") {
    auto serial = init_population(g, cfg, morph);
    auto parallel = serial;
    auto c1 = cfg, c4 = cfg;
    c1.poet.workers = 1;
    c4.poet.workers = 4;
    optimize_all(serial, c1, morph);
    optimize_all(parallel, c4, morph);
    for (std::size_t i = 0; i < serial.niches.size(); ++i) {
      CHECK(serial.niches[i].agent == parallel.niches[i].agent);
      CHECK(serial.niches[i].score_history == parallel.niches[i].score_history);
    }
  }
}

TEST_CASE("replacement rule") {
  // two niches: agent A scores 2.0 on env B, B's incumbent scores 1.0
  std::vector<double> two = {3.0, 2.0,   // A on A, A on B
                             0.5, 1.0};  // B on A, B on B
  auto picks = pick_replacements(two, 2);
  CHECK_FALSE(picks[0].has_value());
  CHECK(picks[1] == 0u);

  // ties keep the incumbent, equal candidates go to the earliest niche
  std::vector<double> three = {1.0, 2.0, 5.0,
                               1.0, 1.0, 5.0,
                               0.0, 2.0, 1.0};
  picks = pick_replacements(three, 3);
  CHECK_FALSE(picks[0].has_value());
  CHECK(picks[1] == 0u);
  CHECK(picks[2] == 0u);
}

TEST_CASE("transfer on real agents") {
  auto cfg = tiny_config("unused", 2, 0);
  gen::StubGenerator g;
  const auto morph = load_morphology(cfg.poet);
  auto s = init_population(g, cfg, morph);
  // Agent 0 is trained for a while; agent 1 is a frozen fresh agent.
  cfg.ppo.updates_per_poet_iter = 15;
  cfg.ppo.rollout_steps = 240;
  cfg.ppo.hidden = 16;
  Rng rng(3);
  s.niches[0].agent = ppo::train_pair(s.niches[0].env.grid, morph, s.niches[0].agent, cfg.ppo, rng, cfg.sim).params;

  const double a_on_b = evaluate_agent(s.niches[0].agent, s.niches[1].env.grid, morph, cfg);
  const double b_on_b = evaluate_agent(s.niches[1].agent, s.niches[1].env.grid, morph, cfg);
  const auto agent_a = s.niches[0].agent;
  auto rep = transfer(s, cfg, morph);
  CHECK(rep.log.size() == 2);
  CHECK(rep.before[1] == b_on_b);
  if (a_on_b > b_on_b) {
    CHECK(s.niches[1].agent == agent_a);
    CHECK(rep.after[1] == a_on_b);
  } else {
    CHECK(rep.after[1] == b_on_b);
  }
  CHECK(s.niches[0].agent == agent_a);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(rep.after[t] >= rep.before[t]);
    CHECK(evaluate_agent(s.niches[t].agent, s.niches[t].env.grid, morph, cfg) == rep.after[t]);
  }
}

TEST_CASE("transfer monotonicity over seeded loops") {
  gen::StubGenerator g;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = tiny_config("unused", 3, 0, seed);
    const auto morph = load_morphology(cfg.poet);
    auto s = init_population(g, cfg, morph);
    for (int it = 0; it < 3; ++it) {
      optimize_all(s, cfg, morph);
      auto rep = transfer(s, cfg, morph);
      for (auto i : s.active_indices()) {
        CHECK(rep.after[i] >= rep.before[i]);
        CHECK(evaluate_agent(s.niches[i].agent, s.niches[i].env.grid, morph, cfg) == rep.after[i]);
      }
      reproduce(s, g, cfg, morph);
      s.iteration += 1;
    }
  }
}

TEST_CASE("reproduce") {
  auto cfg = tiny_config("unused", 4, 0);
  gen::StubGenerator g;
  const auto morph = load_morphology(cfg.poet);

  SUBCASE("generation failure leaves the population alone") {
    BrokenMutator broken;
    auto s = init_population(g, cfg, morph);
    auto rep = reproduce(s, broken, cfg, morph);
    CHECK(s.niches.size() == 4);
    CHECK_FALSE(rep.child.has_value());
    CHECK(rep.skipped.find("generation failed") != std::string::npos);
    CHECK(s.next_env_index == 4);
  }
  SUBCASE("parents come from the upper half") {
    auto s = init_population(g, cfg, morph);
    const double scores[] = {0.1, 3.0, 0.2, 2.0};
    for (int i = 0; i < 4; ++i) {
      s.niches[i].score_history = {scores[i]};
      s.niches[i].best_score = scores[i];
    }
    std::set<std::size_t> parents;
    for (int it = 0; it < 40; ++it) {
      auto copy = s;
      copy.iteration = it;
      auto rep = reproduce(copy, g, cfg, morph);
      parents.insert(*rep.parent);
    }
    CHECK(parents == std::set<std::size_t>{1, 3});
  }
  SUBCASE("cap archives the oldest active niche") {
    cfg.poet.active_cap = 4;
    auto s = init_population(g, cfg, morph);
    auto rep = reproduce(s, g, cfg, morph);
    REQUIRE(rep.child.has_value());
    CHECK(rep.archived == 0u);
    CHECK_FALSE(s.niches[0].active);
    CHECK(s.niches[0].archived_at_iteration == 1);
    CHECK(s.active_count() == 4);
  }
  SUBCASE("minimal criterion") {
    cfg.poet.minimal_criterion = true;
    cfg.poet.mc_low = 100.0;
    cfg.poet.mc_high = 200.0;
    auto s = init_population(g, cfg, morph);
    auto rep = reproduce(s, g, cfg, morph);
    CHECK_FALSE(rep.child.has_value());
    CHECK(rep.skipped.find("minimal criterion") != std::string::npos);
    cfg.poet.mc_low = -100.0;
    rep = reproduce(s, g, cfg, morph);
    CHECK(rep.child.has_value());
  }
}

TEST_CASE("quantile") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.5) == 5);
  CHECK(quantile({3, 1, 2}, 0.0) == 1);
  CHECK(quantile({3, 1, 2}, 1.0) == 3);
  CHECK(quantile({0, 10}, 0.25) == doctest::Approx(2.5));
}

TEST_CASE("run directory, checkpoints and resume") {
  auto root = testing::scratch_dir("poet_run");
  gen::StubGenerator g;
  auto cfg = tiny_config(root / "full", 3, 5);
  std::ostringstream log;
  auto full = run(cfg, g, {-1, &log});
  CHECK(full.state.iteration == 5);
  CHECK(files_in(root / "full" / "checkpoints").size() == 6);
  for (int k = 0; k <= 5; ++k) CHECK(fs::exists(checkpoint_path(root / "full", k)));
  for (const char* f : {"config.snapshot", "scores.csv", "transfers.csv", "reproduce.csv"})
    CHECK(fs::exists(root / "full" / f));
  CHECK(log.str().find("iter 5:") != std::string::npos);
  check_lineage(full.state);
  CHECK(full.state.niches.size() <= 3 + 5);
  std::map<int, int> born;
  for (const auto& n : full.state.niches) born[n.env.created_at_iteration] += 1;
  for (const auto& [it, count] : born)
    if (it > 0) CHECK(count == 1);

  SUBCASE("refuses to overwrite") { CHECK_THROWS_AS(run(cfg, g), IoError); }

  SUBCASE("checkpoint round trip") {
    auto loaded = load_checkpoint(checkpoint_path(root / "full", 5));
    REQUIRE(loaded.niches.size() == full.state.niches.size());
    for (std::size_t i = 0; i < loaded.niches.size(); ++i) {
      CHECK(loaded.niches[i].agent == full.state.niches[i].agent);
      CHECK(niche_history_json(loaded.niches[i]) == niche_history_json(full.state.niches[i]));
      CHECK(loaded.niches[i].env.grid == full.state.niches[i].env.grid);
    }
    CHECK(loaded.next_env_index == full.state.next_env_index);
  }

  SUBCASE("same seed, other worker count: identical files") {
    auto again = cfg;
    again.out_dir = (root / "again").string();
    again.poet.workers = 1;
    run(again, g);
    for (const char* sub : {"niche_history", "training_stats", "checkpoints", "checkpoints/agents"})
      check_same_tree(root / "full", root / "again", sub);
    for (const char* f : {"scores.csv", "transfers.csv", "reproduce.csv"})
      CHECK(slurp(root / "full" / f) == slurp(root / "again" / f));
  }

  SUBCASE("interrupted and resumed equals uninterrupted") {
    auto part = cfg;
    part.out_dir = (root / "part").string();
    auto first = run(part, g, {3, nullptr});
    CHECK(first.state.iteration == 3);
    CHECK_FALSE(fs::exists(checkpoint_path(root / "part", 4)));
    auto rest = resume(root / "part", g);
    CHECK(rest.state.iteration == 5);
    CHECK_FALSE(rest.already_finished);
    for (const char* sub : {"niche_history", "training_stats", "checkpoints", "checkpoints/agents"})
      check_same_tree(root / "full", root / "part", sub);
    for (const char* f : {"scores.csv", "transfers.csv", "reproduce.csv"})
      CHECK(slurp(root / "full" / f) == slurp(root / "part" / f));

    // resuming from an older checkpoint rewinds and replays
    auto replay = resume(checkpoint_path(root / "part", 2), g);
    CHECK(replay.state.iteration == 5);
    check_same_tree(root / "full", root / "part", "niche_history");
    CHECK(slurp(root / "full" / "scores.csv") == slurp(root / "part" / "scores.csv"));
  }

  SUBCASE("resuming a finished run is a no-op") {
    const auto before = slurp(checkpoint_path(root / "full", 5));
    auto again = resume(root / "full", g);
    CHECK(again.already_finished);
    CHECK(slurp(checkpoint_path(root / "full", 5)) == before);
  }

  SUBCASE("wrong generator is refused") {
    gen::CppnGenerator cppn;
    CHECK_THROWS_AS(resume(root / "full", cppn), ConfigError);
  }
}

TEST_CASE("zero iterations") {
  auto root = testing::scratch_dir("poet_zero");
  gen::StubGenerator g;
  auto out = run(tiny_config(root / "r", 2, 0), g);
  CHECK(out.state.iteration == 0);
  CHECK(fs::exists(checkpoint_path(root / "r", 0)));
  CHECK(files_in(root / "r" / "niche_history").size() == 4);
}

TEST_CASE("hundred iterations of population accounting") {
  auto root = testing::scratch_dir("poet_hundred");
  gen::StubGenerator g;
  auto cfg = tiny_config(root / "r", 10, 100);
  cfg.ppo.updates_per_poet_iter = 0;
  cfg.sim.horizon = 8;
  auto out = run(cfg, g);
  const auto& s = out.state;
  const auto total = s.niches.size();
  CHECK(total >= 20);
  CHECK(total <= 110);
  CHECK(s.active_count() <= 20);
  std::size_t archived = 0;
  for (const auto& n : s.niches) archived += !n.active;
  CHECK(archived + s.active_count() == total);
  CHECK(static_cast<std::size_t>(s.next_env_index) == total);
  CHECK(files_in(root / "r" / "niche_history").size() == 2 * total);
  check_lineage(s);
  MESSAGE("environments created over 100 iterations: " << total);
}
