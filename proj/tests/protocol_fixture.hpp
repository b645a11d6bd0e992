#pragma once

// A finished-run directory built by hand: LLM environments from canned
// completions, POET scores and PPO-only scores from a fixed table.

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "llmpoet/eval.hpp"
#include "llmpoet/generators.hpp"
#include "llmpoet/io.hpp"
#include "llmpoet/poet.hpp"
#include "scripted.hpp"

namespace llmpoet::testing {

struct ProtocolFixture {
  std::filesystem::path run_dir;
  std::map<std::string, std::vector<double>> ppo_table;  // env id -> repeat scores; empty = all fail

  // Hand-computed from diffs {1, 0.5, -0.25, 2}.
  static constexpr double mean = 0.8125;
  static constexpr double variance = 0.890625;        // 2.671875 / 3
  static constexpr double m2_biased = 0.66796875;     // 2.671875 / 4
  static constexpr double m3_biased = 0.11279296875;  // 0.451171875 / 4
  static double g1() { return m3_biased / std::pow(m2_biased, 1.5); }
  static constexpr int count = 4;
  static constexpr int excluded = 2;

  eval::BaselineFn baseline() const {
    auto table = ppo_table;
    return [table](const eval::NicheSummary& n, int repeat) {
      const auto& row = table.at(n.env.lineage_id);
      if (row.empty()) throw Error("scripted training failure");
      return row.at(static_cast<std::size_t>(repeat));
    };
  }
};

inline ProtocolFixture make_protocol_fixture(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  fs::remove_all(run_dir);
  fs::create_directories(run_dir / "niche_history");

  RunConfig cfg;
  cfg.out_dir = run_dir.string();
  cfg.generator.kind = grid::GeneratorKind::Llm;
  cfg.generator.width = 12;
  cfg.generator.height = 4;
  io::write_file_atomic(run_dir / "config.snapshot", config_snapshot(cfg));

  ScriptedCompleter client;
  int calls = 0;
  client.fallback = [&calls](const llm::CompletionRequest&) {
    // a different hole position per call
    std::string floor(12, 'H');
    floor[static_cast<std::size_t>(9 + calls++ % 3)] = '-';
    return "Here you go:\n------------\n------------\n----HH------\n" + floor;
  };
  gen::LlmGenerator generator(client, gen::PromptMutationTemplate::builtin());

  const double poet_scores[] = {2.0, 1.5, 0.25, 3.0, 1.0, 0.7};
  const long updates[] = {90, 60, 30, 120, 30, 0};
  const std::vector<std::vector<double>> ppo = {{1.0, 0.5, 0.75, 0.25, 0.0},
                                                {1.0, 0.5, 0.25, 0.0, 0.0},
                                                {0.5, 0.25, 0.0, 0.0, 0.0},
                                                {1.0, 0.75, 0.5, 0.25, 0.125},
                                                {},
                                                {}};
  ProtocolFixture fx;
  fx.run_dir = run_dir;
  Rng rng(0);
  for (int i = 0; i < 6; ++i) {
    poet::Niche n;
    n.env = generator.generate(cfg.llm.seed_prompts[static_cast<std::size_t>(i)], 12, 4, rng);
    n.env.lineage_id = poet::lineage_id(i);
    n.best_eval_score = poet_scores[i];
    n.best_score = poet_scores[i];
    n.score_history = {poet_scores[i]};
    n.updates_trained = updates[i];
    io::write_file_atomic(run_dir / "niche_history" / (n.env.lineage_id + ".txt"), grid::render_grid(n.env.grid) + "\n");
    io::write_file_atomic(run_dir / "niche_history" / (n.env.lineage_id + ".json"),
                          poet::niche_history_json(n).dump(2) + "\n");
    fx.ppo_table[n.env.lineage_id] = ppo[static_cast<std::size_t>(i)];
  }
  return fx;
}

}  // namespace llmpoet::testing
