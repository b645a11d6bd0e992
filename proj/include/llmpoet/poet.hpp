#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/config.hpp"
#include "llmpoet/generators.hpp"
#include "llmpoet/trainer.hpp"

namespace llmpoet::poet {

/// One environment and its resident agent. Scores of -inf mean "never
/// measured".
struct Niche {
  grid::EnvRecord env;
  ppo::PolicyParams agent;
  std::vector<double> score_history;  // train_pair best_score per trained iteration
  double best_score;                  // max of score_history
  double best_eval_score;             // best deterministic score of any occupant
  bool active = true;
  int archived_at_iteration = -1;
  int active_iterations = 0;  // iterations in which the niche was trained
  long updates_trained = 0;
  long env_steps = 0;

  Niche();
};

struct PoetState {
  std::vector<Niche> niches;  // creation order; archived niches stay in place
  int iteration = 0;          // completed iterations
  std::uint64_t seed = 0;
  int next_env_index = 0;
  grid::GeneratorKind generator = grid::GeneratorKind::Stub;
  std::string config_hash;

  std::vector<std::size_t> active_indices() const;
  std::size_t active_count() const { return active_indices().size(); }
  const Niche* find(const std::string& lineage_id) const;
};

std::string lineage_id(int index);

/// Deterministic (mean action) episode score of `agent` on `terrain`.
double evaluate_agent(const ppo::PolicyParams& agent, const grid::VoxelGrid& terrain,
                      const sim::RobotMorphology& morph, const RunConfig& cfg);

/// cfg.poet.population environments from the generator (LLM: the configured
/// seed prompts; stub and CPPN: seeded draws), each with a fresh agent.
/// Each environment gets cfg.poet.init_max_attempts tries before
/// GenerationFailed.
PoetState init_population(gen::EnvGenerator& generator, const RunConfig& cfg,
                          const sim::RobotMorphology& morph);

struct OptimizeReport {
  std::vector<std::optional<ppo::TrainResult>> results;  // per niche index
  std::vector<std::pair<std::size_t, std::string>> failures;
};

/// train_pair on every active niche, in parallel, for iteration
/// state.iteration + 1. Each niche draws from its own named stream, so the
/// outcome does not depend on the worker count.
OptimizeReport optimize_all(PoetState& state, const RunConfig& cfg, const sim::RobotMorphology& morph);

struct TransferEntry {
  int iteration = 0;
  std::string source;
  std::string target;
  double incumbent_score = 0.0;  // target's own agent on the target env
  double candidate_score = 0.0;  // source agent on the target env
  bool replaced = false;
};

struct TransferReport {
  std::vector<TransferEntry> log;
  std::vector<double> before;  // per niche index; NaN for inactive niches
  std::vector<double> after;
};

/// The replacement rule alone. score[s * m + t] is agent s on env t; the
/// result names, per target, the strictly best other agent if it beats the
/// incumbent score[t * m + t].
std::vector<std::optional<std::size_t>> pick_replacements(const std::vector<double>& score, std::size_t m);

/// Evaluates every active agent on every active environment and replaces an
/// incumbent with a copy of the strictly best-scoring other agent. Ties keep
/// the incumbent; among equal candidates the earliest niche wins.
TransferReport transfer(PoetState& state, const RunConfig& cfg, const sim::RobotMorphology& morph);

struct ReproduceReport {
  std::optional<std::size_t> parent;
  std::optional<std::size_t> child;
  std::optional<std::size_t> archived;
  std::string skipped;  // reason when no child was admitted
};

/// Picks a parent uniformly among active niches whose best_score reaches the
/// eligibility quantile, mutates its environment and admits at most one
/// child that inherits the parent's agent. Archives the oldest active niche
/// when the cap is exceeded.
ReproduceReport reproduce(PoetState& state, gen::EnvGenerator& generator, const RunConfig& cfg,
                          const sim::RobotMorphology& morph);

/// q-quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

// --- persistence ------------------------------------------------------------

nlohmann::json niche_history_json(const Niche& niche);

/// Writes checkpoints/iter_%04d.json; agent weights go to a
/// content-addressed store under checkpoints/agents/.
std::filesystem::path write_checkpoint(const std::filesystem::path& run_dir, const PoetState& state);
PoetState load_checkpoint(const std::filesystem::path& checkpoint);
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int iteration);

struct RunOptions {
  int stop_after = -1;            // stop once this iteration is done (simulated interruption)
  std::ostream* log = nullptr;    // progress lines
  int workers = -1;               // resume only: overrides the snapshot's worker count when >= 0
};

struct RunOutcome {
  std::filesystem::path run_dir;
  PoetState state;
  bool already_finished = false;
};

/// Fresh run into cfg.out_dir, which must not already hold a run.
RunOutcome run(const RunConfig& cfg, gen::EnvGenerator& generator, const RunOptions& options = {});

/// Continues from a checkpoint file (or the newest checkpoint of a run
/// directory). Later checkpoints and CSV rows are discarded first, so the
/// continuation is identical to an uninterrupted run.
RunOutcome resume(const std::filesystem::path& checkpoint_or_dir, gen::EnvGenerator& generator,
                  const RunOptions& options = {});

/// Run directory holding `checkpoint` (checkpoints/iter_XXXX.json).
std::filesystem::path run_dir_of_checkpoint(const std::filesystem::path& checkpoint);

/// Newest checkpoint of a run directory; IoError when there is none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

/// The config.snapshot of the run that `checkpoint_or_dir` belongs to.
RunConfig load_run_snapshot(const std::filesystem::path& checkpoint_or_dir);

}  // namespace llmpoet::poet
