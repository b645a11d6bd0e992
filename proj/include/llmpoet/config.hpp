#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/generators.hpp"
#include "llmpoet/ppo.hpp"
#include "llmpoet/simulator.hpp"

namespace llmpoet {

struct PoetConfig {
  int population = 10;
  int iterations = 100;
  double eligibility_quantile = 0.5;  // parents: best_score >= this quantile of active niches
  int active_cap = 20;                // <= 0 means unlimited
  bool minimal_criterion = false;
  double mc_low = 0.0;   // admission band for the parent agent's score on the child
  double mc_high = 5.0;
  int init_max_attempts = 5;
  int workers = 0;  // 0: one per hardware thread
  std::string morphology;  // grid file; empty selects the built-in walker

  void validate() const;
};

struct GeneratorConfig {
  grid::GeneratorKind kind = grid::GeneratorKind::Stub;
  int width = 100;
  int height = 20;
  gen::StubSettings stub;
  cppn::MutationRates cppn;

  void validate() const;
};

/// Ten captions in the style of the fine-tuning dataset.
std::vector<std::string> default_seed_prompts();

struct LlmConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int backoff_ms = 1000;
  int rate_limit = 2;
  std::string template_path;  // empty selects the built-in template
  std::string log_file = "llm_requests.jsonl";  // relative to the run directory
  bool hash_prompts = false;
  gen::LlmSettings settings;
  std::vector<std::string> seed_prompts = default_seed_prompts();

  void validate() const;
};

/// Every knob of a run. Each field has a default; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  PoetConfig poet;
  ppo::PpoConfig ppo;
  sim::SimConfig sim;
  GeneratorConfig generator;
  LlmConfig llm;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical serialization, written as config.snapshot.
std::string config_snapshot(const RunConfig& cfg);

/// FNV-1a of the snapshot with out_dir blanked, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

sim::RobotMorphology load_morphology(const PoetConfig& cfg);

}  // namespace llmpoet
