#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/cppn.hpp"
#include "llmpoet/grid.hpp"
#include "llmpoet/llm_client.hpp"
#include "llmpoet/rng.hpp"

namespace llmpoet::gen {

/// Few-shot prompt used to ask the model for a mutated caption.
struct PromptMutationTemplate {
  std::string instruction;
  std::vector<std::pair<std::string, std::string>> examples;  // (before, after)
  std::string query = "Before: {prompt}\nAfter:";               // exactly one {prompt}

  /// Same content as data/prompt_mutation_template.json.
  static PromptMutationTemplate builtin();
  static PromptMutationTemplate from_json(const nlohmann::json& j);
  static PromptMutationTemplate load(const std::filesystem::path& path);

  /// Throws ConfigError unless there are >= 3 non-empty examples and the
  /// query holds exactly one slot.
  void validate() const;

  /// Few-shot pairs followed by the query with `parent_prompt` inserted.
  std::string render(const std::string& parent_prompt) const;
};

struct LlmSettings {
  std::string request_template = "Create a {width}*{height} size environment. {prompt}";
  std::string system_text;
  std::string model;
  int max_tokens = 4096;
  double init_temperature = 0.7;
  double mutation_temperature = 1.0;
  double prompt_temperature = 1.0;
  int max_attempts = 3;  // generation attempts before GenerationFailed
  int spawn_width = grid::kDefaultSpawnWidth;
  /// Reject (and so retry) replies larger than the requested size instead of
  /// truncating them.
  bool regenerate_oversized = false;
};

/// "Create a {width}*{height} size environment. {prompt}" with the slots filled.
std::string compose_generation_request(const LlmSettings& settings, const std::string& prompt,
                                       int width, int height);

/// One completion piped through postprocess. Propagates ClientError,
/// GridError{NoGridContent} and, with regenerate_oversized, GridError{Oversized}.
grid::EnvRecord llm_generate(const std::string& prompt, int width, int height,
                             double temperature, llm::TextCompleter& client,
                             const LlmSettings& settings = {});

/// First non-empty line of the completion, trimmed; the parent prompt when
/// the completion is blank.
std::string mutate_prompt(const std::string& parent_prompt, const PromptMutationTemplate& tmpl,
                          llm::TextCompleter& client, double temperature = 1.0,
                          const std::string& model = {});

enum class MutationBranch { SamePrompt, MutatedPrompt };

/// Fair coin: heads keeps the parent's prompt.
MutationBranch draw_branch(Rng& rng);

/// Re-prompts with the parent's caption (heads) or with a mutated caption
/// (tails). The coin is drawn once; generation is retried up to
/// settings.max_attempts times before GenerationFailed.
grid::EnvRecord mutate_environment(const grid::EnvRecord& parent, Rng& rng,
                                   llm::TextCompleter& client,
                                   const PromptMutationTemplate& tmpl,
                                   const LlmSettings& settings = {},
                                   std::optional<MutationBranch> forced = std::nullopt,
                                   MutationBranch* taken = nullptr);

/// Environment source used by the POET loop. Implementations leave
/// lineage_id and created_at_iteration to the caller; mutate() sets parent_id.
class EnvGenerator {
 public:
  virtual ~EnvGenerator() = default;
  virtual grid::GeneratorKind kind() const = 0;
  virtual grid::EnvRecord generate(const std::string& prompt_or_seed, int width, int height,
                                   Rng& rng) = 0;
  virtual grid::EnvRecord mutate(const grid::EnvRecord& parent, Rng& rng) = 0;
};

struct StubSettings {
  double init_roughness_max = 0.2;
  double mutation_sigma = 0.05;
  double mutation_drift = 0.02;
  int floor_rows = 3;
  int spawn_width = grid::kDefaultSpawnWidth;
};

/// Seeded random height-field terrain whose difficulty grows with roughness
/// (steps, small gaps, soft patches). Needs no network.
class StubGenerator : public EnvGenerator {
 public:
  explicit StubGenerator(StubSettings settings = {}) : settings_(settings) {}
  grid::GeneratorKind kind() const override { return grid::GeneratorKind::Stub; }
  /// `prompt_or_seed` may carry "roughness=<r>"; otherwise roughness is drawn.
  grid::EnvRecord generate(const std::string& prompt_or_seed, int width, int height,
                           Rng& rng) override;
  grid::EnvRecord mutate(const grid::EnvRecord& parent, Rng& rng) override;

  grid::EnvRecord build(double roughness, std::uint64_t seed, int width, int height) const;

 private:
  StubSettings settings_;
};

class CppnGenerator : public EnvGenerator {
 public:
  explicit CppnGenerator(cppn::MutationRates rates = {},
                         int spawn_width = grid::kDefaultSpawnWidth)
      : rates_(rates), spawn_width_(spawn_width) {}
  grid::GeneratorKind kind() const override { return grid::GeneratorKind::Cppn; }
  /// Paints a fresh minimal random genome; the prompt argument is ignored.
  grid::EnvRecord generate(const std::string& prompt_or_seed, int width, int height,
                           Rng& rng) override;
  /// Mutates the genome stored in parent.generator_state and repaints.
  grid::EnvRecord mutate(const grid::EnvRecord& parent, Rng& rng) override;

 private:
  cppn::MutationRates rates_;
  int spawn_width_;
};

class LlmGenerator : public EnvGenerator {
 public:
  LlmGenerator(llm::TextCompleter& client, PromptMutationTemplate tmpl, LlmSettings settings = {});
  grid::GeneratorKind kind() const override { return grid::GeneratorKind::Llm; }
  grid::EnvRecord generate(const std::string& prompt_or_seed, int width, int height,
                           Rng& rng) override;
  grid::EnvRecord mutate(const grid::EnvRecord& parent, Rng& rng) override;

 private:
  llm::TextCompleter& client_;
  PromptMutationTemplate template_;
  LlmSettings settings_;
};

}  // namespace llmpoet::gen
