#include "llmpoet/generators.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "llmpoet/io.hpp"

namespace llmpoet::gen {

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = s.find(needle, pos)) != std::string::npos; pos += needle.size())
    ++n;
  return n;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

PromptMutationTemplate PromptMutationTemplate::builtin() {
  PromptMutationTemplate t;
  t.instruction =
      "You rewrite short descriptions of 2D terrain for a walking robot. Make each description a little "
      "more interesting or a little harder, keep it to one line, and answer with the new description only.";
  t.examples = {
      {"flat terrain", "flat terrain with occasional small gaps"},
      {"simple environment with a few bumps", "environment with many bumps of different heights"},
      {"environment with many holes", "environment with many holes and a soft floor between them"},
      {"gentle hills", "steep hills separated by narrow valleys"},
  };
  return t;
}

PromptMutationTemplate PromptMutationTemplate::from_json(const nlohmann::json& j) {
  PromptMutationTemplate t;
  try {
    t.instruction = j.at("instruction").get<std::string>();
    for (const auto& e : j.at("examples"))
      t.examples.emplace_back(e.at("before").get<std::string>(), e.at("after").get<std::string>());
    if (j.contains("query")) t.query = j["query"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prompt mutation template: ") + e.what());
  }
  t.validate();
  return t;
}

PromptMutationTemplate PromptMutationTemplate::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void PromptMutationTemplate::validate() const {
  if (examples.size() < 3) throw ConfigError("prompt mutation template needs at least 3 examples");
  for (const auto& [before, after] : examples)
    if (trim(before).empty() || trim(after).empty())
      throw ConfigError("prompt mutation examples must be non-empty");
  if (count_of(query, "{prompt}") != 1)
    throw ConfigError("prompt mutation query must contain exactly one {prompt} slot");
  if (count_of(instruction, "{prompt}") != 0)
    throw ConfigError("the {prompt} slot belongs in the query, not the instruction");
}

std::string PromptMutationTemplate::render(const std::string& parent_prompt) const {
  std::string out;
  for (const auto& [before, after] : examples) {
    std::string shot = query;
    replace_all(shot, "{prompt}", before);
    out += shot + " " + after + "\n\n";
  }
  std::string q = query;
  replace_all(q, "{prompt}", parent_prompt);
  return out + q;
}

std::string compose_generation_request(const LlmSettings& settings, const std::string& prompt,
                                       int width, int height) {
  std::string text = settings.request_template;
  replace_all(text, "{width}", std::to_string(width));
  replace_all(text, "{height}", std::to_string(height));
  replace_all(text, "{prompt}", prompt);
  return text;
}

grid::EnvRecord llm_generate(const std::string& prompt, int width, int height, double temperature,
                             llm::TextCompleter& client, const LlmSettings& settings) {
  if (trim(prompt).empty()) throw Error("llm_generate needs a non-empty prompt");
  if (temperature < 0) throw ConfigError("temperature must be >= 0");
  llm::CompletionRequest req;
  req.system_text = settings.system_text;
  req.user_text = compose_generation_request(settings, prompt, width, height);
  req.temperature = temperature;
  req.max_tokens = settings.max_tokens;
  req.model_name = settings.model;
  const auto raw = client.complete(req);

  grid::EnvRecord env;
  bool truncated = false;
  env.grid = grid::postprocess(raw, width, height, settings.spawn_width, &truncated);
  if (truncated && settings.regenerate_oversized)
    throw grid::GridError(grid::GridErrc::Oversized,
                          fmt::format("reply exceeds the requested {}x{} size", width, height));
  env.prompt = prompt;
  env.generator = grid::GeneratorKind::Llm;
  return env;
}

std::string mutate_prompt(const std::string& parent_prompt, const PromptMutationTemplate& tmpl,
                          llm::TextCompleter& client, double temperature,
                          const std::string& model) {
  tmpl.validate();
  llm::CompletionRequest req;
  req.system_text = tmpl.instruction;
  req.user_text = tmpl.render(parent_prompt);
  req.temperature = temperature;
  req.max_tokens = 128;
  req.model_name = model;
  const auto reply = client.complete(req);

  std::size_t start = 0;
  while (start <= reply.size()) {
    auto end = reply.find('\n', start);
    if (end == std::string::npos) end = reply.size();
    auto line = trim(reply.substr(start, end - start));
    if (!line.empty()) return line;
    start = end + 1;
  }
  return parent_prompt;
}

MutationBranch draw_branch(Rng& rng) {
  return bernoulli(rng, 0.5) ? MutationBranch::SamePrompt : MutationBranch::MutatedPrompt;
}

grid::EnvRecord mutate_environment(const grid::EnvRecord& parent, Rng& rng,
                                   llm::TextCompleter& client,
                                   const PromptMutationTemplate& tmpl,
                                   const LlmSettings& settings,
                                   std::optional<MutationBranch> forced, MutationBranch* taken) {
  if (parent.generator != grid::GeneratorKind::Llm)
    throw Error("mutate_environment expects an LLM parent; CPPN parents use cppn::mutate");
  if (settings.mutation_temperature <= 0)
    throw ConfigError("mutation temperature must be > 0: resampling is the mutation");

  const auto branch = forced ? *forced : draw_branch(rng);
  if (taken) *taken = branch;
  const int width = parent.grid.width();
  const int height = parent.grid.height();

  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, settings.max_attempts); ++attempt) {
    try {
      std::string prompt = parent.prompt;
      if (branch == MutationBranch::MutatedPrompt)
        prompt = mutate_prompt(parent.prompt, tmpl, client, settings.prompt_temperature,
                               settings.model);
      auto child = llm_generate(prompt, width, height, settings.mutation_temperature, client,
                                settings);
      child.parent_id = parent.lineage_id;
      return child;
    } catch (const llm::ClientError& e) {
      last_error = e.what();
    } catch (const grid::GridError& e) {
      last_error = e.what();
    }
  }
  throw GenerationFailed("environment mutation failed: " + last_error);
}

// --- stub -----------------------------------------------------------------

grid::EnvRecord StubGenerator::build(double roughness, std::uint64_t seed, int width,
                                     int height) const {
  using grid::Voxel;
  Rng rng(seed);
  grid::VoxelGrid g(width, height);
  const int max_level = std::max(1, height - 2);
  int level = std::clamp(settings_.floor_rows, 1, max_level);
  int gap_left = 0;
  for (int x = 0; x < width; ++x) {
    const bool in_spawn = x < settings_.spawn_width;
    if (!in_spawn) {
      if (gap_left > 0) {
        --gap_left;
        continue;
      }
      if (bernoulli(rng, roughness)) {
        int step = bernoulli(rng, 0.5) ? 1 : -1;
        if (bernoulli(rng, roughness)) step *= 2;
        level = std::clamp(level + step, 1, max_level);
      }
      if (bernoulli(rng, 0.15 * roughness)) {
        gap_left = static_cast<int>(uniform_index(rng, 2));  // 1 or 2 columns
        continue;
      }
    }
    for (int k = 0; k < level; ++k) g.set(x, height - 1 - k, Voxel::Rigid);
    if (!in_spawn && bernoulli(rng, 0.3 * roughness)) g.set(x, height - level, Voxel::Soft);
  }
  grid::EnvRecord env;
  env.grid = grid::repair_spawn_platform(std::move(g), std::min(settings_.spawn_width, width));
  env.prompt = fmt::format("stub terrain roughness={:.3f} seed={}", roughness, seed);
  env.generator = grid::GeneratorKind::Stub;
  env.generator_state = {{"roughness", roughness}, {"seed", seed}};
  return env;
}

grid::EnvRecord StubGenerator::generate(const std::string& prompt_or_seed, int width, int height,
                                        Rng& rng) {
  static const std::regex kRoughness(R"(roughness=([0-9]*\.?[0-9]+))");
  std::smatch m;
  double roughness;
  if (std::regex_search(prompt_or_seed, m, kRoughness))
    roughness = std::clamp(std::stod(m[1].str()), 0.0, 1.0);
  else
    roughness = uniform01(rng) * settings_.init_roughness_max;
  const std::uint64_t seed = rng();
  return build(roughness, seed, width, height);
}

grid::EnvRecord StubGenerator::mutate(const grid::EnvRecord& parent, Rng& rng) {
  double roughness = 0.1;
  if (parent.generator_state.contains("roughness"))
    roughness = parent.generator_state["roughness"].get<double>();
  roughness = std::clamp(roughness + gaussian(rng, settings_.mutation_drift, settings_.mutation_sigma),
                         0.0, 1.0);
  const std::uint64_t seed = rng();
  auto child = build(roughness, seed, parent.grid.width(), parent.grid.height());
  child.parent_id = parent.lineage_id;
  return child;
}

// --- cppn -----------------------------------------------------------------

grid::EnvRecord CppnGenerator::generate(const std::string&, int width, int height, Rng& rng) {
  return cppn::generate(cppn::Genome::minimal_random(rng), width, height, spawn_width_);
}

grid::EnvRecord CppnGenerator::mutate(const grid::EnvRecord& parent, Rng& rng) {
  if (parent.generator_state.is_null())
    throw GenerationFailed("CPPN parent " + parent.lineage_id + " carries no genome");
  const auto genome = cppn::genome_from_json(parent.generator_state);
  auto child = cppn::generate(cppn::mutate(genome, rng, rates_), parent.grid.width(),
                              parent.grid.height(), spawn_width_);
  child.parent_id = parent.lineage_id;
  return child;
}

// --- llm ------------------------------------------------------------------

LlmGenerator::LlmGenerator(llm::TextCompleter& client, PromptMutationTemplate tmpl,
                           LlmSettings settings)
    : client_(client), template_(std::move(tmpl)), settings_(std::move(settings)) {
  template_.validate();
}

grid::EnvRecord LlmGenerator::generate(const std::string& prompt, int width, int height, Rng&) {
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, settings_.max_attempts); ++attempt) {
    try {
      return llm_generate(prompt, width, height, settings_.init_temperature, client_, settings_);
    } catch (const llm::ClientError& e) {
      last_error = e.what();
    } catch (const grid::GridError& e) {
      last_error = e.what();
    }
  }
  throw GenerationFailed("environment generation failed: " + last_error);
}

grid::EnvRecord LlmGenerator::mutate(const grid::EnvRecord& parent, Rng& rng) {
  return mutate_environment(parent, rng, client_, template_, settings_);
}

}  // namespace llmpoet::gen
