#include "llmpoet/config.hpp"

#include <fmt/format.h>

#include "llmpoet/io.hpp"

namespace llmpoet {

namespace {

// Overlays `j` onto the fields named in `apply`, rejecting unknown keys.
template <class Apply>
void overlay(const nlohmann::json& j, const std::string& section, Apply apply) {
  if (!j.is_object()) throw ConfigError(fmt::format("[{}] must be an object", section));
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    try {
      known = apply(it.key(), it.value());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("{}.{}: {}", section, it.key(), e.what()));
    }
    if (!known) throw ConfigError(fmt::format("unknown key {}.{}", section, it.key()));
  }
}

#define LLMPOET_FIELD(obj, name)                  \
  if (key == #name) {                             \
    obj.name = v.get<decltype(obj.name)>();       \
    return true;                                  \
  }

}  // namespace

void PoetConfig::validate() const {
  if (population < 1) throw ConfigError("poet.population must be >= 1");
  if (iterations < 0) throw ConfigError("poet.iterations must be >= 0");
  if (!(eligibility_quantile >= 0 && eligibility_quantile <= 1))
    throw ConfigError("poet.eligibility_quantile must be in [0, 1]");
  if (active_cap > 0 && active_cap < population)
    throw ConfigError("poet.active_cap must be >= poet.population (or <= 0 for no cap)");
  if (mc_low > mc_high) throw ConfigError("poet.mc_low must be <= poet.mc_high");
  if (init_max_attempts < 1) throw ConfigError("poet.init_max_attempts must be >= 1");
  if (workers < 0) throw ConfigError("poet.workers must be >= 0");
}

void GeneratorConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("generator.width and generator.height must be >= 1");
  if (width < stub.spawn_width) throw ConfigError("generator.width must cover the spawn span");
  if (stub.floor_rows < 1 || stub.floor_rows >= height)
    throw ConfigError("generator.stub.floor_rows must be in [1, height)");
  if (stub.init_roughness_max < 0 || stub.mutation_sigma < 0)
    throw ConfigError("generator.stub roughness settings must be >= 0");
  const double total = cppn.perturb_weight + cppn.add_connection + cppn.add_node + cppn.toggle_connection;
  if (!(total > 0) || cppn.perturb_weight < 0 || cppn.add_connection < 0 || cppn.add_node < 0 ||
      cppn.toggle_connection < 0)
    throw ConfigError("generator.cppn rates must be >= 0 with a positive sum");
}

void LlmConfig::validate() const {
  if (!(timeout_seconds > 0)) throw ConfigError("llm.timeout_seconds must be > 0");
  if (max_retries < 0 || backoff_ms < 0) throw ConfigError("llm retry settings must be >= 0");
  if (rate_limit < 1) throw ConfigError("llm.rate_limit must be >= 1");
  if (settings.max_attempts < 1) throw ConfigError("llm.max_attempts must be >= 1");
  if (!(settings.mutation_temperature > 0))
    throw ConfigError("llm.mutation_temperature must be > 0 (a zero temperature cannot mutate)");
  if (settings.init_temperature < 0 || settings.prompt_temperature < 0)
    throw ConfigError("llm temperatures must be >= 0");
  for (const auto& p : seed_prompts)
    if (p.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("llm.seed_prompts holds a blank prompt");
}

void RunConfig::validate() const {
  poet.validate();
  ppo.validate();
  sim.validate();
  generator.validate();
  llm.validate();
  if (generator.kind == grid::GeneratorKind::Llm &&
      static_cast<int>(llm.seed_prompts.size()) < poet.population)
    throw ConfigError(fmt::format("llm.seed_prompts has {} entries, poet.population needs {}",
                                  llm.seed_prompts.size(), poet.population));
  if (generator.width < sim.spawn_width) throw ConfigError("generator.width must cover sim.spawn_width");
}

std::vector<std::string> default_seed_prompts() {
  return {"flat terrain",
          "simple environment",
          "simple environment with a few bumps",
          "gentle hills",
          "environment with many holes",
          "flat terrain with occasional small gaps",
          "stairs going up",
          "soft ground with rigid islands",
          "rough terrain with small steps",
          "a long valley between two hills"};
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["poet"] = {{"population", c.poet.population},
               {"iterations", c.poet.iterations},
               {"eligibility_quantile", c.poet.eligibility_quantile},
               {"active_cap", c.poet.active_cap},
               {"minimal_criterion", c.poet.minimal_criterion},
               {"mc_low", c.poet.mc_low},
               {"mc_high", c.poet.mc_high},
               {"init_max_attempts", c.poet.init_max_attempts},
               {"workers", c.poet.workers},
               {"morphology", c.poet.morphology}};
  j["ppo"] = ppo::to_json(c.ppo);
  j["sim"] = sim::to_json(c.sim);
  const auto& s = c.generator.stub;
  const auto& r = c.generator.cppn;
  j["generator"] = {{"kind", std::string(grid::generator_name(c.generator.kind))},
                    {"width", c.generator.width},
                    {"height", c.generator.height},
                    {"stub",
                     {{"init_roughness_max", s.init_roughness_max},
                      {"mutation_sigma", s.mutation_sigma},
                      {"mutation_drift", s.mutation_drift},
                      {"floor_rows", s.floor_rows},
                      {"spawn_width", s.spawn_width}}},
                    {"cppn",
                     {{"perturb_weight", r.perturb_weight},
                      {"perturb_sigma", r.perturb_sigma},
                      {"add_connection", r.add_connection},
                      {"add_node", r.add_node},
                      {"toggle_connection", r.toggle_connection}}}};
  const auto& l = c.llm;
  j["llm"] = {{"endpoint", l.endpoint},
              {"model", l.model},
              {"timeout_seconds", l.timeout_seconds},
              {"max_retries", l.max_retries},
              {"backoff_ms", l.backoff_ms},
              {"rate_limit", l.rate_limit},
              {"template_path", l.template_path},
              {"log_file", l.log_file},
              {"hash_prompts", l.hash_prompts},
              {"request_template", l.settings.request_template},
              {"system_text", l.settings.system_text},
              {"max_tokens", l.settings.max_tokens},
              {"init_temperature", l.settings.init_temperature},
              {"mutation_temperature", l.settings.mutation_temperature},
              {"prompt_temperature", l.settings.prompt_temperature},
              {"max_attempts", l.settings.max_attempts},
              {"regenerate_oversized", l.settings.regenerate_oversized},
              {"seed_prompts", l.seed_prompts}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  overlay(j, "config", [&](const std::string& key, const nlohmann::json& v) {
    LLMPOET_FIELD(c, seed)
    LLMPOET_FIELD(c, out_dir)
    if (key == "ppo") {
      c.ppo = ppo::ppo_config_from_json(v, c.ppo);
      return true;
    }
    if (key == "sim") {
      c.sim = sim::sim_config_from_json(v, c.sim);
      return true;
    }
    if (key == "poet") {
      auto& p = c.poet;
      overlay(v, "poet", [&](const std::string& key, const nlohmann::json& v) {
        LLMPOET_FIELD(p, population)
        LLMPOET_FIELD(p, iterations)
        LLMPOET_FIELD(p, eligibility_quantile)
        LLMPOET_FIELD(p, active_cap)
        LLMPOET_FIELD(p, minimal_criterion)
        LLMPOET_FIELD(p, mc_low)
        LLMPOET_FIELD(p, mc_high)
        LLMPOET_FIELD(p, init_max_attempts)
        LLMPOET_FIELD(p, workers)
        LLMPOET_FIELD(p, morphology)
        return false;
      });
      return true;
    }
    if (key == "generator") {
      auto& g = c.generator;
      overlay(v, "generator", [&](const std::string& key, const nlohmann::json& v) {
        if (key == "kind") {
          try {
            g.kind = grid::generator_from_name(v.get<std::string>());
          } catch (const nlohmann::json::exception&) {
            throw;
          } catch (const Error& e) {
            throw ConfigError(std::string("generator.kind: ") + e.what());
          }
          return true;
        }
        LLMPOET_FIELD(g, width)
        LLMPOET_FIELD(g, height)
        if (key == "stub") {
          auto& s = g.stub;
          overlay(v, "generator.stub", [&](const std::string& key, const nlohmann::json& v) {
            LLMPOET_FIELD(s, init_roughness_max)
            LLMPOET_FIELD(s, mutation_sigma)
            LLMPOET_FIELD(s, mutation_drift)
            LLMPOET_FIELD(s, floor_rows)
            LLMPOET_FIELD(s, spawn_width)
            return false;
          });
          return true;
        }
        if (key == "cppn") {
          auto& r = g.cppn;
          overlay(v, "generator.cppn", [&](const std::string& key, const nlohmann::json& v) {
            LLMPOET_FIELD(r, perturb_weight)
            LLMPOET_FIELD(r, perturb_sigma)
            LLMPOET_FIELD(r, add_connection)
            LLMPOET_FIELD(r, add_node)
            LLMPOET_FIELD(r, toggle_connection)
            return false;
          });
          return true;
        }
        return false;
      });
      return true;
    }
    if (key == "llm") {
      auto& l = c.llm;
      auto& s = c.llm.settings;
      overlay(v, "llm", [&](const std::string& key, const nlohmann::json& v) {
        LLMPOET_FIELD(l, endpoint)
        LLMPOET_FIELD(l, model)
        LLMPOET_FIELD(l, timeout_seconds)
        LLMPOET_FIELD(l, max_retries)
        LLMPOET_FIELD(l, backoff_ms)
        LLMPOET_FIELD(l, rate_limit)
        LLMPOET_FIELD(l, template_path)
        LLMPOET_FIELD(l, log_file)
        LLMPOET_FIELD(l, hash_prompts)
        LLMPOET_FIELD(l, seed_prompts)
        LLMPOET_FIELD(s, request_template)
        LLMPOET_FIELD(s, system_text)
        LLMPOET_FIELD(s, max_tokens)
        LLMPOET_FIELD(s, init_temperature)
        LLMPOET_FIELD(s, mutation_temperature)
        LLMPOET_FIELD(s, prompt_temperature)
        LLMPOET_FIELD(s, max_attempts)
        LLMPOET_FIELD(s, regenerate_oversized)
        return false;
      });
      return true;
    }
    return false;
  });
  // Settings shared between sections follow their owners.
  c.llm.settings.model = c.llm.model;
  c.llm.settings.spawn_width = c.sim.spawn_width;
  c.generator.stub.spawn_width = c.sim.spawn_width;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return run_config_from_json(j);
}

std::string config_snapshot(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out_dir.clear();
  c.poet.workers = 0;
  return fmt::format("{:016x}", fnv1a(to_json(c).dump()));
}

sim::RobotMorphology load_morphology(const PoetConfig& cfg) {
  if (cfg.morphology.empty()) return sim::RobotMorphology::default_walker();
  auto m = sim::RobotMorphology::from_file(cfg.morphology);
  const auto problems = m.violations();
  if (!problems.empty()) throw ConfigError(fmt::format("{}: {}", cfg.morphology, problems.front()));
  return m;
}

}  // namespace llmpoet
