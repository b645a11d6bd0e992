#include "llmpoet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "llmpoet/eval.hpp"
#include "llmpoet/generators.hpp"
#include "llmpoet/io.hpp"
#include "llmpoet/poet.hpp"

namespace llmpoet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GeneratorBundle {
  std::unique_ptr<llm::TextCompleter> client;
  gen::PromptMutationTemplate tmpl;
  std::unique_ptr<gen::EnvGenerator> generator;
};

std::unique_ptr<llm::TextCompleter> make_client(const RunConfig& cfg, const Hooks& hooks,
                                                const std::optional<fs::path>& log_path) {
  if (hooks.make_client) return hooks.make_client(cfg);
  const char* key = std::getenv(llm::kApiKeyEnvVar);
  if (!key || !*key) throw ConfigError(fmt::format("--generator llm needs {} in the environment", llm::kApiKeyEnvVar));
  llm::ClientOptions opts;
  opts.model = cfg.llm.model;
  opts.retry.max_retries = cfg.llm.max_retries;
  opts.retry.backoff_base = std::chrono::milliseconds(cfg.llm.backoff_ms);
  opts.retry.rate_limit = cfg.llm.rate_limit;
  opts.hash_prompts = cfg.llm.hash_prompts;
  opts.log_path = log_path;
  const auto timeout = std::chrono::seconds(static_cast<long>(std::ceil(cfg.llm.timeout_seconds)));
  return llm::CompletionClient::from_environment(cfg.llm.endpoint, std::move(opts), timeout);
}

GeneratorBundle make_generator(const RunConfig& cfg, const Hooks& hooks, const std::optional<fs::path>& log_path) {
  GeneratorBundle b;
  switch (cfg.generator.kind) {
    case grid::GeneratorKind::Stub:
      b.generator = std::make_unique<gen::StubGenerator>(cfg.generator.stub);
      break;
    case grid::GeneratorKind::Cppn:
      b.generator = std::make_unique<gen::CppnGenerator>(cfg.generator.cppn, cfg.sim.spawn_width);
      break;
    case grid::GeneratorKind::Llm:
      b.tmpl = cfg.llm.template_path.empty() ? gen::PromptMutationTemplate::builtin()
                                             : gen::PromptMutationTemplate::load(cfg.llm.template_path);
      b.client = make_client(cfg, hooks, log_path);
      b.generator = std::make_unique<gen::LlmGenerator>(*b.client, b.tmpl, cfg.llm.settings);
      break;
  }
  return b;
}

RunConfig base_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  try {
    return load_run_config(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

grid::GeneratorKind parse_kind(const std::string& name) {
  try {
    return grid::generator_from_name(name);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

fs::path sidecar_of(const fs::path& grid_file) {
  fs::path p = grid_file;
  return p.replace_extension(".json");
}

void write_env(const fs::path& path, const grid::EnvRecord& env) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  grid::write_grid_file(path.string(), env.grid);
  io::write_file_atomic(sidecar_of(path), grid::env_metadata(env).dump(2) + "\n");
}

std::string fmt_score(double v) { return std::isfinite(v) ? fmt::format("{:.3f}", v) : "-"; }

// --- commands ---------------------------------------------------------------

struct RunPoetArgs {
  std::string config;
  std::string generator = "stub";
  int iterations = PoetConfig{}.iterations;
  int population = PoetConfig{}.population;
  std::uint64_t seed = 0;
  std::string out = RunConfig{}.out_dir;
  std::string resume;
  int workers = 0;
  int stop_after = -1;
};

int cmd_run_poet(const RunPoetArgs& a, const CLI::App& sub, std::ostream& out, const Hooks& hooks) {
  poet::RunOptions options;
  options.log = &out;
  options.stop_after = a.stop_after;
  if (!a.resume.empty()) {
    for (const char* flag : {"--config", "--generator", "--iterations", "--population", "--seed", "--out"})
      if (sub.count(flag)) throw ConfigError(fmt::format("{} cannot be combined with --resume", flag));
    if (!fs::exists(a.resume)) throw ConfigError("no such checkpoint: " + a.resume);
    RunConfig cfg = poet::load_run_snapshot(a.resume);
    const fs::path run_dir = fs::is_directory(a.resume) ? fs::path(a.resume) : poet::run_dir_of_checkpoint(a.resume);
    if (sub.count("--workers")) options.workers = a.workers;
    auto bundle = make_generator(cfg, hooks, run_dir / cfg.llm.log_file);
    auto outcome = poet::resume(a.resume, *bundle.generator, options);
    if (outcome.already_finished)
      out << "notice: run in " << outcome.run_dir.string() << " already finished; nothing to do\n";
    else
      out << "run directory: " << outcome.run_dir.string() << "\n";
    return kOk;
  }
  RunConfig cfg = base_config(a.config);
  if (sub.count("--generator") || a.config.empty()) cfg.generator.kind = parse_kind(a.generator);
  if (sub.count("--iterations")) cfg.poet.iterations = a.iterations;
  if (sub.count("--population")) cfg.poet.population = a.population;
  if (sub.count("--seed")) cfg.seed = a.seed;
  if (sub.count("--out")) cfg.out_dir = a.out;
  if (sub.count("--workers")) cfg.poet.workers = a.workers;
  cfg.validate();
  auto bundle = make_generator(cfg, hooks, fs::path(cfg.out_dir) / cfg.llm.log_file);
  auto outcome = poet::run(cfg, *bundle.generator, options);
  out << "run directory: " << outcome.run_dir.string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string run_dir;
  int repeats = eval::EvalOptions{}.repeats;
  double bin_width = eval::EvalOptions{}.bin_width;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out;
};

int cmd_eval(const EvalArgs& a, const CLI::App& sub, std::ostream& out) {
  if (!fs::is_directory(a.run_dir)) throw ConfigError("no such run directory: " + a.run_dir);
  eval::EvalOptions opt;
  opt.repeats = a.repeats;
  opt.bin_width = a.bin_width;
  opt.workers = a.workers;
  if (sub.count("--seed")) opt.seed = a.seed;
  if (!a.out.empty()) opt.out_dir = a.out;
  auto res = eval::run_eval(a.run_dir, opt);
  const auto& s = res.summary;
  out << fmt::format("environments: {} scored, {} excluded\n", s.count, s.excluded);
  out << fmt::format("score difference (POET - PPO only): mean {:.4f}, std {}, skewness {}\n", s.mean,
                     s.std ? fmt::format("{:.4f}", *s.std) : "n/a", s.skewness ? fmt::format("{:.4f}", *s.skewness) : "n/a");
  out << "report: " << (opt.out_dir.empty() ? fs::path(a.run_dir) : opt.out_dir).string() << "/eval_report.csv\n";
  return kOk;
}

struct GenArgs {
  std::string config;
  std::string generator = "stub";
  std::string prompt;
  int width = GeneratorConfig{}.width;
  int height = GeneratorConfig{}.height;
  std::uint64_t seed = 0;
  std::string out;
};

RunConfig gen_config(const GenArgs& a, const CLI::App& sub) {
  RunConfig cfg = base_config(a.config);
  if (sub.count("--generator") || a.config.empty()) cfg.generator.kind = parse_kind(a.generator);
  if (sub.count("--width") || a.config.empty()) cfg.generator.width = a.width;
  if (sub.count("--height") || a.config.empty()) cfg.generator.height = a.height;
  if (cfg.generator.width < 1 || cfg.generator.height < 1) throw ConfigError("--width and --height must be >= 1");
  cfg.validate();
  return cfg;
}

int cmd_gen_env(const GenArgs& a, const CLI::App& sub, std::ostream& out, const Hooks& hooks) {
  RunConfig cfg = gen_config(a, sub);
  auto bundle = make_generator(cfg, hooks, std::nullopt);
  Rng rng = make_rng(a.seed, "gen-env");
  auto env = bundle.generator->generate(a.prompt, cfg.generator.width, cfg.generator.height, rng);
  if (env.prompt.empty()) env.prompt = a.prompt;
  if (a.out.empty()) {
    out << grid::render_grid(env.grid) << "\n";
    return kOk;
  }
  env.lineage_id = fs::path(a.out).stem().string();
  write_env(a.out, env);
  out << "wrote " << a.out << " and " << sidecar_of(a.out).string() << "\n";
  return kOk;
}

struct MutateArgs {
  std::string config;
  std::string env;
  std::string generator;
  std::string force_branch;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_mutate_env(const MutateArgs& a, const CLI::App& sub, std::ostream& out, const Hooks& hooks) {
  if (!fs::exists(a.env)) throw ConfigError("no such environment file: " + a.env);
  const fs::path side = sidecar_of(a.env);
  grid::EnvRecord parent;
  if (fs::exists(side)) {
    parent = grid::env_from_metadata(json::parse(io::read_file(side)), grid::read_grid_file(a.env));
  } else {
    parent.grid = grid::read_grid_file(a.env);
    parent.lineage_id = fs::path(a.env).stem().string();
  }
  RunConfig cfg = base_config(a.config);
  cfg.generator.kind = sub.count("--generator") ? parse_kind(a.generator) : parent.generator;
  cfg.validate();

  std::optional<gen::MutationBranch> forced;
  if (a.force_branch == "same") forced = gen::MutationBranch::SamePrompt;
  if (a.force_branch == "mutated") forced = gen::MutationBranch::MutatedPrompt;

  auto bundle = make_generator(cfg, hooks, std::nullopt);
  Rng rng = make_rng(a.seed, "mutate-env");
  grid::EnvRecord child;
  if (cfg.generator.kind == grid::GeneratorKind::Llm) {
    gen::MutationBranch taken{};
    child = gen::mutate_environment(parent, rng, *bundle.client, bundle.tmpl, cfg.llm.settings, forced, &taken);
    out << "branch: " << (taken == gen::MutationBranch::SamePrompt ? "same" : "mutated") << "\n";
  } else {
    // stub and CPPN mutate parameters directly; there is no prompt coin
    if (forced) throw ConfigError("--force-branch needs --generator llm");
    child = bundle.generator->mutate(parent, rng);
    if (child.prompt.empty()) child.prompt = parent.prompt;
  }
  out << "prompt: " << child.prompt << "\n";
  if (a.out.empty()) {
    out << grid::render_grid(child.grid) << "\n";
    return kOk;
  }
  child.lineage_id = fs::path(a.out).stem().string();
  child.parent_id = parent.lineage_id;
  write_env(a.out, child);
  out << "wrote " << a.out << " and " << sidecar_of(a.out).string() << "\n";
  return kOk;
}

struct ExportArgs {
  std::string dir;
  std::string out;
  bool allow_dup = false;
};

int cmd_dataset_export(const ExportArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.dir)) throw ConfigError("no such directory: " + a.dir);
  std::vector<fs::path> grids;
  for (const auto& e : fs::directory_iterator(a.dir))
    if (e.path().extension() == ".txt") grids.push_back(e.path());
  std::sort(grids.begin(), grids.end());
  if (grids.empty()) throw ConfigError("no grid files (*.txt) in " + a.dir);
  std::vector<llm::CaptionedGrid> pairs;
  for (const auto& g : grids) {
    const fs::path side = sidecar_of(g);
    if (!fs::exists(side)) throw ConfigError("missing caption sidecar " + side.string());
    json meta;
    try {
      meta = json::parse(io::read_file(side));
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", side.string(), e.what()));
    }
    std::string caption;
    if (meta.contains("caption"))
      caption = meta["caption"].get<std::string>();
    else if (meta.contains("prompt"))
      caption = meta["prompt"].get<std::string>();
    else
      throw ConfigError(side.string() + " has neither \"caption\" nor \"prompt\"");
    pairs.push_back({caption, grid::read_grid_file(g.string())});
  }
  const auto n = llm::export_finetune_dataset(pairs, a.out, a.allow_dup);
  out << fmt::format("wrote {} examples to {}\n", n, a.out);
  return kOk;
}

int cmd_report(const std::string& run_dir, std::ostream& out) {
  if (!fs::is_directory(run_dir)) throw ConfigError("no such run directory: " + run_dir);
  const auto state = poet::load_checkpoint(poet::latest_checkpoint(run_dir));
  const auto active = state.active_count();
  out << fmt::format("run {}: generator {}, seed {}, {} iterations done\n", run_dir,
                     grid::generator_name(state.generator), state.seed, state.iteration);
  out << fmt::format("environments: {} created, {} active, {} archived\n", state.niches.size(), active,
                     state.niches.size() - active);
  out << fmt::format("{:<10} {:<10} {:>5} {:>6} {:>9} {:>9} {:>8}  {}\n", "env", "parent", "born", "active",
                     "best", "poet", "updates", "prompt");
  for (const auto& n : state.niches)
    out << fmt::format("{:<10} {:<10} {:>5} {:>6} {:>9} {:>9} {:>8}  {}\n", n.env.lineage_id,
                       n.env.parent_id.value_or("-"), n.env.created_at_iteration, n.active ? "yes" : "no",
                       fmt_score(n.best_score), fmt_score(n.best_eval_score), n.updates_trained, n.env.prompt);
  const fs::path summary = fs::path(run_dir) / "eval_summary.json";
  if (fs::exists(summary)) {
    const auto s = json::parse(io::read_file(summary));
    out << "eval summary: " << s.dump() << "\n";
  } else {
    out << "eval summary: none (run `llmpoet eval --run " << run_dir << "`)\n";
  }
  return kOk;
}

int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (auto* ee = dynamic_cast<const eval::EvalError*>(&e))
    return ee->code() == eval::EvalErrc::EmptyHistory ? kConfigError : kRuntimeError;
  if (auto* de = dynamic_cast<const llm::DatasetError*>(&e))
    return de->code() == llm::DatasetErrc::Io ? kRuntimeError : kConfigError;
  return kRuntimeError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks) {
  CLI::App app{"Open-ended co-evolution of voxel terrains and PPO walkers", "llmpoet"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  RunPoetArgs rp;
  auto* run_poet = app.add_subcommand("run-poet", "Run the POET loop into a run directory");
  run_poet->add_option("--config", rp.config, "JSON config file with [poet], [ppo], [sim], [generator], [llm] sections (default: built-in defaults)");
  run_poet->add_option("--generator", rp.generator, "Environment generator")->check(CLI::IsMember({"llm", "cppn", "stub"}));
  run_poet->add_option("--iterations", rp.iterations, "POET iterations");
  run_poet->add_option("--population", rp.population, "Initial environment-agent pairs");
  run_poet->add_option("--seed", rp.seed, "Master seed");
  run_poet->add_option("--out", rp.out, "Run directory (must not hold a run yet)");
  run_poet->add_option("--resume", rp.resume, "Continue from a checkpoint file or run directory (default: none)");
  run_poet->add_option("--workers", rp.workers, "Worker threads; 0 = one per CPU");
  run_poet->add_option("--stop-after", rp.stop_after, "Stop after this iteration, as if interrupted; -1 = never");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score a finished run against PPO-only baselines");
  eval_cmd->add_option("--run", ea.run_dir, "Run directory")->required();
  eval_cmd->add_option("--repeats", ea.repeats, "PPO-only repeats per environment");
  eval_cmd->add_option("--bin-width", ea.bin_width, "Histogram bin width, meters");
  eval_cmd->add_option("--seed", ea.seed, "Baseline seed (default: the run's seed)");
  eval_cmd->add_option("--workers", ea.workers, "Worker threads; 0 = one per CPU");
  eval_cmd->add_option("--out", ea.out, "Output directory (default: the run directory)");

  GenArgs ga;
  auto* gen_cmd = app.add_subcommand("gen-env", "Generate one environment");
  gen_cmd->add_option("--config", ga.config, "JSON config file (default: built-in defaults)");
  gen_cmd->add_option("--generator", ga.generator, "Environment generator")->check(CLI::IsMember({"llm", "cppn", "stub"}));
  gen_cmd->add_option("--prompt", ga.prompt, "Caption for the LLM; \"roughness=<r>\" for the stub (default: empty)");
  gen_cmd->add_option("--width", ga.width, "Grid width");
  gen_cmd->add_option("--height", ga.height, "Grid height");
  gen_cmd->add_option("--seed", ga.seed, "Seed");
  gen_cmd->add_option("--out", ga.out, "Grid file to write, with a .json sidecar (default: print to stdout)");

  MutateArgs ma;
  auto* mut_cmd = app.add_subcommand("mutate-env", "Mutate one environment file");
  mut_cmd->add_option("--config", ma.config, "JSON config file (default: built-in defaults)");
  mut_cmd->add_option("--env", ma.env, "Parent grid file; its .json sidecar supplies prompt and generator")->required();
  mut_cmd->add_option("--generator", ma.generator, "Override the sidecar's generator (default: from the sidecar, else stub)")
      ->check(CLI::IsMember({"llm", "cppn", "stub"}));
  mut_cmd->add_option("--force-branch", ma.force_branch, "LLM only: skip the coin and take the same or mutated prompt (default: coin flip)")
      ->check(CLI::IsMember({"same", "mutated"}));
  mut_cmd->add_option("--seed", ma.seed, "Seed");
  mut_cmd->add_option("--out", ma.out, "Grid file to write, with a .json sidecar (default: print to stdout)");

  ExportArgs xa;
  auto* exp_cmd = app.add_subcommand("dataset-export", "Write grid/caption pairs as a fine-tuning JSONL file");
  exp_cmd->add_option("--dir", xa.dir, "Directory of <name>.txt grids with <name>.json caption sidecars")->required();
  exp_cmd->add_option("--out", xa.out, "JSONL file to write")->required();
  exp_cmd->add_flag("--allow-dup", xa.allow_dup, "Allow one caption for several grids (default: off)");

  std::string report_dir;
  auto* rep_cmd = app.add_subcommand("report", "Summarize a run directory");
  rep_cmd->add_option("--run", report_dir, "Run directory")->required();

  std::vector<std::string> argv_store;
  argv_store.emplace_back("llmpoet");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_poet) return cmd_run_poet(rp, *run_poet, out, hooks);
    if (*eval_cmd) return cmd_eval(ea, *eval_cmd, out);
    if (*gen_cmd) return cmd_gen_env(ga, *gen_cmd, out, hooks);
    if (*mut_cmd) return cmd_mutate_env(ma, *mut_cmd, out, hooks);
    if (*exp_cmd) return cmd_dataset_export(xa, out);
    if (*rep_cmd) return cmd_report(report_dir, out);
  } catch (const std::exception& e) {
    const int code = exit_code_of(e);
    err << "llmpoet: " << (code == kConfigError ? "config error: " : "error: ") << e.what() << "\n";
    return code;
  }
  return kConfigError;
}

}  // namespace llmpoet::cli
