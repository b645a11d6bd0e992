#include "llmpoet/poet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "llmpoet/io.hpp"
#include "llmpoet/parallel.hpp"

namespace llmpoet::poet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

json score_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double score_from_json(const json& j) { return j.is_null() ? kNegInf : j.get<double>(); }

// Empty when the environment can host an episode.
std::string viability_problem(const grid::EnvRecord& env, const sim::RobotMorphology& morph, const RunConfig& cfg) {
  const auto issues = grid::validate_terrain(env.grid, cfg.sim.spawn_width);
  if (!issues.empty()) return fmt::format("invalid terrain ({})", grid::issue_name(issues.front()));
  try {
    sim::build_world(env.grid, morph, cfg.sim);
  } catch (const sim::SimError& e) {
    return e.what();
  }
  return {};
}

std::string hex16(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace

Niche::Niche() : best_score(kNegInf), best_eval_score(kNegInf) {}

std::vector<std::size_t> PoetState::active_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < niches.size(); ++i)
    if (niches[i].active) out.push_back(i);
  return out;
}

const Niche* PoetState::find(const std::string& id) const {
  for (const auto& n : niches)
    if (n.env.lineage_id == id) return &n;
  return nullptr;
}

std::string lineage_id(int index) { return fmt::format("env_{:04d}", index); }

double evaluate_agent(const ppo::PolicyParams& agent, const grid::VoxelGrid& terrain,
                      const sim::RobotMorphology& morph, const RunConfig& cfg) {
  Rng unused(0);
  return sim::rollout(terrain, morph, agent, cfg.sim.horizon, unused, true, cfg.sim).score;
}

PoetState init_population(gen::EnvGenerator& generator, const RunConfig& cfg, const sim::RobotMorphology& morph) {
  PoetState s;
  s.seed = cfg.seed;
  s.generator = generator.kind();
  s.config_hash = config_hash(cfg);
  const int n = cfg.poet.population;
  if (generator.kind() == grid::GeneratorKind::Llm && static_cast<int>(cfg.llm.seed_prompts.size()) < n)
    throw ConfigError(fmt::format("population {} needs as many seed prompts, config has {}", n,
                                  cfg.llm.seed_prompts.size()));
  for (int i = 0; i < n; ++i) {
    const std::string prompt =
        generator.kind() == grid::GeneratorKind::Llm ? cfg.llm.seed_prompts[static_cast<std::size_t>(i)] : "";
    std::optional<grid::EnvRecord> env;
    std::string last_error;
    for (int attempt = 0; attempt < cfg.poet.init_max_attempts && !env; ++attempt) {
      Rng rng = make_rng(cfg.seed, "generator:init", static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt));
      try {
        auto candidate = generator.generate(prompt, cfg.generator.width, cfg.generator.height, rng);
        last_error = viability_problem(candidate, morph, cfg);
        if (last_error.empty()) env = std::move(candidate);
      } catch (const Error& e) {
        last_error = e.what();
      }
    }
    if (!env)
      throw GenerationFailed(fmt::format("initial environment {} failed {} times; last error: {}", i,
                                         cfg.poet.init_max_attempts, last_error));
    Niche niche;
    niche.env = std::move(*env);
    niche.env.lineage_id = lineage_id(s.next_env_index++);
    niche.env.parent_id.reset();
    niche.env.created_at_iteration = 0;
    Rng arng = make_rng(cfg.seed, "agent:init", static_cast<std::uint64_t>(i));
    niche.agent = ppo::fresh_policy(morph, cfg.ppo, arng);
    s.niches.push_back(std::move(niche));
  }
  return s;
}

OptimizeReport optimize_all(PoetState& state, const RunConfig& cfg, const sim::RobotMorphology& morph) {
  const int k = state.iteration + 1;
  const auto active = state.active_indices();
  OptimizeReport rep;
  rep.results.resize(state.niches.size());
  std::vector<std::string> errors(active.size());
  parallel_for(active.size(), cfg.poet.workers, [&](std::size_t j) {
    const std::size_t i = active[j];
    const Niche& n = state.niches[i];
    Rng rng = make_rng(state.seed, "trainer", i, static_cast<std::uint64_t>(k));
    try {
      rep.results[i] = ppo::train_pair(n.env.grid, morph, n.agent, cfg.ppo, rng, cfg.sim);
    } catch (const Error& e) {
      errors[j] = e.what();
      if (errors[j].empty()) errors[j] = "training failed";
    }
  });
  for (std::size_t j = 0; j < active.size(); ++j) {
    const std::size_t i = active[j];
    if (!rep.results[i]) {
      rep.failures.emplace_back(i, errors[j]);
      continue;
    }
    Niche& n = state.niches[i];
    const auto& r = *rep.results[i];
    n.agent = r.params;
    n.score_history.push_back(r.best_score);
    n.best_score = std::max(n.best_score, r.best_score);
    n.best_eval_score = std::max(n.best_eval_score, r.best_eval_score);
    n.active_iterations += 1;
    n.updates_trained += static_cast<long>(r.updates.size());
    n.env_steps += r.env_steps;
  }
  return rep;
}

std::vector<std::optional<std::size_t>> pick_replacements(const std::vector<double>& score, std::size_t m) {
  std::vector<std::optional<std::size_t>> out(m);
  for (std::size_t t = 0; t < m; ++t) {
    double best = score[t * m + t];
    for (std::size_t s = 0; s < m; ++s) {
      if (s != t && score[s * m + t] > best) {
        best = score[s * m + t];
        out[t] = s;
      }
    }
  }
  return out;
}

TransferReport transfer(PoetState& state, const RunConfig& cfg, const sim::RobotMorphology& morph) {
  const int k = state.iteration + 1;
  TransferReport rep;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.before.assign(state.niches.size(), nan);
  rep.after.assign(state.niches.size(), nan);
  const auto active = state.active_indices();
  const std::size_t m = active.size();
  if (m < 2) return rep;

  // score[s * m + t]: agent of active[s] on the env of active[t]
  std::vector<double> score(m * m, kNegInf);
  parallel_for(m * m, cfg.poet.workers, [&](std::size_t c) {
    const auto& src = state.niches[active[c / m]];
    const auto& dst = state.niches[active[c % m]];
    try {
      score[c] = evaluate_agent(src.agent, dst.env.grid, morph, cfg);
    } catch (const Error&) {
      score[c] = kNegInf;
    }
  });

  std::vector<ppo::PolicyParams> snapshot;
  snapshot.reserve(m);
  for (auto i : active) snapshot.push_back(state.niches[i].agent);

  const auto picks = pick_replacements(score, m);
  for (std::size_t t = 0; t < m; ++t) {
    const double incumbent = score[t * m + t];
    const auto& winner = picks[t];
    const double best = winner ? score[*winner * m + t] : incumbent;
    for (std::size_t s = 0; s < m; ++s) {
      if (s == t) continue;
      rep.log.push_back({k, state.niches[active[s]].env.lineage_id, state.niches[active[t]].env.lineage_id, incumbent,
                         score[s * m + t], winner && *winner == s});
    }
    Niche& target = state.niches[active[t]];
    if (winner) target.agent = snapshot[*winner];
    rep.before[active[t]] = incumbent;
    rep.after[active[t]] = best;
    target.best_eval_score = std::max(target.best_eval_score, best);
  }
  return rep;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ReproduceReport reproduce(PoetState& state, gen::EnvGenerator& generator, const RunConfig& cfg,
                          const sim::RobotMorphology& morph) {
  const int k = state.iteration + 1;
  ReproduceReport rep;
  const auto active = state.active_indices();
  if (active.empty()) {
    rep.skipped = "no active niche";
    return rep;
  }

  std::vector<double> finite;
  for (auto i : active)
    if (std::isfinite(state.niches[i].best_score)) finite.push_back(state.niches[i].best_score);
  std::vector<std::size_t> eligible;
  if (finite.empty()) {
    eligible = active;
  } else {
    const double threshold = quantile(finite, cfg.poet.eligibility_quantile);
    for (auto i : active)
      if (state.niches[i].best_score >= threshold) eligible.push_back(i);
  }

  Rng pick = make_rng(state.seed, "reproduce", static_cast<std::uint64_t>(k));
  const std::size_t parent = eligible[uniform_index(pick, eligible.size())];
  rep.parent = parent;
  const Niche& p = state.niches[parent];

  Rng grng = make_rng(state.seed, "generator", static_cast<std::uint64_t>(k));
  grid::EnvRecord child;
  try {
    child = generator.mutate(p.env, grng);
  } catch (const Error& e) {
    rep.skipped = fmt::format("generation failed: {}", e.what());
    return rep;
  }
  if (auto problem = viability_problem(child, morph, cfg); !problem.empty()) {
    rep.skipped = "child not viable: " + problem;
    return rep;
  }
  if (cfg.poet.minimal_criterion) {
    const double s = evaluate_agent(p.agent, child.grid, morph, cfg);
    if (!(s >= cfg.poet.mc_low && s <= cfg.poet.mc_high)) {
      rep.skipped = fmt::format("minimal criterion: parent agent scored {} on the child", io::format_double(s));
      return rep;
    }
  }

  Niche niche;
  niche.env = std::move(child);
  niche.env.lineage_id = lineage_id(state.next_env_index++);
  niche.env.parent_id = p.env.lineage_id;
  niche.env.created_at_iteration = k;
  niche.agent = p.agent;
  state.niches.push_back(std::move(niche));
  rep.child = state.niches.size() - 1;

  if (cfg.poet.active_cap > 0 && static_cast<int>(state.active_count()) > cfg.poet.active_cap) {
    const std::size_t oldest = state.active_indices().front();
    state.niches[oldest].active = false;
    state.niches[oldest].archived_at_iteration = k;
    rep.archived = oldest;
  }
  return rep;
}

// --- persistence ------------------------------------------------------------

json niche_history_json(const Niche& n) {
  json j = grid::env_metadata(n.env);
  json hist = json::array();
  for (double v : n.score_history) hist.push_back(score_json(v));
  j["score_history"] = hist;
  j["best_score"] = score_json(n.best_score);
  j["best_eval_score"] = score_json(n.best_eval_score);
  j["active"] = n.active;
  j["archived_at_iteration"] = n.archived_at_iteration < 0 ? json(nullptr) : json(n.archived_at_iteration);
  j["active_iterations"] = n.active_iterations;
  j["updates_trained"] = n.updates_trained;
  j["env_steps"] = n.env_steps;
  return j;
}

fs::path checkpoint_path(const fs::path& run_dir, int iteration) {
  return run_dir / "checkpoints" / fmt::format("iter_{:04d}.json", iteration);
}

fs::path run_dir_of_checkpoint(const fs::path& checkpoint) { return checkpoint.parent_path().parent_path(); }

fs::path write_checkpoint(const fs::path& run_dir, const PoetState& state) {
  const fs::path dir = run_dir / "checkpoints";
  fs::create_directories(dir / "agents");
  json niches = json::array();
  for (const auto& n : state.niches) {
    const std::string bytes = ppo::to_binary(n.agent);
    const std::string hash = hex16(fnv1a(bytes));
    const fs::path blob = dir / "agents" / (hash + ".bin");
    if (!fs::exists(blob)) io::write_file_atomic(blob, bytes);
    json j = niche_history_json(n);
    j["grid"] = grid::render_grid(n.env.grid);
    j["agent"] = hash;
    niches.push_back(std::move(j));
  }
  json doc{{"iteration", state.iteration},
           {"seed", state.seed},
           {"next_env_index", state.next_env_index},
           {"generator", grid::generator_name(state.generator)},
           {"config_hash", state.config_hash},
           {"niches", std::move(niches)}};
  const fs::path path = checkpoint_path(run_dir, state.iteration);
  io::write_file_atomic(path, doc.dump(1) + "\n");
  return path;
}

PoetState load_checkpoint(const fs::path& checkpoint) {
  const fs::path agents = checkpoint.parent_path() / "agents";
  PoetState s;
  try {
    const json doc = json::parse(io::read_file(checkpoint));
    s.iteration = doc.at("iteration").get<int>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.next_env_index = doc.at("next_env_index").get<int>();
    s.generator = grid::generator_from_name(doc.at("generator").get<std::string>());
    s.config_hash = doc.at("config_hash").get<std::string>();
    for (const auto& j : doc.at("niches")) {
      Niche n;
      n.env = grid::env_from_metadata(j, grid::parse_grid(j.at("grid").get<std::string>()));
      for (const auto& v : j.at("score_history")) n.score_history.push_back(score_from_json(v));
      n.best_score = score_from_json(j.at("best_score"));
      n.best_eval_score = score_from_json(j.at("best_eval_score"));
      n.active = j.at("active").get<bool>();
      n.archived_at_iteration = j.at("archived_at_iteration").is_null() ? -1 : j["archived_at_iteration"].get<int>();
      n.active_iterations = j.at("active_iterations").get<int>();
      n.updates_trained = j.at("updates_trained").get<long>();
      n.env_steps = j.at("env_steps").get<long>();
      n.agent = ppo::policy_from_binary(io::read_file(agents / (j.at("agent").get<std::string>() + ".bin")));
      s.niches.push_back(std::move(n));
    }
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed checkpoint {}: {}", checkpoint.string(), e.what()));
  }
  return s;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  fs::path best;
  int best_iter = -1;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      int it = -1;
      if (name.size() == 14 && name.starts_with("iter_") && name.ends_with(".json") &&
          std::sscanf(name.c_str(), "iter_%d.json", &it) == 1 && it > best_iter) {
        best_iter = it;
        best = e.path();
      }
    }
  }
  if (best_iter < 0) throw IoError("no checkpoint in " + run_dir.string());
  return best;
}

namespace {

fs::path resolve_checkpoint(const fs::path& checkpoint_or_dir) {
  return fs::is_directory(checkpoint_or_dir) ? latest_checkpoint(checkpoint_or_dir) : checkpoint_or_dir;
}

int checkpoint_iteration(const fs::path& p) {
  int it = -1;
  const std::string name = p.filename().string();
  if (std::sscanf(name.c_str(), "iter_%d.json", &it) != 1) return -1;
  return it;
}

const char* kScoresHeader =
    "iteration,env_id,status,train_best,eval_best,final_eval,niche_best_score,niche_best_eval_score,updates,env_steps\n";
const char* kTransfersHeader = "iteration,source,target,incumbent_score,candidate_score,replaced\n";
const char* kReproduceHeader = "iteration,parent,child,archived,skipped\n";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

// Drops data rows whose leading iteration field exceeds `keep`.
void truncate_csv(const fs::path& path, int keep) {
  if (!fs::exists(path)) return;
  std::istringstream in(io::read_file(path));
  std::string line, out;
  bool header = true;
  while (std::getline(in, line)) {
    if (!header) {
      int it = 0;
      if (std::sscanf(line.c_str(), "%d,", &it) != 1 || it > keep) continue;
    }
    header = false;
    out += line + "\n";
  }
  io::write_file_atomic(path, out);
}

void write_niche_history(const fs::path& run_dir, const Niche& n) {
  const fs::path dir = run_dir / "niche_history";
  io::write_file_atomic(dir / (n.env.lineage_id + ".txt"), grid::render_grid(n.env.grid) + "\n");
  io::write_file_atomic(dir / (n.env.lineage_id + ".json"), niche_history_json(n).dump(2) + "\n");
}

class Loop {
 public:
  Loop(fs::path run_dir, const RunConfig& cfg, gen::EnvGenerator& generator, const RunOptions& options)
      : dir_(std::move(run_dir)), cfg_(cfg), generator_(generator), options_(options),
        morph_(load_morphology(cfg.poet)) {}

  const sim::RobotMorphology& morph() const { return morph_; }

  void start(PoetState& state) {
    for (const auto& n : state.niches) write_niche_history(dir_, n);
    write_checkpoint(dir_, state);
    log(fmt::format("iter 0: {} initial niches", state.niches.size()));
  }

  void iterate(PoetState& state) {
    const int k = state.iteration + 1;
    auto opt = optimize_all(state, cfg_, morph_);
    std::string rows;
    for (std::size_t i = 0; i < state.niches.size(); ++i) {
      const Niche& n = state.niches[i];
      using io::format_double;
      if (const auto& r = opt.results[i]) {
        rows += fmt::format("{},{},ok,{},{},{},{},{},{},{}\n", k, n.env.lineage_id, format_double(r->best_score),
                            format_double(r->best_eval_score), format_double(r->final_eval_score),
                            format_double(n.best_score), format_double(n.best_eval_score), n.updates_trained,
                            n.env_steps);
        ppo::append_training_stats(dir_ / "training_stats" / (n.env.lineage_id + ".csv"), k, *r);
      }
    }
    for (const auto& [i, why] : opt.failures) {
      const Niche& n = state.niches[i];
      rows += fmt::format("{},{},failed,,,,{},{},{},{}\n", k, n.env.lineage_id, io::format_double(n.best_score),
                          io::format_double(n.best_eval_score), n.updates_trained, n.env_steps);
      log(fmt::format("iter {}: training {} failed: {}", k, n.env.lineage_id, why));
    }
    io::append_file(dir_ / "scores.csv", rows);

    auto tr = transfer(state, cfg_, morph_);
    rows.clear();
    int replaced = 0;
    for (const auto& e : tr.log) {
      rows += fmt::format("{},{},{},{},{},{}\n", e.iteration, e.source, e.target, io::format_double(e.incumbent_score),
                          io::format_double(e.candidate_score), e.replaced ? 1 : 0);
      replaced += e.replaced;
    }
    io::append_file(dir_ / "transfers.csv", rows);

    auto rep = reproduce(state, generator_, cfg_, morph_);
    auto id_of = [&](const std::optional<std::size_t>& i) { return i ? state.niches[*i].env.lineage_id : ""; };
    io::append_file(dir_ / "reproduce.csv", fmt::format("{},{},{},{},{}\n", k, id_of(rep.parent), id_of(rep.child),
                                                        id_of(rep.archived), csv_field(rep.skipped)));

    state.iteration = k;
    for (const auto& n : state.niches) write_niche_history(dir_, n);
    write_checkpoint(dir_, state);

    double best = kNegInf;
    for (auto i : state.active_indices()) best = std::max(best, state.niches[i].best_eval_score);
    log(fmt::format("iter {}: active {}, total {}, transfers {}, best eval {:.3f}, {}", k, state.active_count(),
                    state.niches.size(), replaced, best,
                    rep.child ? "new " + id_of(rep.child) : "no child (" + rep.skipped + ")"));
  }

  void until_done(PoetState& state) {
    while (state.iteration < cfg_.poet.iterations) {
      iterate(state);
      if (options_.stop_after >= 0 && state.iteration >= options_.stop_after) break;
    }
  }

 private:
  void log(const std::string& line) {
    if (options_.log) *options_.log << line << '\n' << std::flush;
  }

  fs::path dir_;
  const RunConfig& cfg_;
  gen::EnvGenerator& generator_;
  const RunOptions& options_;
  sim::RobotMorphology morph_;
};

void check_generator(const PoetState& state, const gen::EnvGenerator& generator) {
  if (generator.kind() != state.generator)
    throw ConfigError(fmt::format("run uses the {} generator, got {}", grid::generator_name(state.generator),
                                  grid::generator_name(generator.kind())));
}

}  // namespace

RunConfig load_run_snapshot(const fs::path& checkpoint_or_dir) {
  const fs::path run_dir =
      fs::is_directory(checkpoint_or_dir) ? checkpoint_or_dir : run_dir_of_checkpoint(checkpoint_or_dir);
  return load_run_config(run_dir / "config.snapshot");
}

RunOutcome run(const RunConfig& cfg, gen::EnvGenerator& generator, const RunOptions& options) {
  cfg.validate();
  RunOutcome out;
  out.run_dir = cfg.out_dir;
  if (fs::exists(out.run_dir / "config.snapshot") || fs::exists(out.run_dir / "checkpoints"))
    throw IoError(out.run_dir.string() + " already holds a run; resume it or pick another directory");
  std::error_code ec;
  for (const char* sub : {"checkpoints", "niche_history", "training_stats"}) {
    fs::create_directories(out.run_dir / sub, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", (out.run_dir / sub).string(), ec.message()));
  }
  io::write_file_atomic(out.run_dir / "config.snapshot", config_snapshot(cfg));
  io::write_file_atomic(out.run_dir / "scores.csv", kScoresHeader);
  io::write_file_atomic(out.run_dir / "transfers.csv", kTransfersHeader);
  io::write_file_atomic(out.run_dir / "reproduce.csv", kReproduceHeader);

  Loop loop(out.run_dir, cfg, generator, options);
  out.state = init_population(generator, cfg, loop.morph());
  loop.start(out.state);
  loop.until_done(out.state);
  return out;
}

RunOutcome resume(const fs::path& checkpoint_or_dir, gen::EnvGenerator& generator, const RunOptions& options) {
  const fs::path ckpt = resolve_checkpoint(checkpoint_or_dir);
  RunOutcome out;
  out.run_dir = run_dir_of_checkpoint(ckpt);
  RunConfig cfg = load_run_config(out.run_dir / "config.snapshot");
  out.state = load_checkpoint(ckpt);
  if (out.state.config_hash != config_hash(cfg))
    throw ConfigError("checkpoint " + ckpt.string() + " does not belong to this run's config.snapshot");
  check_generator(out.state, generator);
  cfg.out_dir = out.run_dir.string();
  if (options.workers >= 0) cfg.poet.workers = options.workers;
  const int k = out.state.iteration;

  // Discard everything written after the checkpoint.
  std::set<std::string> referenced;
  for (const auto& e : fs::directory_iterator(out.run_dir / "checkpoints")) {
    const int it = checkpoint_iteration(e.path());
    if (it > k) {
      fs::remove(e.path());
    } else if (it >= 0) {
      const json doc = json::parse(io::read_file(e.path()));
      for (const auto& n : doc.at("niches")) referenced.insert(n.at("agent").get<std::string>() + ".bin");
    }
  }
  for (const auto& e : fs::directory_iterator(out.run_dir / "checkpoints" / "agents"))
    if (!referenced.count(e.path().filename().string())) fs::remove(e.path());
  std::set<std::string> ids;
  for (const auto& n : out.state.niches) ids.insert(n.env.lineage_id);
  for (const char* sub : {"niche_history", "training_stats"}) {
    const fs::path dir = out.run_dir / sub;
    fs::create_directories(dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!ids.count(e.path().stem().string()))
        fs::remove(e.path());
      else if (e.path().extension() == ".csv")
        truncate_csv(e.path(), k);
    }
  }
  for (const char* f : {"scores.csv", "transfers.csv", "reproduce.csv"}) truncate_csv(out.run_dir / f, k);
  for (const auto& n : out.state.niches) write_niche_history(out.run_dir, n);

  if (k >= cfg.poet.iterations) {
    out.already_finished = true;
    if (options.log) *options.log << "run already finished at iteration " << k << "\n";
    return out;
  }
  Loop loop(out.run_dir, cfg, generator, options);
  loop.until_done(out.state);
  return out;
}

}  // namespace llmpoet::poet
