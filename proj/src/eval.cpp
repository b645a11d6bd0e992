#include "llmpoet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "llmpoet/io.hpp"
#include "llmpoet/parallel.hpp"
#include "llmpoet/trainer.hpp"

namespace llmpoet::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

double score_difference(double poet_score, std::span<const double> ppo_scores) {
  if (ppo_scores.empty()) throw EvalError(EvalErrc::BadInput, "score_difference needs at least one PPO score");
  return poet_score - *std::max_element(ppo_scores.begin(), ppo_scores.end());
}

double skewness(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 3) throw EvalError(EvalErrc::DegenerateSample, "skewness needs at least 3 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  // Relative to the sample's magnitude, so rounding noise on a constant
  // sample does not count as spread.
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (!(m2 > 1e-28 * std::max(1.0, scale * scale)))
    throw EvalError(EvalErrc::DegenerateSample, "skewness of a zero-variance sample");
  return m3 / std::pow(m2, 1.5);
}

Histogram histogram(std::span<const double> x, double w) {
  if (!(w > 0)) throw EvalError(EvalErrc::BadInput, "bin width must be > 0");
  Histogram h;
  if (x.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double k0 = std::floor(*lo_it / w);
  const double k1 = std::floor(*hi_it / w);
  const auto bins = static_cast<std::size_t>(k1 - k0) + 1;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back((k0 + static_cast<double>(i)) * w);
  for (double v : x) {
    auto b = static_cast<std::size_t>(std::floor(v / w) - k0);
    h.counts[std::min(b, bins - 1)] += 1;
  }
  return h;
}

std::vector<NicheSummary> load_niche_history(const fs::path& run_dir) {
  const fs::path dir = run_dir / "niche_history";
  std::vector<fs::path> files;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
  if (files.empty()) throw EvalError(EvalErrc::EmptyHistory, "no niche history in " + run_dir.string());
  std::sort(files.begin(), files.end());
  std::vector<NicheSummary> out;
  for (const auto& f : files) {
    NicheSummary n;
    try {
      const json meta = json::parse(io::read_file(f));
      fs::path grid_file = f;
      grid_file.replace_extension(".txt");
      n.env = grid::env_from_metadata(meta, grid::read_grid_file(grid_file.string()));
      const auto& best = meta.at("best_eval_score");
      n.poet_score = best.is_null() ? kNegInf : best.get<double>();
      n.updates_trained = meta.at("updates_trained").get<long>();
    } catch (const json::exception& e) {
      throw EvalError(EvalErrc::BadInput, fmt::format("{}: {}", f.string(), e.what()));
    }
    out.push_back(std::move(n));
  }
  return out;
}

BaselineFn ppo_only_baseline(const RunConfig& cfg) {
  auto morph = std::make_shared<const sim::RobotMorphology>(load_morphology(cfg.poet));
  return [cfg, morph](const NicheSummary& n, int repeat) {
    ppo::PpoConfig pc = cfg.ppo;
    pc.updates_per_poet_iter = static_cast<int>(n.updates_trained);
    Rng init = make_rng(cfg.seed, "baseline:init", fnv1a(n.env.lineage_id), static_cast<std::uint64_t>(repeat));
    Rng rng = make_rng(cfg.seed, "baseline", fnv1a(n.env.lineage_id), static_cast<std::uint64_t>(repeat));
    const auto fresh = ppo::fresh_policy(*morph, pc, init);
    return ppo::train_pair(n.env.grid, *morph, fresh, pc, rng, cfg.sim).best_eval_score;
  };
}

std::vector<EvalRecord> evaluate_niches(const std::vector<NicheSummary>& niches, int repeats,
                                        const BaselineFn& baseline, int workers) {
  if (repeats < 1) throw EvalError(EvalErrc::BadInput, "repeats must be >= 1");
  const auto R = static_cast<std::size_t>(repeats);
  std::vector<EvalRecord> records(niches.size());
  std::vector<std::size_t> jobs;
  for (std::size_t i = 0; i < niches.size(); ++i) {
    auto& r = records[i];
    const auto& n = niches[i];
    r.env_id = n.env.lineage_id;
    r.prompt = n.env.prompt;
    r.generator = std::string(grid::generator_name(n.env.generator));
    r.poet_score = n.poet_score;
    r.budget_updates = n.updates_trained;
    r.ppo_scores.assign(R, kNegInf);
    if (n.updates_trained <= 0 || !std::isfinite(n.poet_score)) {
      r.flags.push_back("untrained");
      r.excluded = true;
      continue;
    }
    for (std::size_t k = 0; k < R; ++k) jobs.push_back(i * R + k);
  }

  std::vector<std::string> errors(niches.size() * R);
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const std::size_t i = jobs[j] / R, k = jobs[j] % R;
    try {
      const double s = baseline(niches[i], static_cast<int>(k));
      if (!std::isfinite(s)) throw Error("non-finite baseline score");
      records[i].ppo_scores[k] = s;
    } catch (const Error& e) {
      errors[jobs[j]] = e.what();
    }
  });

  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (r.excluded) {
      r.ppo_best = kNegInf;
      r.diff = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    int failed = 0;
    for (std::size_t k = 0; k < R; ++k)
      if (!std::isfinite(r.ppo_scores[k])) {
        r.flags.push_back(fmt::format("repeat_{}_failed", k + 1));
        ++failed;
      }
    r.ppo_best = *std::max_element(r.ppo_scores.begin(), r.ppo_scores.end());
    if (failed == repeats) {
      r.flags.push_back("all_repeats_failed");
      r.excluded = true;
      r.diff = std::numeric_limits<double>::quiet_NaN();
    } else {
      r.diff = score_difference(r.poet_score, r.ppo_scores);
    }
  }
  return records;
}

EvalSummary summarize(const std::vector<EvalRecord>& records, double bin_width) {
  EvalSummary s;
  s.bin_width = bin_width;
  std::vector<double> d;
  for (const auto& r : records) {
    if (r.excluded)
      ++s.excluded;
    else
      d.push_back(r.diff);
  }
  if (d.empty()) throw EvalError(EvalErrc::NoRecords, "every record is excluded");
  s.count = static_cast<int>(d.size());
  const auto n = static_cast<double>(d.size());
  for (double v : d) s.mean += v;
  s.mean /= n;
  if (d.size() >= 2) {
    double ss = 0.0;
    for (double v : d) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1));
  }
  try {
    s.skewness = skewness(d);
  } catch (const EvalError& e) {
    if (e.code() != EvalErrc::DegenerateSample) throw;
  }
  s.histogram = histogram(d, bin_width);
  return s;
}

json to_json(const EvalSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"count", s.count},
          {"mean", s.mean},
          {"std", opt(s.std)},
          {"skewness", opt(s.skewness)},
          {"bin_width", s.bin_width},
          {"histogram", {{"edges", s.histogram.edges}, {"counts", s.histogram.counts}}},
          {"excluded", s.excluded}};
}

void write_report(const fs::path& out_dir, const std::vector<EvalRecord>& records, const EvalSummary& summary) {
  fs::create_directories(out_dir);
  const std::size_t R = records.empty() ? 0 : records.front().ppo_scores.size();
  using io::format_double;

  std::string csv = "env_id,prompt,generator,poet_score";
  for (std::size_t k = 1; k <= R; ++k) csv += fmt::format(",ppo_{}", k);
  csv += ",ppo_best,diff,budget_updates,flags\n";
  for (const auto& r : records) {
    csv += fmt::format("{},{},{},{}", csv_field(r.env_id), csv_field(r.prompt), r.generator, format_double(r.poet_score));
    for (double s : r.ppo_scores) csv += "," + format_double(s);
    csv += fmt::format(",{},{},{},{}\n", format_double(r.ppo_best), r.excluded ? "" : format_double(r.diff),
                       r.budget_updates, join(r.flags, ';'));
  }
  io::write_file_atomic(out_dir / "eval_report.csv", csv);
  io::write_file_atomic(out_dir / "eval_summary.json", to_json(summary).dump(2) + "\n");

  std::string plot = "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < summary.histogram.counts.size(); ++i)
    plot += fmt::format("{},{},{}\n", format_double(summary.histogram.edges[i]),
                        format_double(summary.histogram.edges[i + 1]), summary.histogram.counts[i]);
  io::write_file_atomic(out_dir / "eval_histogram.csv", plot);
}

EvalOutcome run_eval(const fs::path& run_dir, const EvalOptions& options, const BaselineFn& baseline) {
  if (options.repeats < 1) throw ConfigError("repeats must be >= 1");
  if (!(options.bin_width > 0)) throw ConfigError("bin width must be > 0");
  RunConfig cfg = load_run_config(run_dir / "config.snapshot");
  if (options.seed) cfg.seed = *options.seed;
  const auto niches = load_niche_history(run_dir);
  EvalOutcome out;
  out.records = evaluate_niches(niches, options.repeats, baseline ? baseline : ppo_only_baseline(cfg),
                                options.workers);
  out.summary = summarize(out.records, options.bin_width);
  write_report(options.out_dir.empty() ? run_dir : options.out_dir, out.records, out.summary);
  return out;
}

}  // namespace llmpoet::eval
