#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/config.hpp"
#include "llmpoet/grid.hpp"

namespace llmpoet::eval {

enum class EvalErrc { DegenerateSample, EmptyHistory, NoRecords, BadInput };

class EvalError : public Error {
 public:
  EvalError(EvalErrc code, std::string message) : Error(std::move(message)), code_(code) {}
  EvalErrc code() const { return code_; }

 private:
  EvalErrc code_;
};

/// poet_score - max(ppo_scores). Throws EvalError{BadInput} on an empty list.
double score_difference(double poet_score, std::span<const double> ppo_scores);

/// Fisher-Pearson g1 = m3 / m2^1.5 with biased central moments. Throws
/// EvalError{DegenerateSample} for n < 3 or zero variance.
double skewness(std::span<const double> samples);

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<int> counts;
};

/// Bins aligned to multiples of `bin_width`; the last bin is closed.
Histogram histogram(std::span<const double> samples, double bin_width);

/// One environment of a finished run, read back from its niche history.
struct NicheSummary {
  grid::EnvRecord env;
  double poet_score = 0.0;  // best deterministic score of any occupant
  long updates_trained = 0;
};

/// Every niche_history/env_*.json with its grid. Throws EvalError{EmptyHistory}
/// when there is none.
std::vector<NicheSummary> load_niche_history(const std::filesystem::path& run_dir);

struct EvalRecord {
  std::string env_id;
  std::string prompt;
  std::string generator;
  double poet_score = 0.0;
  std::vector<double> ppo_scores;  // -inf marks a failed repeat
  double ppo_best = 0.0;
  double diff = 0.0;
  long budget_updates = 0;
  std::vector<std::string> flags;
  bool excluded = false;
};

/// Score of one from-scratch repeat; throwing llmpoet::Error records a
/// failed repeat.
using BaselineFn = std::function<double(const NicheSummary& niche, int repeat)>;

/// Fresh agents trained with train_pair for the niche's whole in-run
/// update count; the deterministic best score counts. Repeat r of a niche
/// draws from stream ("baseline", niche id, r).
BaselineFn ppo_only_baseline(const RunConfig& cfg);

/// Scores `repeats` baselines per niche in parallel over (niche, repeat).
/// Untrained niches and niches whose repeats all failed are flagged and
/// excluded.
std::vector<EvalRecord> evaluate_niches(const std::vector<NicheSummary>& niches, int repeats,
                                        const BaselineFn& baseline, int workers = 1);

struct EvalSummary {
  int count = 0;
  double mean = 0.0;
  std::optional<double> std;       // sample std, n - 1 denominator; null for n < 2
  std::optional<double> skewness;  // null when degenerate
  double bin_width = 0.25;
  Histogram histogram;
  int excluded = 0;
};

/// Statistics over the diffs of unexcluded records. Throws
/// EvalError{NoRecords} when every record is excluded.
EvalSummary summarize(const std::vector<EvalRecord>& records, double bin_width = 0.25);

nlohmann::json to_json(const EvalSummary& s);

/// eval_report.csv, eval_summary.json and eval_histogram.csv in `out_dir`.
void write_report(const std::filesystem::path& out_dir, const std::vector<EvalRecord>& records,
                  const EvalSummary& summary);

struct EvalOptions {
  int repeats = 5;
  double bin_width = 0.25;
  int workers = 0;
  std::optional<std::uint64_t> seed;  // defaults to the run's seed
  std::filesystem::path out_dir;      // defaults to the run directory
};

struct EvalOutcome {
  std::vector<EvalRecord> records;
  EvalSummary summary;
};

/// The whole protocol over a finished run directory. `baseline` replaces the
/// PPO-only trainer (used by tests).
EvalOutcome run_eval(const std::filesystem::path& run_dir, const EvalOptions& options = {},
                     const BaselineFn& baseline = {});

}  // namespace llmpoet::eval
