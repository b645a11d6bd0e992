#pragma once

// Independent recomputation of the eval summary straight from
// eval_report.csv: its own CSV reader, one pass over the rows with
// streaming central-moment updates, no code shared with the library.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace llmpoet::testing {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

/// Rows as column-name -> text maps.
inline std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

struct OracleSummary {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sums of powers of deviations
  double m3 = 0.0;
  double max_diff_mismatch = 0.0;  // |diff - (poet - max ppo)| over rows

  double sample_std() const { return std::sqrt(m2 / static_cast<double>(n - 1)); }
  double g1() const {
    const double nn = static_cast<double>(n);
    return (m3 / nn) / std::pow(m2 / nn, 1.5);
  }
};

/// One pass; rows with an empty diff (excluded) are skipped. Diffs are
/// recomputed from poet_score and the ppo_* columns rather than read.
inline OracleSummary recompute_from_csv(const std::string& path) {
  OracleSummary s;
  for (const auto& row : read_csv(path)) {
    if (row.at("diff").empty()) continue;
    const double poet = std::strtod(row.at("poet_score").c_str(), nullptr);
    double best = -INFINITY;
    for (int k = 1; row.count("ppo_" + std::to_string(k)); ++k)
      best = std::fmax(best, std::strtod(row.at("ppo_" + std::to_string(k)).c_str(), nullptr));
    const double x = poet - best;
    s.max_diff_mismatch = std::fmax(s.max_diff_mismatch, std::fabs(x - std::strtod(row.at("diff").c_str(), nullptr)));
    // Streaming update of mean and the second and third central sums.
    const double n1 = static_cast<double>(s.n);
    s.n += 1;
    const double n = static_cast<double>(s.n);
    const double delta = x - s.mean;
    const double dn = delta / n;
    const double term = delta * dn * n1;
    s.mean += dn;
    s.m3 += term * dn * (n - 2) - 3 * dn * s.m2;
    s.m2 += term;
  }
  return s;
}

}  // namespace llmpoet::testing
