// SPDX-License-Identifier: Apache-2.0
/**
 * @file   stats.hpp
 * @brief  Descriptive statistics over an annotated corpus: per-technique
 *         counts and durations, letter-value duration summaries, per-singer
 *         occurrence counts and technique coverage per track.
 *
 * `unknown` events never enter the per-class tallies; they are counted in
 * StatsReport::unknown_count only.
 */
#ifndef STDET_STATS_HPP_
#define STDET_STATS_HPP_

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stdet/annotation.hpp"

namespace stdet {

/// Nested order statistics. Depth rule: d1 = floor((n+1)/2),
/// d_{k+1} = floor((d_k+1)/2); lower value x[d-1], upper value x[n-d]
/// of the sorted sample (1-based depth, no interpolation).
struct LetterValues {
  std::size_t n = 0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double lower_fourth = 0.0;
  double upper_fourth = 0.0;
  double lower_eighth = 0.0;
  double upper_eighth = 0.0;

  bool operator==(const LetterValues &) const = default;
};

LetterValues letter_values(std::span<const double> sample);

struct CorpusTotals {
  std::size_t num_tracks = 0;
  double total_length_s = 0.0;
  double mean_track_length_s = 0.0;
  double mean_technique_length_s = 0.0;
  double mean_coverage = 0.0;
};

struct StatsReport {
  std::map<Technique, std::size_t> counts;
  std::map<Technique, double> total_duration_s;
  std::map<Technique, LetterValues> duration_quantiles;
  std::vector<std::string> singers;
  /// [singers x vocabulary()] event counts, singers in first-appearance order.
  std::vector<std::vector<std::size_t>> per_singer;
  std::map<std::string, double> coverage;
  std::map<std::string, int> years;
  std::size_t unknown_count = 0;
  CorpusTotals totals;
};

class StatsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Length of the union of [onset, offset) intervals, clipped to
/// [0, duration_s].
double union_length(std::span<const TechniqueEvent> events, double duration_s);

StatsReport corpus_stats(const Corpus &corpus);
LetterValues duration_quantiles(const Corpus &corpus, Technique technique);

struct SingerDistribution {
  std::vector<std::string> singers;
  std::vector<std::vector<std::size_t>> counts;
};
SingerDistribution per_singer_distribution(const Corpus &corpus);

enum class ReportFormat { json, csv, text };
std::optional<ReportFormat> parse_report_format(std::string_view name);
std::string render_report(const StatsReport &report, ReportFormat format);

}  // namespace stdet

#endif  // STDET_STATS_HPP_
