// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Segment-based detection metrics.
 *
 * Reference and predicted events are reduced to per-class activity over
 * fixed segments (50 ms by default); a segment is active for a class when
 * some event of that class overlaps it with positive length. Confusion
 * counts are pooled over tracks before any ratio is taken.
 *
 * Conventions: any ratio with a zero denominator is 0. The macro average
 * runs over the classes that occur at all (TP + FP + FN > 0); a class that
 * is absent from both reference and prediction has no defined F and is not
 * averaged in.
 */
#ifndef STDET_EVALUATION_HPP_
#define STDET_EVALUATION_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdet/annotation.hpp"

namespace stdet {

inline constexpr double kSegmentLength = 0.05;

class EvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Binary [classes x segments] matrix.
class ActivityMatrix {
 public:
  ActivityMatrix() = default;
  ActivityMatrix(std::vector<Technique> class_order, std::size_t num_segments,
                 double segment_len_s);

  std::size_t num_classes() const noexcept { return class_order_.size(); }
  std::size_t num_segments() const noexcept { return num_segments_; }
  double segment_len_s() const noexcept { return segment_len_s_; }
  const std::vector<Technique> &class_order() const noexcept {
    return class_order_;
  }

  bool at(std::size_t c, std::size_t s) const {
    return values_[c * num_segments_ + s] != 0;
  }
  void set(std::size_t c, std::size_t s, bool v) {
    values_[c * num_segments_ + s] = v ? 1 : 0;
  }

  bool operator==(const ActivityMatrix &) const = default;

 private:
  std::vector<Technique> class_order_;
  std::size_t num_segments_ = 0;
  double segment_len_s_ = kSegmentLength;
  std::vector<std::uint8_t> values_;
};

/// ceil(duration / segment_len) segments.
std::size_t segment_count(double duration_s, double segment_len_s);

ActivityMatrix segment_activity(std::span<const TechniqueEvent> events,
                                double duration_s, double segment_len_s,
                                const std::vector<Technique> &class_order);

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  bool operator==(const ClassCounts &) const = default;
};

struct SegmentScores {
  std::vector<Technique> class_order;
  std::vector<ClassCounts> counts;  ///< parallel to class_order
  double segment_len_s = kSegmentLength;

  /// Adds another set of counts over the same classes.
  SegmentScores &operator+=(const SegmentScores &other);
  bool operator==(const SegmentScores &) const = default;
};

SegmentScores empty_scores(const std::vector<Technique> &class_order,
                           double segment_len_s = kSegmentLength);

SegmentScores score_segments(const ActivityMatrix &ref,
                             const ActivityMatrix &pred);

/// segment_activity on both event lists, then score_segments.
SegmentScores score_track(std::span<const TechniqueEvent> ref,
                          std::span<const TechniqueEvent> pred,
                          double duration_s,
                          const std::vector<Technique> &class_order,
                          double segment_len_s = kSegmentLength);

struct ClassMetrics {
  Technique technique = Technique::unknown;
  ClassCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

struct MetricsReport {
  double macro_f = 0.0;
  double micro_f = 0.0;
  double micro_p = 0.0;
  double micro_r = 0.0;
  std::size_t active_classes = 0;
  std::vector<ClassMetrics> classes;  ///< in class order
};

MetricsReport aggregate(const SegmentScores &scores);

/// One row per class: class,tp,fp,fn,precision,recall,f
std::string classwise_report(const MetricsReport &report);

nlohmann::ordered_json to_json(const MetricsReport &report);
/// Header plus one data row: macro_f,micro_f,precision,recall
std::string metrics_csv(const MetricsReport &report);
std::string metrics_text(const MetricsReport &report);

}  // namespace stdet

#endif  // STDET_EVALUATION_HPP_
