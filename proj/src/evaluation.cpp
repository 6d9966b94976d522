// SPDX-License-Identifier: Apache-2.0
#include "stdet/evaluation.hpp"

#include <cmath>
#include <cstdio>

namespace stdet {

ActivityMatrix::ActivityMatrix(std::vector<Technique> class_order,
                               std::size_t num_segments, double segment_len_s)
    : class_order_(std::move(class_order)),
      num_segments_(num_segments),
      segment_len_s_(segment_len_s),
      values_(class_order_.size() * num_segments, 0) {}

std::size_t segment_count(double duration_s, double segment_len_s) {
  if (!(segment_len_s > 0.0))
    throw EvaluationError("segment length must be positive");
  if (!(duration_s > 0.0))
    return 0;
  // Smallest n with n * len >= duration, settled on the exact products.
  auto n = static_cast<std::size_t>(std::ceil(duration_s / segment_len_s));
  while (n > 0 && static_cast<double>(n - 1) * segment_len_s >= duration_s)
    --n;
  while (static_cast<double>(n) * segment_len_s < duration_s)
    ++n;
  return n;
}

ActivityMatrix segment_activity(std::span<const TechniqueEvent> events,
                                double duration_s, double segment_len_s,
                                const std::vector<Technique> &class_order) {
  const std::size_t n = segment_count(duration_s, segment_len_s);
  ActivityMatrix m(class_order, n, segment_len_s);
  for (const auto &e : events) {
    std::size_t row = class_order.size();
    for (std::size_t c = 0; c < class_order.size(); ++c)
      if (class_order[c] == e.technique)
        row = c;
    if (row == class_order.size())
      continue;
    const auto [first, last] =
        overlapping_frames(e.onset_s, e.offset_s, segment_len_s, n);
    for (std::size_t s = first; s < last; ++s)
      m.set(row, s, true);
  }
  return m;
}

SegmentScores &SegmentScores::operator+=(const SegmentScores &other) {
  if (other.class_order != class_order)
    throw EvaluationError("cannot pool scores over different class sets");
  for (std::size_t c = 0; c < counts.size(); ++c) {
    counts[c].tp += other.counts[c].tp;
    counts[c].fp += other.counts[c].fp;
    counts[c].fn += other.counts[c].fn;
  }
  return *this;
}

SegmentScores empty_scores(const std::vector<Technique> &class_order,
                           double segment_len_s) {
  return {class_order, std::vector<ClassCounts>(class_order.size()),
          segment_len_s};
}

SegmentScores score_segments(const ActivityMatrix &ref,
                             const ActivityMatrix &pred) {
  if (ref.class_order() != pred.class_order() ||
      ref.num_segments() != pred.num_segments())
    throw EvaluationError(
        "reference and prediction activity differ in shape: " +
        std::to_string(ref.num_classes()) + "x" +
        std::to_string(ref.num_segments()) + " vs " +
        std::to_string(pred.num_classes()) + "x" +
        std::to_string(pred.num_segments()));
  auto scores = empty_scores(ref.class_order(), ref.segment_len_s());
  for (std::size_t c = 0; c < ref.num_classes(); ++c) {
    auto &k = scores.counts[c];
    for (std::size_t s = 0; s < ref.num_segments(); ++s) {
      const bool r = ref.at(c, s), p = pred.at(c, s);
      k.tp += r && p;
      k.fp += !r && p;
      k.fn += r && !p;
    }
  }
  return scores;
}

SegmentScores score_track(std::span<const TechniqueEvent> ref,
                          std::span<const TechniqueEvent> pred,
                          double duration_s,
                          const std::vector<Technique> &class_order,
                          double segment_len_s) {
  return score_segments(
      segment_activity(ref, duration_s, segment_len_s, class_order),
      segment_activity(pred, duration_s, segment_len_s, class_order));
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

MetricsReport aggregate(const SegmentScores &scores) {
  MetricsReport r;
  ClassCounts total;
  double f_sum = 0.0;
  for (std::size_t c = 0; c < scores.class_order.size(); ++c) {
    const auto &k = scores.counts[c];
    ClassMetrics m{scores.class_order[c], k, ratio(k.tp, k.tp + k.fp),
                   ratio(k.tp, k.tp + k.fn), ratio(2 * k.tp, 2 * k.tp + k.fp + k.fn)};
    if (k.tp + k.fp + k.fn > 0) {
      ++r.active_classes;
      f_sum += m.f;
    }
    total.tp += k.tp;
    total.fp += k.fp;
    total.fn += k.fn;
    r.classes.push_back(m);
  }
  r.macro_f = r.active_classes ? f_sum / static_cast<double>(r.active_classes) : 0.0;
  r.micro_p = ratio(total.tp, total.tp + total.fp);
  r.micro_r = ratio(total.tp, total.tp + total.fn);
  r.micro_f = ratio(2 * total.tp, 2 * total.tp + total.fp + total.fn);
  return r;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string classwise_report(const MetricsReport &report) {
  std::string out = "class,tp,fp,fn,precision,recall,f\n";
  for (const auto &m : report.classes) {
    out += std::string(technique_name(m.technique)) + "," +
           std::to_string(m.counts.tp) + "," + std::to_string(m.counts.fp) +
           "," + std::to_string(m.counts.fn) + "," + fixed(m.precision) + "," +
           fixed(m.recall) + "," + fixed(m.f) + "\n";
  }
  return out;
}

nlohmann::ordered_json to_json(const MetricsReport &report) {
  nlohmann::ordered_json j;
  j["macro_f"] = report.macro_f;
  j["micro_f"] = report.micro_f;
  j["precision"] = report.micro_p;
  j["recall"] = report.micro_r;
  j["active_classes"] = report.active_classes;
  auto classes = nlohmann::ordered_json::array();
  for (const auto &m : report.classes) {
    nlohmann::ordered_json c;
    c["class"] = std::string(technique_name(m.technique));
    c["tp"] = m.counts.tp;
    c["fp"] = m.counts.fp;
    c["fn"] = m.counts.fn;
    c["precision"] = m.precision;
    c["recall"] = m.recall;
    c["f"] = m.f;
    classes.push_back(c);
  }
  j["classes"] = classes;
  return j;
}

std::string metrics_csv(const MetricsReport &report) {
  return "macro_f,micro_f,precision,recall\n" + fixed(report.macro_f) + "," +
         fixed(report.micro_f) + "," + fixed(report.micro_p) + "," +
         fixed(report.micro_r) + "\n";
}

std::string metrics_text(const MetricsReport &report) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line,
                "Macro-F %.4f  Micro-F %.4f  P %.4f  R %.4f  (%zu active classes)\n",
                report.macro_f, report.micro_f, report.micro_p, report.micro_r,
                report.active_classes);
  out += line;
  std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s %8s %8s\n", "class",
                "TP", "FP", "FN", "P", "R", "F");
  out += line;
  for (const auto &m : report.classes) {
    std::snprintf(line, sizeof line, "%-14s %8zu %8zu %8zu %8.4f %8.4f %8.4f\n",
                  std::string(technique_name(m.technique)).c_str(), m.counts.tp,
                  m.counts.fp, m.counts.fn, m.precision, m.recall, m.f);
    out += line;
  }
  return out;
}

}  // namespace stdet
