// SPDX-License-Identifier: Apache-2.0
#include "stdet/stats.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace stdet {

namespace {

std::size_t vocab_index(Technique t) { return static_cast<std::size_t>(t); }

std::string fixed(double v, int precision = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

}  // namespace

LetterValues letter_values(std::span<const double> sample) {
  if (sample.empty())
    throw StatsError("letter values of an empty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  const auto lower = [&](std::size_t depth) { return x[depth - 1]; };
  const auto upper = [&](std::size_t depth) { return x[n - depth]; };
  const std::size_t d1 = (n + 1) / 2;
  const std::size_t d2 = (d1 + 1) / 2;
  const std::size_t d3 = (d2 + 1) / 2;

  LetterValues lv;
  lv.n = n;
  lv.min = x.front();
  lv.max = x.back();
  lv.median = lower(d1);
  lv.lower_fourth = lower(d2);
  lv.upper_fourth = upper(d2);
  lv.lower_eighth = lower(d3);
  lv.upper_eighth = upper(d3);
  return lv;
}

double union_length(std::span<const TechniqueEvent> events, double duration_s) {
  std::vector<std::pair<double, double>> iv;
  iv.reserve(events.size());
  for (const auto &e : events) {
    const double a = std::max(e.onset_s, 0.0);
    const double b = std::min(e.offset_s, duration_s);
    if (b > a)
      iv.emplace_back(a, b);
  }
  std::sort(iv.begin(), iv.end());
  double total = 0.0;
  double cur_a = 0.0, cur_b = 0.0;
  bool open = false;
  for (const auto &[a, b] : iv) {
    if (!open) {
      cur_a = a;
      cur_b = b;
      open = true;
    } else if (a <= cur_b) {
      cur_b = std::max(cur_b, b);
    } else {
      total += cur_b - cur_a;
      cur_a = a;
      cur_b = b;
    }
  }
  if (open)
    total += cur_b - cur_a;
  return total;
}

SingerDistribution per_singer_distribution(const Corpus &corpus) {
  SingerDistribution dist;
  std::map<std::string, std::size_t> row_of;
  for (const auto &t : corpus.tracks) {
    auto [it, inserted] = row_of.try_emplace(t.singer_id, dist.singers.size());
    if (inserted) {
      dist.singers.push_back(t.singer_id);
      dist.counts.emplace_back(kVocabularySize, 0);
    }
    for (const auto &e : t.events)
      if (e.technique != Technique::unknown)
        ++dist.counts[it->second][vocab_index(e.technique)];
  }
  return dist;
}

LetterValues duration_quantiles(const Corpus &corpus, Technique technique) {
  std::vector<double> durations;
  for (const auto &t : corpus.tracks)
    for (const auto &e : t.events)
      if (e.technique == technique)
        durations.push_back(e.duration_s());
  if (durations.empty())
    throw StatsError("no events of class " +
                     std::string(technique_name(technique)));
  return letter_values(durations);
}

StatsReport corpus_stats(const Corpus &corpus) {
  if (corpus.tracks.empty())
    throw StatsError("statistics of an empty corpus");
  StatsReport r;
  std::map<Technique, std::vector<double>> durations;
  for (Technique t : vocabulary()) {
    r.counts[t] = 0;
    r.total_duration_s[t] = 0.0;
  }
  double coverage_sum = 0.0;
  for (const auto &track : corpus.tracks) {
    r.totals.total_length_s += track.duration_s;
    for (const auto &e : track.events) {
      if (e.technique == Technique::unknown) {
        ++r.unknown_count;
        continue;
      }
      ++r.counts[e.technique];
      r.total_duration_s[e.technique] += e.duration_s();
      durations[e.technique].push_back(e.duration_s());
    }
    // Coverage counts overlapping regions once, across all named classes.
    std::vector<TechniqueEvent> named;
    std::copy_if(track.events.begin(), track.events.end(),
                 std::back_inserter(named), [](const TechniqueEvent &e) {
                   return e.technique != Technique::unknown;
                 });
    const double cov = union_length(named, track.duration_s) / track.duration_s;
    r.coverage[track.track_id] = std::clamp(cov, 0.0, 1.0);
    coverage_sum += r.coverage[track.track_id];
    if (track.year)
      r.years[track.track_id] = *track.year;
  }
  for (auto &[t, d] : durations)
    r.duration_quantiles[t] = letter_values(d);

  const auto dist = per_singer_distribution(corpus);
  r.singers = dist.singers;
  r.per_singer = dist.counts;

  std::size_t total_count = 0;
  double total_duration = 0.0;
  for (Technique t : vocabulary()) {
    total_count += r.counts[t];
    total_duration += r.total_duration_s[t];
  }
  r.totals.num_tracks = corpus.tracks.size();
  r.totals.mean_track_length_s =
      r.totals.total_length_s / static_cast<double>(corpus.tracks.size());
  r.totals.mean_technique_length_s =
      total_count ? total_duration / static_cast<double>(total_count) : 0.0;
  r.totals.mean_coverage =
      coverage_sum / static_cast<double>(corpus.tracks.size());
  return r;
}

std::optional<ReportFormat> parse_report_format(std::string_view name) {
  if (name == "json")
    return ReportFormat::json;
  if (name == "csv")
    return ReportFormat::csv;
  if (name == "text")
    return ReportFormat::text;
  return std::nullopt;
}

namespace {

nlohmann::ordered_json letter_json(const LetterValues &lv) {
  nlohmann::ordered_json j;
  j["n"] = lv.n;
  j["min"] = lv.min;
  j["lower_eighth"] = lv.lower_eighth;
  j["lower_fourth"] = lv.lower_fourth;
  j["median"] = lv.median;
  j["upper_fourth"] = lv.upper_fourth;
  j["upper_eighth"] = lv.upper_eighth;
  j["max"] = lv.max;
  return j;
}

std::string render_json(const StatsReport &r) {
  nlohmann::ordered_json j;
  auto &totals = j["totals"];
  totals["num_tracks"] = r.totals.num_tracks;
  totals["total_length_s"] = r.totals.total_length_s;
  totals["mean_track_length_s"] = r.totals.mean_track_length_s;
  totals["mean_technique_length_s"] = r.totals.mean_technique_length_s;
  totals["mean_coverage"] = r.totals.mean_coverage;
  j["unknown_count"] = r.unknown_count;
  auto &classes = j["classes"];
  classes = nlohmann::ordered_json::object();
  for (Technique t : vocabulary()) {
    nlohmann::ordered_json c;
    c["category"] = category_name(technique_category(t));
    c["count"] = r.counts.count(t) ? r.counts.at(t) : 0;
    c["total_duration_s"] =
        r.total_duration_s.count(t) ? r.total_duration_s.at(t) : 0.0;
    const auto it = r.duration_quantiles.find(t);
    c["duration_quantiles"] = it == r.duration_quantiles.end()
                                  ? nlohmann::ordered_json(nullptr)
                                  : letter_json(it->second);
    classes[std::string(technique_name(t))] = std::move(c);
  }
  auto &singers = j["per_singer"];
  singers = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < r.singers.size(); ++s) {
    nlohmann::ordered_json row;
    row["singer_id"] = r.singers[s];
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (Technique t : vocabulary())
      counts[std::string(technique_name(t))] =
          r.per_singer[s][static_cast<std::size_t>(t)];
    row["counts"] = std::move(counts);
    singers.push_back(std::move(row));
  }
  auto &cov = j["coverage"];
  cov = nlohmann::ordered_json::object();
  for (const auto &[id, c] : r.coverage)
    cov[id] = c;
  auto &years = j["years"];
  years = nlohmann::ordered_json::object();
  for (const auto &[id, y] : r.years)
    years[id] = y;
  return j.dump(2) + "\n";
}

std::string render_csv(const StatsReport &r) {
  std::ostringstream ss;
  ss << "class,category,count,total_duration_s,min_s,lower_eighth_s,"
        "lower_fourth_s,median_s,upper_fourth_s,upper_eighth_s,max_s\n";
  for (Technique t : vocabulary()) {
    ss << technique_name(t) << ',' << category_name(technique_category(t))
       << ',' << (r.counts.count(t) ? r.counts.at(t) : 0) << ','
       << fixed(r.total_duration_s.count(t) ? r.total_duration_s.at(t) : 0.0);
    const auto it = r.duration_quantiles.find(t);
    if (it == r.duration_quantiles.end()) {
      ss << ",,,,,,,";
    } else {
      const auto &lv = it->second;
      for (double v : {lv.min, lv.lower_eighth, lv.lower_fourth, lv.median,
                       lv.upper_fourth, lv.upper_eighth, lv.max})
        ss << ',' << fixed(v);
    }
    ss << '\n';
  }
  return ss.str();
}

std::string render_text(const StatsReport &r) {
  std::ostringstream ss;
  ss << "tracks: " << r.totals.num_tracks
     << "  total length: " << fixed(r.totals.total_length_s, 2) << " s"
     << "  mean track length: " << fixed(r.totals.mean_track_length_s, 2)
     << " s\n";
  ss << "mean technique length: " << fixed(r.totals.mean_technique_length_s, 3)
     << " s  mean coverage: " << fixed(100.0 * r.totals.mean_coverage, 1)
     << "%  unknown events: " << r.unknown_count << "\n\n";
  ss << std::left << std::setw(14) << "technique" << std::setw(8) << "type"
     << std::right << std::setw(8) << "count" << std::setw(12) << "total s"
     << std::setw(10) << "median" << std::setw(10) << "q1" << std::setw(10)
     << "q3" << '\n';
  for (Technique t : vocabulary()) {
    ss << std::left << std::setw(14) << technique_name(t) << std::setw(8)
       << category_name(technique_category(t)) << std::right << std::setw(8)
       << (r.counts.count(t) ? r.counts.at(t) : 0) << std::setw(12)
       << fixed(r.total_duration_s.count(t) ? r.total_duration_s.at(t) : 0.0, 2);
    const auto it = r.duration_quantiles.find(t);
    if (it != r.duration_quantiles.end())
      ss << std::setw(10) << fixed(it->second.median, 3) << std::setw(10)
         << fixed(it->second.lower_fourth, 3) << std::setw(10)
         << fixed(it->second.upper_fourth, 3);
    ss << '\n';
  }
  ss << "\ncoverage per track\n";
  for (const auto &[id, c] : r.coverage)
    ss << "  " << std::left << std::setw(24) << id << std::right
       << fixed(100.0 * c, 1) << "%\n";
  return ss.str();
}

}  // namespace

std::string render_report(const StatsReport &report, ReportFormat format) {
  switch (format) {
  case ReportFormat::json:
    return render_json(report);
  case ReportFormat::csv:
    return render_csv(report);
  case ReportFormat::text:
    return render_text(report);
  }
  throw StatsError("unknown report format");
}

}  // namespace stdet
