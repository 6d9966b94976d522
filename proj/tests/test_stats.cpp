// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "stdet/nn/rng.hpp"
#include "stdet/stats.hpp"
#include "test_util.hpp"

namespace stdet {
namespace {

using testing::ev;
using testing::make_track;

Corpus one_track(double duration, std::vector<TechniqueEvent> events) {
  Corpus c;
  c.tracks.push_back(make_track("t", "s", duration, std::move(events)));
  return c;
}

TEST(CorpusStats, TwoVibratoEvents) {
  const auto r = corpus_stats(
      one_track(10, {ev(Technique::vibrato, 0, 1), ev(Technique::vibrato, 2, 3)}));
  EXPECT_EQ(r.counts.at(Technique::vibrato), 2u);
  EXPECT_EQ(r.total_duration_s.at(Technique::vibrato), 2.0);
  EXPECT_EQ(r.coverage.at("t"), 0.2);
}

TEST(CorpusStats, NoEvents) {
  const auto r = corpus_stats(one_track(10, {}));
  EXPECT_EQ(r.coverage.at("t"), 0.0);
  for (const auto &[t, n] : r.counts)
    EXPECT_EQ(n, 0u);
}

TEST(CorpusStats, OverlapCountedOnce) {
  const auto r = corpus_stats(
      one_track(10, {ev(Technique::vibrato, 0, 2), ev(Technique::breathy, 1, 3)}));
  EXPECT_DOUBLE_EQ(r.coverage.at("t"), 0.3);
}

TEST(CorpusStats, EmptyCorpusIsAnError) {
  EXPECT_THROW(corpus_stats(Corpus{}), StatsError);
}

TEST(CorpusStats, HandFixture) {
  const auto r = corpus_stats(fixtures::stats_corpus());
  const fixtures::StatsExpectation x;
  for (Technique t : vocabulary()) {
    const auto it = x.counts.find(t);
    EXPECT_EQ(r.counts.at(t), it == x.counts.end() ? 0u : it->second) << technique_name(t);
    const auto d = x.total_duration_s.find(t);
    EXPECT_EQ(r.total_duration_s.at(t), d == x.total_duration_s.end() ? 0.0 : d->second);
  }
  EXPECT_EQ(r.unknown_count, x.unknown_count);
  EXPECT_EQ(r.coverage, x.coverage);
  EXPECT_EQ(r.totals.num_tracks, 3u);
  EXPECT_EQ(r.totals.total_length_s, x.total_length_s);
  EXPECT_EQ(r.totals.mean_track_length_s, x.mean_track_length_s);
  EXPECT_EQ(r.totals.mean_technique_length_s, x.mean_technique_length_s);
  EXPECT_EQ(r.totals.mean_coverage, x.mean_coverage);
  const auto &v = r.duration_quantiles.at(Technique::vibrato);
  EXPECT_EQ(v.min, x.vibrato_min);
  EXPECT_EQ(v.max, x.vibrato_max);
  EXPECT_EQ(v.median, x.vibrato_median);
  EXPECT_EQ(v.lower_fourth, x.vibrato_lower_fourth);
  EXPECT_EQ(v.upper_fourth, x.vibrato_upper_fourth);
  const auto &b = r.duration_quantiles.at(Technique::breathy);
  EXPECT_EQ(b.median, x.breathy_median);
  EXPECT_EQ(b.lower_fourth, x.breathy_lower_fourth);
  EXPECT_EQ(b.upper_fourth, x.breathy_upper_fourth);
  EXPECT_EQ(r.singers, x.singers);
  for (std::size_t s = 0; s < r.singers.size(); ++s)
    for (std::size_t c = 0; c < kVocabularySize; ++c) {
      const auto it = x.per_singer.find({r.singers[s], vocabulary()[c]});
      EXPECT_EQ(r.per_singer[s][c], it == x.per_singer.end() ? 0u : it->second);
    }
}

TEST(LetterValues, FiveDurations) {
  const std::vector<double> d = {0.5, 0.1, 0.4, 0.2, 0.3};
  const auto lv = letter_values(d);
  EXPECT_EQ(lv.median, 0.3);
  EXPECT_EQ(lv.lower_fourth, 0.2);
  EXPECT_EQ(lv.upper_fourth, 0.4);
  EXPECT_EQ(lv.min, 0.1);
  EXPECT_EQ(lv.max, 0.5);
}

TEST(LetterValues, SingleValue) {
  const std::vector<double> d = {0.4};
  const auto lv = letter_values(d);
  for (double v : {lv.min, lv.max, lv.median, lv.lower_fourth, lv.upper_fourth,
                   lv.lower_eighth, lv.upper_eighth})
    EXPECT_EQ(v, 0.4);
}

TEST(LetterValues, AllEqual) {
  const std::vector<double> d(7, 1.0);
  const auto lv = letter_values(d);
  EXPECT_EQ(lv.min, 1.0);
  EXPECT_EQ(lv.max, 1.0);
  EXPECT_EQ(lv.median, 1.0);
}

TEST(LetterValues, NestedOrdering) {
  nn::SplitMix64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(1 + rng.below(50));
    for (auto &x : d)
      x = rng.uniform(0, 5);
    const auto lv = letter_values(d);
    EXPECT_LE(lv.min, lv.lower_eighth);
    EXPECT_LE(lv.lower_eighth, lv.lower_fourth);
    EXPECT_LE(lv.lower_fourth, lv.median);
    EXPECT_LE(lv.median, lv.upper_fourth);
    EXPECT_LE(lv.upper_fourth, lv.upper_eighth);
    EXPECT_LE(lv.upper_eighth, lv.max);
  }
}

TEST(DurationQuantiles, AbsentClassIsAnError) {
  EXPECT_THROW(duration_quantiles(fixtures::stats_corpus(), Technique::rasp), StatsError);
}

TEST(PerSinger, RowsAndColumnSums) {
  Corpus c;
  c.tracks.push_back(make_track("t1", "A", 10,
                                {ev(Technique::scooping, 0, 1), ev(Technique::scooping, 2, 3),
                                 ev(Technique::scooping, 4, 5)}));
  c.tracks.push_back(make_track("t2", "B", 10, {}));
  const auto d = per_singer_distribution(c);
  ASSERT_EQ(d.singers, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(d.counts[0][static_cast<std::size_t>(Technique::scooping)], 3u);
  for (auto n : d.counts[1])
    EXPECT_EQ(n, 0u);
}

Corpus random_corpus(nn::SplitMix64 &rng) {
  Corpus c;
  const auto tracks = 1 + rng.below(6);
  for (std::size_t i = 0; i < tracks; ++i) {
    const double dur = rng.uniform(5, 30);
    std::vector<TechniqueEvent> events;
    const auto n = rng.below(10);
    for (std::size_t k = 0; k < n; ++k) {
      const double on = rng.uniform(0, dur - 1);
      const auto t = rng.below(8) == 0 ? Technique::unknown
                                       : vocabulary()[rng.below(kVocabularySize)];
      events.push_back({t, on, std::min(dur, on + rng.uniform(0.01, 3))});
    }
    c.tracks.push_back(make_track("t" + std::to_string(i),
                                  "s" + std::to_string(rng.below(3)), dur, events));
  }
  return c;
}

TEST(CorpusStats, Properties) {
  nn::SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    auto corpus = random_corpus(rng);
    const auto r = corpus_stats(corpus);
    // Column sums of per_singer equal the counts.
    for (std::size_t c = 0; c < kVocabularySize; ++c) {
      std::size_t sum = 0;
      for (const auto &row : r.per_singer)
        sum += row[c];
      EXPECT_EQ(sum, r.counts.at(vocabulary()[c]));
    }
    for (const auto &[id, cov] : r.coverage) {
      EXPECT_GE(cov, 0.0);
      EXPECT_LE(cov, 1.0);
    }
    std::size_t n = 0;
    double total = 0.0;
    for (Technique t : vocabulary()) {
      n += r.counts.at(t);
      total += r.total_duration_s.at(t);
    }
    EXPECT_DOUBLE_EQ(r.totals.mean_technique_length_s, n ? total / n : 0.0);
    // Permuting tracks changes nothing but the per-singer row order.
    std::reverse(corpus.tracks.begin(), corpus.tracks.end());
    const auto p = corpus_stats(corpus);
    EXPECT_EQ(p.counts, r.counts);
    EXPECT_EQ(p.coverage, r.coverage);
    for (Technique t : vocabulary())
      EXPECT_NEAR(p.total_duration_s.at(t), r.total_duration_s.at(t), 1e-9);
  }
}

TEST(CorpusStats, FullCoverage) {
  const auto r = corpus_stats(
      one_track(4, {ev(Technique::vibrato, 0, 2.5), ev(Technique::rasp, 2, 4)}));
  EXPECT_EQ(r.coverage.at("t"), 1.0);
}

TEST(RenderReport, FormatsAreDeterministic) {
  const auto r = corpus_stats(fixtures::stats_corpus());
  for (auto f : {ReportFormat::json, ReportFormat::csv, ReportFormat::text})
    EXPECT_EQ(render_report(r, f), render_report(r, f));
  EXPECT_FALSE(parse_report_format("xml"));
}

TEST(RenderReport, EmptyTrackJsonIsValid) {
  const auto text = render_report(corpus_stats(one_track(3, {})), ReportFormat::json);
  const auto j = nlohmann::json::parse(text);
  EXPECT_TRUE(j.is_object());
}

TEST(RenderReport, CsvHasOneRowPerClass) {
  const auto text = render_report(corpus_stats(fixtures::stats_corpus()), ReportFormat::csv);
  std::size_t lines = 0;
  for (char ch : text)
    lines += ch == '\n';
  EXPECT_EQ(lines, kVocabularySize + 1);
}

}  // namespace
}  // namespace stdet
